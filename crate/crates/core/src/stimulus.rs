//! Synthetic displays: squares, C-shapes, overlapping squares, outlines and
//! Pac-Man (Kanizsa) configurations, plus the paired A/B battery.
//!
//! All geometry is constructed for a vertical border at
//! `x0 = width / 2 + offset_px` and transposed afterwards when a horizontal
//! border is requested. Rasterization is hard-edged: a pixel belongs to a
//! shape iff its center lies inside it.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grid::Grid;

pub const BLACK: f64 = 0.0;
pub const GRAY: f64 = 0.5;
pub const WHITE: f64 = 1.0;

pub const DEFAULT_SIZE: usize = 400;
pub const DEFAULT_PX_PER_DEG: f64 = 32.0;

/// Converts visual degrees to whole pixels.
pub fn deg_to_px(deg: f64, px_per_deg: f64) -> Result<usize> {
    if !(deg >= 0.0) || !deg.is_finite() {
        return domain(format!("negative or non-finite angle {deg}"));
    }
    Ok((deg * px_per_deg).round() as usize)
}

/// Shape id written into [`Canvas::shape_ids`] for uncovered pixels.
pub const GROUND_ID: u8 = 0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CanvasMeta {
    /// Some part of a figure fell outside the canvas.
    pub clipped: bool,
    /// Painter's-order id of the shape covering each pixel (0 = ground).
    pub shape_ids: Option<Vec<u8>>,
    /// Id of the shape drawn last when shapes overlap.
    pub occluder_id: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub luminance: Grid,
    pub px_per_deg: f64,
    pub meta: CanvasMeta,
}

impl Canvas {
    pub fn uniform(width: usize, height: usize, lum: f64, px_per_deg: f64) -> Self {
        Self {
            luminance: Grid::filled(width, height, lum),
            px_per_deg,
            meta: CanvasMeta::default(),
        }
    }

    pub fn from_grid(luminance: Grid, px_per_deg: f64) -> Result<Self> {
        if luminance.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return domain("canvas luminance outside [0, 1]");
        }
        Ok(Self {
            luminance,
            px_per_deg,
            meta: CanvasMeta::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.luminance.width()
    }

    pub fn height(&self) -> usize {
        self.luminance.height()
    }

    pub fn shape_id(&self, x: usize, y: usize) -> u8 {
        self.meta
            .shape_ids
            .as_ref()
            .map_or(GROUND_ID, |ids| ids[y * self.width() + x])
    }

    pub fn transpose(&self) -> Canvas {
        let (w, h) = (self.width(), self.height());
        let ids = self.meta.shape_ids.as_ref().map(|ids| {
            let mut out = vec![GROUND_ID; ids.len()];
            for y in 0..h {
                for x in 0..w {
                    out[x * h + y] = ids[y * w + x];
                }
            }
            out
        });
        Canvas {
            luminance: self.luminance.transpose(),
            px_per_deg: self.px_per_deg,
            meta: CanvasMeta {
                shape_ids: ids,
                ..self.meta.clone()
            },
        }
    }

    pub fn mirror_x(&self) -> Canvas {
        let w = self.width();
        let ids = self.meta.shape_ids.as_ref().map(|ids| {
            let mut out = ids.clone();
            for (row_out, row_in) in out.chunks_mut(w).zip(ids.chunks(w)) {
                for x in 0..w {
                    row_out[x] = row_in[w - 1 - x];
                }
            }
            out
        });
        Canvas {
            luminance: self.luminance.mirror_x(),
            px_per_deg: self.px_per_deg,
            meta: CanvasMeta {
                shape_ids: ids,
                ..self.meta.clone()
            },
        }
    }

    /// Contrast inversion `1 - lum`; shape metadata is kept.
    pub fn inverted(&self) -> Canvas {
        Canvas {
            luminance: self.luminance.map(|v| 1.0 - v),
            px_per_deg: self.px_per_deg,
            meta: self.meta.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    CShape,
    OverlappingSquares,
    OutlinedSquare,
    PacmanDisplay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureSide {
    Left,
    Right,
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    #[serde(rename = "0")]
    None,
    /// Diagonal reflection (transpose): vertical borders become horizontal,
    /// left maps to up and right to down.
    #[serde(rename = "90")]
    Quarter,
}

/// Free geometry of the displays the experiments do not pin down.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayGeometry {
    /// C-shape notch depth as a fraction of the side, cut from the far side.
    pub notch_depth: f64,
    /// C-shape notch height as a fraction of the side.
    pub notch_height: f64,
    /// Horizontal shift of the occluded square, fraction of the side; 0.5
    /// centers it on the border.
    pub overlap_shift_x: f64,
    /// Vertical shift of the occluded square (negative is up), fraction of side.
    pub overlap_shift_y: f64,
    pub pacman_radius_deg: f64,
    pub pacman_mouth_deg: f64,
    pub pacman_spacing_deg: f64,
}

impl Default for DisplayGeometry {
    fn default() -> Self {
        Self {
            notch_depth: 0.5,
            notch_height: 0.4,
            overlap_shift_x: 0.5,
            overlap_shift_y: -0.25,
            pacman_radius_deg: 1.5,
            pacman_mouth_deg: 90.0,
            pacman_spacing_deg: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub shape_kind: ShapeKind,
    pub figure_side: FigureSide,
    pub figure_lum: f64,
    pub ground_lum: f64,
    /// Luminance of the occluded square in overlapping displays.
    pub other_lum: f64,
    pub size_deg: f64,
    pub offset_px: i64,
    pub rotation: Rotation,
    pub count: u8,
    pub outline_width_px: usize,
    pub width: usize,
    pub height: usize,
    pub px_per_deg: f64,
    pub geometry: DisplayGeometry,
}

impl Default for StimulusSpec {
    fn default() -> Self {
        Self {
            shape_kind: ShapeKind::Square,
            figure_side: FigureSide::Left,
            figure_lum: WHITE,
            ground_lum: BLACK,
            other_lum: BLACK,
            size_deg: 4.0,
            offset_px: 0,
            rotation: Rotation::None,
            count: 4,
            outline_width_px: 2,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            px_per_deg: DEFAULT_PX_PER_DEG,
            geometry: DisplayGeometry::default(),
        }
    }
}

impl StimulusSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("figure_lum", self.figure_lum),
            ("ground_lum", self.ground_lum),
            ("other_lum", self.other_lum),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.figure_lum == self.ground_lum {
            return domain("figure and ground luminance must differ");
        }
        if !(self.size_deg > 0.0) {
            return domain(format!("size_deg must be positive, got {}", self.size_deg));
        }
        if self.shape_kind == ShapeKind::PacmanDisplay && ![1, 2, 4].contains(&self.count) {
            return domain(format!("pacman count must be 1, 2 or 4, got {}", self.count));
        }
        if self.width == 0 || self.height == 0 || !(self.px_per_deg > 0.0) {
            return domain("empty canvas or non-positive calibration");
        }
        Ok(())
    }

    /// Side in the vertical construction frame and whether the result is
    /// transposed.
    fn frame(&self) -> (bool, bool) {
        let (left, flip) = match self.figure_side {
            FigureSide::Left => (true, false),
            FigureSide::Right => (false, false),
            FigureSide::Up => (true, true),
            FigureSide::Down => (false, true),
        };
        (left, flip ^ (self.rotation == Rotation::Quarter))
    }

    /// Frame dimensions before the optional transpose.
    fn frame_dims(&self) -> (usize, usize) {
        let (_, transpose) = self.frame();
        if transpose {
            (self.height, self.width)
        } else {
            (self.width, self.height)
        }
    }

    /// Border position (pixel boundary) along the frame's x axis.
    pub fn border_px(&self) -> i64 {
        let (w, _) = self.frame_dims();
        w as i64 / 2 + self.offset_px
    }
}

/// Axis-aligned pixel rectangle `[x0, x1) x [y0, y1)`, possibly off-canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Rect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Rect {
    fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn intersection_area(&self, o: &Rect) -> i64 {
        let w = (self.x1.min(o.x1) - self.x0.max(o.x0)).max(0);
        let h = (self.y1.min(o.y1) - self.y0.max(o.y0)).max(0);
        w * h
    }

    fn exceeds(&self, w: usize, h: usize) -> bool {
        self.x0 < 0 || self.y0 < 0 || self.x1 > w as i64 || self.y1 > h as i64
    }
}

/// Painter: shapes are drawn in order, later ones covering earlier ones.
struct Painter {
    lum: Grid,
    ids: Vec<u8>,
    clipped: bool,
}

impl Painter {
    fn new(w: usize, h: usize, ground: f64) -> Self {
        Self {
            lum: Grid::filled(w, h, ground),
            ids: vec![GROUND_ID; w * h],
            clipped: false,
        }
    }

    fn paint(&mut self, id: u8, lum: f64, inside: impl Fn(i64, i64) -> bool) {
        let w = self.lum.width();
        for y in 0..self.lum.height() {
            for x in 0..w {
                if inside(x as i64, y as i64) {
                    self.lum.set(x, y, lum);
                    self.ids[y * w + x] = id;
                }
            }
        }
    }

    fn rect(&mut self, id: u8, lum: f64, r: Rect) {
        self.clipped |= r.exceeds(self.lum.width(), self.lum.height());
        self.paint(id, lum, |x, y| r.contains(x, y));
    }

    fn finish(self, spec: &StimulusSpec, occluder: Option<u8>) -> Canvas {
        let (_, transpose) = spec.frame();
        let canvas = Canvas {
            luminance: self.lum,
            px_per_deg: spec.px_per_deg,
            meta: CanvasMeta {
                clipped: self.clipped,
                shape_ids: Some(self.ids),
                occluder_id: occluder,
            },
        };
        if transpose {
            canvas.transpose()
        } else {
            canvas
        }
    }
}

/// Square of side `side` abutting the border on the figure side, vertically
/// centered on the canvas.
fn figure_square(spec: &StimulusSpec, side: i64) -> Rect {
    let (left, _) = spec.frame();
    let (_, h) = spec.frame_dims();
    let x0 = spec.border_px();
    let y0 = h as i64 / 2 - side / 2;
    if left {
        Rect { x0: x0 - side, y0, x1: x0, y1: y0 + side }
    } else {
        Rect { x0, y0, x1: x0 + side, y1: y0 + side }
    }
}

fn side_px(spec: &StimulusSpec) -> Result<i64> {
    let side = deg_to_px(spec.size_deg, spec.px_per_deg)? as i64;
    if side == 0 {
        return domain("figure smaller than one pixel");
    }
    Ok(side)
}

/// Solid square on `figure_side` of a straight border through the canvas
/// center shifted by `offset_px`.
pub fn make_square(spec: &StimulusSpec) -> Result<Canvas> {
    if spec.shape_kind != ShapeKind::Square {
        return domain("make_square requires shape_kind = square");
    }
    spec.validate()?;
    let (w, h) = spec.frame_dims();
    let mut p = Painter::new(w, h, spec.ground_lum);
    p.rect(1, spec.figure_lum, figure_square(spec, side_px(spec)?));
    Ok(p.finish(spec, None))
}

/// Builds any display kind; squares are delegated to [`make_square`].
pub fn make_display(spec: &StimulusSpec) -> Result<Canvas> {
    spec.validate()?;
    let (w, h) = spec.frame_dims();
    let (left, _) = spec.frame();
    let g = &spec.geometry;
    match spec.shape_kind {
        ShapeKind::Square => make_square(spec),
        ShapeKind::CShape => {
            let side = side_px(spec)?;
            let sq = figure_square(spec, side);
            let depth = (g.notch_depth * side as f64).round() as i64;
            let height = (g.notch_height * side as f64).round() as i64;
            if depth <= 0 || height <= 0 || depth >= side || height >= side {
                return domain("C-shape notch must lie strictly inside the square");
            }
            let ny0 = (sq.y0 + sq.y1) / 2 - height / 2;
            let notch = if left {
                Rect { x0: sq.x0, y0: ny0, x1: sq.x0 + depth, y1: ny0 + height }
            } else {
                Rect { x0: sq.x1 - depth, y0: ny0, x1: sq.x1, y1: ny0 + height }
            };
            let mut p = Painter::new(w, h, spec.ground_lum);
            p.rect(1, spec.figure_lum, sq);
            p.paint(GROUND_ID, spec.ground_lum, |x, y| notch.contains(x, y));
            Ok(p.finish(spec, None))
        }
        ShapeKind::OverlappingSquares => {
            let side = side_px(spec)?;
            let occluder = figure_square(spec, side);
            let shift_x = (g.overlap_shift_x * side as f64).round() as i64;
            let shift_y = (g.overlap_shift_y * side as f64).round() as i64;
            // The occluded square sits behind the border on the far side.
            let occluded = if left {
                Rect {
                    x0: occluder.x0 + shift_x,
                    y0: occluder.y0 + shift_y,
                    x1: occluder.x1 + shift_x,
                    y1: occluder.y1 + shift_y,
                }
            } else {
                Rect {
                    x0: occluder.x0 - shift_x,
                    y0: occluder.y0 + shift_y,
                    x1: occluder.x1 - shift_x,
                    y1: occluder.y1 + shift_y,
                }
            };
            if occluder.intersection_area(&occluded) == 0 {
                return domain("overlapping squares do not overlap");
            }
            if spec.other_lum == spec.figure_lum {
                return domain("occluder and occluded squares need distinct luminance");
            }
            let mut p = Painter::new(w, h, spec.ground_lum);
            p.rect(1, spec.other_lum, occluded);
            p.rect(2, spec.figure_lum, occluder);
            Ok(p.finish(spec, Some(2)))
        }
        ShapeKind::OutlinedSquare => {
            let side = side_px(spec)?;
            let sq = figure_square(spec, side);
            let t = spec.outline_width_px as i64;
            if t == 0 || 2 * t >= side {
                return domain("outline width must be positive and below half the side");
            }
            let inner = Rect { x0: sq.x0 + t, y0: sq.y0 + t, x1: sq.x1 - t, y1: sq.y1 - t };
            let mut p = Painter::new(w, h, spec.ground_lum);
            p.rect(1, spec.figure_lum, sq);
            p.paint(GROUND_ID, spec.ground_lum, |x, y| inner.contains(x, y));
            Ok(p.finish(spec, None))
        }
        ShapeKind::PacmanDisplay => {
            let mut p = Painter::new(w, h, spec.ground_lum);
            for (i, pm) in pacmen(spec)?.iter().enumerate() {
                let r2 = pm.radius * pm.radius;
                p.clipped |= pm.cx - pm.radius < 0.0
                    || pm.cy - pm.radius < 0.0
                    || pm.cx + pm.radius > w as f64
                    || pm.cy + pm.radius > h as f64;
                p.paint(i as u8 + 1, spec.figure_lum, |x, y| {
                    let dx = x as f64 + 0.5 - pm.cx;
                    let dy = y as f64 + 0.5 - pm.cy;
                    dx * dx + dy * dy <= r2 && !pm.in_mouth(dx, dy)
                });
            }
            Ok(p.finish(spec, None))
        }
    }
}

/// One Pac-Man inducer in frame coordinates (continuous, pixel edges on
/// integers). The mouth is the wedge of half-angle `mouth / 2` around
/// `facing` (radians, image y axis pointing down).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pacman {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub facing: f64,
    pub mouth: f64,
}

impl Pacman {
    pub fn in_mouth(&self, dx: f64, dy: f64) -> bool {
        let ang = dy.atan2(dx);
        let mut diff = (ang - self.facing).rem_euclid(std::f64::consts::TAU);
        if diff > std::f64::consts::PI {
            diff -= std::f64::consts::TAU;
        }
        // Closed on both wedge edges so a 90 degree mouth lands exactly on
        // pixel boundaries.
        diff.abs() <= self.mouth / 2.0 + 1e-12
    }
}

/// Inducer layout: corners of a square of side `pacman_spacing_deg` around
/// the canvas center, mouths facing the center. `count = 1` keeps the
/// top-left inducer, `count = 2` the top row.
pub fn pacmen(spec: &StimulusSpec) -> Result<Vec<Pacman>> {
    if ![1, 2, 4].contains(&spec.count) {
        return domain(format!("pacman count must be 1, 2 or 4, got {}", spec.count));
    }
    let g = &spec.geometry;
    let (w, h) = spec.frame_dims();
    let half = deg_to_px(g.pacman_spacing_deg, spec.px_per_deg)? as f64 / 2.0;
    let radius = g.pacman_radius_deg * spec.px_per_deg;
    let mouth = g.pacman_mouth_deg.to_radians();
    let (mx, my) = ((w as i64 / 2 + spec.offset_px) as f64, (h / 2) as f64);
    let corners = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];
    Ok(corners[..spec.count as usize]
        .iter()
        .map(|&(sx, sy)| {
            let (cx, cy) = (mx + sx * half, my + sy * half);
            Pacman {
                cx,
                cy,
                radius,
                facing: (my - cy).atan2(mx - cx),
                mouth,
            }
        })
        .collect())
}

/// Battery column identity; see [`zhou_battery`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    SmallSquare,
    SmallSquareOpposite,
    LargeSquare,
    LargeSquareOpposite,
    CShape,
    OverlappingSquares,
}

impl PairKind {
    pub const ALL: [PairKind; 6] = [
        PairKind::SmallSquare,
        PairKind::SmallSquareOpposite,
        PairKind::LargeSquare,
        PairKind::LargeSquareOpposite,
        PairKind::CShape,
        PairKind::OverlappingSquares,
    ];

    pub fn is_square(self) -> bool {
        matches!(
            self,
            PairKind::SmallSquare
                | PairKind::SmallSquareOpposite
                | PairKind::LargeSquare
                | PairKind::LargeSquareOpposite
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            PairKind::SmallSquare => "small_square",
            PairKind::SmallSquareOpposite => "small_square_opposite",
            PairKind::LargeSquare => "large_square",
            PairKind::LargeSquareOpposite => "large_square_opposite",
            PairKind::CShape => "c_shape",
            PairKind::OverlappingSquares => "overlapping_squares",
        }
    }
}

/// `A` has the figure left of (above) the border, `B` right of (below) it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

#[derive(Clone, Debug)]
pub struct BatteryItem {
    pub pair_id: usize,
    pub kind: PairKind,
    pub role: Role,
    pub spec: StimulusSpec,
    pub canvas: Canvas,
}

/// Sizes of the battery figures in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryGeometry {
    pub small_deg: f64,
    pub large_deg: f64,
    pub c_shape_deg: f64,
    pub overlap_deg: f64,
}

impl Default for BatteryGeometry {
    fn default() -> Self {
        Self {
            small_deg: 4.0,
            large_deg: 8.0,
            c_shape_deg: 4.0,
            overlap_deg: 4.0,
        }
    }
}

/// Six A/B pairs for one border orientation. `light_left` fixes the contrast
/// polarity of the odd-numbered columns (light on the left of a vertical
/// border / above a horizontal one); columns 2 and 4 use the opposite
/// polarity.
///
/// Within a pair, `B` is the mirror image of `A` with the two luminances that
/// meet at the border exchanged, so the strip around the border is identical.
pub fn zhou_battery(
    horizontal: bool,
    light_left: bool,
    base: &StimulusSpec,
    sizes: &BatteryGeometry,
) -> Result<Vec<BatteryItem>> {
    let mut items = Vec::with_capacity(12);
    for (pair_id, kind) in PairKind::ALL.into_iter().enumerate() {
        let light = match kind {
            PairKind::SmallSquareOpposite | PairKind::LargeSquareOpposite => !light_left,
            _ => light_left,
        };
        let (near, far) = if light { (WHITE, BLACK) } else { (BLACK, WHITE) };
        for role in [Role::A, Role::B] {
            let mut spec = StimulusSpec {
                figure_side: match (role, horizontal) {
                    (Role::A, false) => FigureSide::Left,
                    (Role::B, false) => FigureSide::Right,
                    (Role::A, true) => FigureSide::Up,
                    (Role::B, true) => FigureSide::Down,
                },
                rotation: Rotation::None,
                offset_px: 0,
                ..base.clone()
            };
            // `near` is the luminance left of / above the border.
            let (left_lum, right_lum) = (near, far);
            let (fig, other) = match role {
                Role::A => (left_lum, right_lum),
                Role::B => (right_lum, left_lum),
            };
            match kind {
                PairKind::SmallSquare | PairKind::SmallSquareOpposite => {
                    spec.shape_kind = ShapeKind::Square;
                    spec.size_deg = sizes.small_deg;
                    spec.figure_lum = fig;
                    spec.ground_lum = other;
                }
                PairKind::LargeSquare | PairKind::LargeSquareOpposite => {
                    spec.shape_kind = ShapeKind::Square;
                    spec.size_deg = sizes.large_deg;
                    spec.figure_lum = fig;
                    spec.ground_lum = other;
                }
                PairKind::CShape => {
                    spec.shape_kind = ShapeKind::CShape;
                    spec.size_deg = sizes.c_shape_deg;
                    spec.figure_lum = fig;
                    spec.ground_lum = other;
                }
                PairKind::OverlappingSquares => {
                    spec.shape_kind = ShapeKind::OverlappingSquares;
                    spec.size_deg = sizes.overlap_deg;
                    spec.figure_lum = fig;
                    spec.other_lum = other;
                    spec.ground_lum = GRAY;
                }
            }
            let canvas = make_display(&spec)?;
            items.push(BatteryItem {
                pair_id,
                kind,
                role,
                spec,
                canvas,
            });
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: FigureSide, fig: f64, gnd: f64) -> StimulusSpec {
        StimulusSpec {
            figure_side: side,
            figure_lum: fig,
            ground_lum: gnd,
            ..StimulusSpec::default()
        }
    }

    #[test]
    fn deg_to_px_examples() {
        assert_eq!(deg_to_px(1.0, 32.0).unwrap(), 32);
        assert_eq!(deg_to_px(0.0, 32.0).unwrap(), 0);
        assert_eq!(deg_to_px(4.0, 32.0).unwrap(), 4 * 32);
        assert!(deg_to_px(-0.1, 32.0).is_err());
    }

    #[test]
    fn left_square_geometry() {
        let c = make_square(&square(FigureSide::Left, WHITE, BLACK)).unwrap();
        assert_eq!((c.width(), c.height()), (400, 400));
        // 128 px square occupying x in [72, 200), y in [136, 264).
        assert_eq!(c.luminance.get(199, 200), WHITE);
        assert_eq!(c.luminance.get(72, 136), WHITE);
        assert_eq!(c.luminance.get(71, 200), BLACK);
        assert_eq!(c.luminance.get(200, 200), BLACK);
        assert_eq!(c.luminance.get(150, 135), BLACK);
        assert_eq!(c.luminance.get(150, 264), BLACK);
        assert_eq!(c.luminance.sum(), 128.0 * 128.0);
        assert!(!c.meta.clipped);
    }

    #[test]
    fn right_square_is_mirror_of_left() {
        let l = make_square(&square(FigureSide::Left, WHITE, BLACK)).unwrap();
        let r = make_square(&square(FigureSide::Right, WHITE, BLACK)).unwrap();
        assert_eq!(r.luminance, l.luminance.mirror_x());
        // Central-row profile within 16 px of the border is the reflection.
        for d in 0..16 {
            assert_eq!(l.luminance.get(199 - d, 200), r.luminance.get(200 + d, 200));
        }
    }

    #[test]
    fn equal_luminance_rejected() {
        assert!(make_square(&square(FigureSide::Left, GRAY, GRAY)).is_err());
        let bad_count = StimulusSpec {
            shape_kind: ShapeKind::PacmanDisplay,
            count: 3,
            ..StimulusSpec::default()
        };
        assert!(make_display(&bad_count).is_err());
    }

    #[test]
    fn oversized_square_is_clipped() {
        let spec = StimulusSpec {
            size_deg: 8.0,
            ..StimulusSpec::default()
        };
        let c = make_square(&spec).unwrap();
        assert!(c.meta.clipped);
        assert_eq!(c.luminance.get(0, 200), WHITE);
    }

    #[test]
    fn outlined_square_interior_is_ground() {
        let spec = StimulusSpec {
            shape_kind: ShapeKind::OutlinedSquare,
            outline_width_px: 2,
            ..StimulusSpec::default()
        };
        let c = make_display(&spec).unwrap();
        assert_eq!(c.luminance.get(136, 200), BLACK);
        assert_eq!(c.luminance.get(199, 200), WHITE);
        assert_eq!(c.luminance.get(198, 200), WHITE);
        assert_eq!(c.luminance.get(197, 200), BLACK);
        // Perimeter ring of width 2 on a 128 px square.
        assert_eq!(c.luminance.sum(), (128 * 128 - 124 * 124) as f64);
    }

    #[test]
    fn overlap_ground_truth_occluder() {
        let spec = StimulusSpec {
            shape_kind: ShapeKind::OverlappingSquares,
            figure_lum: WHITE,
            other_lum: BLACK,
            ground_lum: GRAY,
            ..StimulusSpec::default()
        };
        let c = make_display(&spec).unwrap();
        assert_eq!(c.meta.occluder_id, Some(2));
        // Border at x = 200 separates occluder (left) from occluded (right).
        assert_eq!(c.shape_id(199, 200), 2);
        assert_eq!(c.shape_id(200, 200), 1);
        assert_eq!(c.luminance.get(199, 200), WHITE);
        assert_eq!(c.luminance.get(200, 200), BLACK);
        // Occluded square is hidden where the occluder is drawn.
        assert_eq!(c.shape_id(150, 150), 2);

        let disjoint = StimulusSpec {
            geometry: DisplayGeometry {
                overlap_shift_x: 1.0,
                ..DisplayGeometry::default()
            },
            ..spec
        };
        assert!(make_display(&disjoint).is_err());
    }

    #[test]
    fn kanizsa_mouths_face_center() {
        let spec = StimulusSpec {
            shape_kind: ShapeKind::PacmanDisplay,
            count: 4,
            ..StimulusSpec::default()
        };
        let c = make_display(&spec).unwrap();
        // Disc centers at (136, 136), (264, 136), (136, 264), (264, 264).
        // Inside each mouth (toward the center) the ground shows through.
        assert_eq!(c.luminance.get(150, 150), BLACK);
        assert_eq!(c.luminance.get(250, 250), BLACK);
        // Body pixels just outside the mouth wedge are white.
        assert_eq!(c.luminance.get(150, 130), WHITE);
        assert_eq!(c.luminance.get(130, 150), WHITE);
        // The illusory square interior is ground.
        assert_eq!(c.luminance.get(200, 200), BLACK);
        // Mouth edges lie on pixel boundaries: row 135 body, row 136 mouth.
        for x in 137..180 {
            assert_eq!(c.luminance.get(x, 135), WHITE, "x={x}");
            assert_eq!(c.luminance.get(x, 136), BLACK, "x={x}");
        }
        for n in [1u8, 2] {
            let c = make_display(&StimulusSpec { count: n, ..spec.clone() }).unwrap();
            let discs = c.meta.shape_ids.as_ref().unwrap().iter().copied().max().unwrap();
            assert_eq!(discs, n);
        }
    }

    #[test]
    fn battery_pairs_share_central_strip() {
        let base = StimulusSpec::default();
        let items = zhou_battery(false, true, &base, &BatteryGeometry::default()).unwrap();
        assert_eq!(items.len(), 12);
        for pair in items.chunks(2) {
            let (a, b) = (&pair[0].canvas, &pair[1].canvas);
            assert_eq!(pair[0].role, Role::A);
            for y in 184..216 {
                for x in 184..216 {
                    assert_eq!(a.luminance.get(x, y), b.luminance.get(x, y), "{:?}", pair[0].kind);
                }
            }
            // B is A mirrored with the two border luminances exchanged.
            let swapped = a.mirror_x().luminance.map(|v| if v == GRAY { GRAY } else { 1.0 - v });
            assert_eq!(b.luminance, swapped, "{:?}", pair[0].kind);
        }
        assert!(items[4].canvas.meta.clipped, "large square must be incomplete");
    }

    #[test]
    fn horizontal_battery_is_transpose() {
        let base = StimulusSpec::default();
        let g = BatteryGeometry::default();
        let v = zhou_battery(false, false, &base, &g).unwrap();
        let h = zhou_battery(true, false, &base, &g).unwrap();
        for (a, b) in v.iter().zip(&h) {
            assert_eq!(b.canvas.luminance, a.canvas.luminance.transpose());
        }
    }

    #[test]
    fn only_calibrated_levels() {
        let base = StimulusSpec::default();
        for item in zhou_battery(false, true, &base, &BatteryGeometry::default()).unwrap() {
            assert!(item
                .canvas
                .luminance
                .data()
                .iter()
                .all(|v| [BLACK, GRAY, WHITE].contains(v)));
        }
    }
}
