//! Kernel construction for every cell class and the shared correlation
//! engine.
//!
//! Orientation follows the Gabor convention: `theta` is the direction of the
//! kernel's modulation axis, so `theta = 0` prefers vertical contours and
//! `theta = pi/2` horizontal ones. Axis-aligned kernels carry a separable
//! decomposition that the engine uses in place of the dense weights.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, BosError, Result};
use crate::grid::Grid;

/// Sum tolerance for balanced kernels.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    VentralEdge,
    VentralBorder,
    DorsalEdge,
    DorsalBorder,
    MtOn,
    MtOff,
    Pooling,
}

impl CellClass {
    pub fn name(self) -> &'static str {
        match self {
            CellClass::VentralEdge => "ventral_edge",
            CellClass::VentralBorder => "ventral_border",
            CellClass::DorsalEdge => "dorsal_edge",
            CellClass::DorsalBorder => "dorsal_border",
            CellClass::MtOn => "mt_on",
            CellClass::MtOff => "mt_off",
            CellClass::Pooling => "pooling",
        }
    }

    fn balanced(self) -> bool {
        self != CellClass::Pooling
    }
}

/// `Pos` is light-dark for border kernels (light on the negative side of the
/// modulation axis) and light-bar / on-center for bar kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Pos => 1.0,
            Polarity::Neg => -1.0,
        }
    }
}

/// One rank-1 component `col (x) row` of a kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableTerm {
    pub col: Vec<f64>,
    pub row: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub weights: Grid,
    pub scale_index: usize,
    pub orientation: f64,
    pub polarity: Polarity,
    pub cell_class: CellClass,
    separable: Vec<SeparableTerm>,
}

impl Kernel {
    /// Dense kernel without a separable decomposition.
    pub fn dense(weights: Grid, cell_class: CellClass) -> Result<Self> {
        if weights.width() % 2 == 0 || weights.height() % 2 == 0 {
            return domain("kernel dimensions must be odd");
        }
        Ok(Self {
            weights,
            scale_index: 0,
            orientation: 0.0,
            polarity: Polarity::Pos,
            cell_class,
            separable: Vec::new(),
        })
    }

    fn from_terms(terms: Vec<SeparableTerm>, cell_class: CellClass) -> Self {
        let terms = merge_terms(terms);
        let h = terms[0].col.len();
        let w = terms[0].row.len();
        let mut weights = Grid::zeros(w, h);
        for t in &terms {
            for (y, c) in t.col.iter().enumerate() {
                for (x, r) in t.row.iter().enumerate() {
                    let v = weights.get(x, y) + c * r;
                    weights.set(x, y, v);
                }
            }
        }
        Self {
            weights,
            scale_index: 0,
            orientation: 0.0,
            polarity: Polarity::Pos,
            cell_class,
            separable: terms,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.width()
    }

    pub fn height(&self) -> usize {
        self.weights.height()
    }

    pub fn sum(&self) -> f64 {
        self.weights.sum()
    }

    pub fn positive_sum(&self) -> f64 {
        self.weights.data().iter().filter(|v| **v > 0.0).sum()
    }

    pub fn is_separable(&self) -> bool {
        !self.separable.is_empty()
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.separable
    }

    /// Multiplies all weights (and the separable factors) by `k`.
    pub fn scaled(mut self, k: f64) -> Self {
        self.weights.map_inplace(|v| v * k);
        for t in &mut self.separable {
            for v in &mut t.row {
                *v *= k;
            }
        }
        self
    }

    /// Rescales so the positive weights sum to one; the largest response to
    /// any input in `[0, 1]` is then at most one.
    fn unit_positive(self) -> Self {
        let p = self.positive_sum();
        self.scaled(1.0 / p)
    }

    fn negated(self) -> Self {
        let mut k = self.scaled(-1.0);
        k.polarity = match k.polarity {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        };
        k
    }

    fn checked(self) -> Self {
        if self.cell_class.balanced() {
            let s = self.sum();
            assert!(
                s.abs() < BALANCE_TOL,
                "{} kernel is unbalanced: sum = {s:e}",
                self.cell_class.name()
            );
        }
        self
    }

    fn tagged(mut self, scale_index: usize, orientation: f64, polarity: Polarity) -> Self {
        self.scale_index = scale_index;
        self.orientation = orientation;
        self.polarity = polarity;
        self
    }

    /// Plain-text dump: a `#` header line, then one row of weights per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# class={} scale={} orientation={:.6} polarity={:?} width={} height={}\n",
            self.cell_class.name(),
            self.scale_index,
            self.orientation,
            self.polarity,
            self.width(),
            self.height()
        );
        for y in 0..self.height() {
            let row: Vec<String> = self.weights.row(y).iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the weight grid of [`Kernel::to_text`] output.
    pub fn weights_from_text(text: &str) -> Result<Grid> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| BosError::Domain(format!("bad kernel weight: {e}")))?;
            rows.push(row);
        }
        let w = rows.first().map_or(0, Vec::len);
        if w == 0 || rows.iter().any(|r| r.len() != w) {
            return domain("ragged or empty kernel text");
        }
        let h = rows.len();
        Ok(Grid::from_vec(w, h, rows.into_iter().flatten().collect()))
    }
}

/// Collapses terms sharing a row or column profile into one term.
fn merge_terms(terms: Vec<SeparableTerm>) -> Vec<SeparableTerm> {
    let mut out: Vec<SeparableTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        if let Some(m) = out.iter_mut().find(|m| m.col == t.col) {
            m.row.iter_mut().zip(&t.row).for_each(|(a, b)| *a += b);
        } else if let Some(m) = out.iter_mut().find(|m| m.row == t.row) {
            m.col.iter_mut().zip(&t.col).for_each(|(a, b)| *a += b);
        } else {
            out.push(t);
        }
    }
    out
}

/// Rounds a pixel size up to the next odd integer.
pub fn odd_size(px: usize) -> usize {
    if px % 2 == 0 {
        px + 1
    } else {
        px
    }
}

/// Degrees to an odd kernel size: nearest integer, bumped up when even.
pub fn odd_px(deg: f64, px_per_deg: f64) -> usize {
    odd_size((deg * px_per_deg).round().max(1.0) as usize)
}

fn axis_aligned(theta: f64) -> Option<bool> {
    let t = theta.rem_euclid(PI);
    if t.abs() < 1e-12 || (PI - t).abs() < 1e-12 {
        Some(false)
    } else if (t - FRAC_PI_2).abs() < 1e-12 {
        Some(true)
    } else {
        None
    }
}

fn offsets(n: usize) -> impl Iterator<Item = f64> + Clone {
    let h = (n / 2) as i64;
    (-h..=h).map(|v| v as f64)
}

fn gauss(v: f64, mu: f64, sigma: f64) -> f64 {
    let d = v - mu;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Profile of a Gaussian across `n` samples, normalized to unit sum.
fn unit_profile(n: usize, mu: f64, sigma: f64) -> Vec<f64> {
    let v: Vec<f64> = offsets(n).map(|t| gauss(t, mu, sigma)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Places an across-axis profile and an along-axis profile on the kernel
/// grid: for a vertical contour (`horizontal == false`) the across axis is x.
fn oriented_term(across: Vec<f64>, along: Vec<f64>, horizontal: bool) -> SeparableTerm {
    if horizontal {
        SeparableTerm { col: across, row: along }
    } else {
        SeparableTerm { col: along, row: across }
    }
}

fn checked_size(rf_px: usize) -> Result<usize> {
    if rf_px < 3 {
        return domain(format!("receptive field of {rf_px} px is below the 3 px minimum"));
    }
    if rf_px % 2 == 0 {
        log::warn!("even receptive field {rf_px} px rounded up to {}", rf_px + 1);
    }
    Ok(odd_size(rf_px))
}

/// Gabor parameters shared by the ventral border cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    /// Aspect ratio `r`.
    pub aspect: f64,
    /// Wavelength as a fraction of the receptive field.
    pub wavelength_rf: f64,
    /// Envelope sigma as a fraction of the receptive field.
    pub sigma_rf: f64,
    /// Lower bound on the wavelength in pixels, keeping the carrier above
    /// the sampling limit at small receptive fields.
    pub min_wavelength_px: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            aspect: 0.5,
            wavelength_rf: 0.2,
            sigma_rf: 0.25,
            min_wavelength_px: 4.0,
        }
    }
}

/// Samples `exp(-(x'^2 + r^2 y'^2) / 2 sigma^2) cos(2 pi x' / lambda + psi)` on
/// an `rf_px` square grid, then rescales to unit positive mass.
pub fn gabor_kernel(rf_px: usize, theta: f64, psi: f64) -> Result<Kernel> {
    gabor_kernel_with(rf_px, theta, psi, &GaborParams::default())
}

pub fn gabor_kernel_with(rf_px: usize, theta: f64, psi: f64, p: &GaborParams) -> Result<Kernel> {
    let n = checked_size(rf_px)?;
    let sigma = p.sigma_rf * n as f64;
    let lambda = (p.wavelength_rf * n as f64).max(p.min_wavelength_px);
    let r = p.aspect;
    let carrier = |xp: f64| gauss(xp, 0.0, sigma) * (2.0 * PI * xp / lambda + psi).cos();
    let envelope = |yp: f64| gauss(r * yp, 0.0, sigma);
    let polarity = if psi >= 0.0 { Polarity::Pos } else { Polarity::Neg };
    let kernel = match axis_aligned(theta) {
        Some(horizontal) => {
            let across: Vec<f64> = offsets(n).map(carrier).collect();
            let along: Vec<f64> = offsets(n).map(envelope).collect();
            // For theta = pi/2, y' = -x; the envelope is even so the sign drops.
            Kernel::from_terms(vec![oriented_term(across, along, horizontal)], CellClass::VentralBorder)
        }
        None => {
            let (s, c) = theta.sin_cos();
            let h = (n / 2) as f64;
            let weights = Grid::from_fn(n, n, |ix, iy| {
                let (x, y) = (ix as f64 - h, iy as f64 - h);
                let xp = x * c + y * s;
                let yp = -x * s + y * c;
                carrier(xp) * envelope(yp)
            });
            Kernel::dense(weights, CellClass::VentralBorder)?
        }
    };
    let kernel = kernel.unit_positive().tagged(0, theta, polarity);
    // Only the odd-phase Gabors are balanced.
    if (psi.abs() - FRAC_PI_2).abs() < 1e-12 {
        Ok(kernel.checked())
    } else {
        Ok(kernel)
    }
}

/// Center and surround widths of the ventral bar (edge) cells, as fractions
/// of the receptive field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DogParams {
    pub center_sigma_rf: f64,
    pub surround_ratio: f64,
    pub along_sigma_rf: f64,
}

impl Default for DogParams {
    fn default() -> Self {
        Self {
            center_sigma_rf: 0.125,
            surround_ratio: 2.0,
            along_sigma_rf: 0.5,
        }
    }
}

/// Center-surround difference of Gaussians elongated along the preferred
/// contour. `Pos` is on-center (light bar), `Neg` off-center (dark bar).
fn bar_dog(
    n: usize,
    horizontal: bool,
    center_sigma: f64,
    surround_sigma: f64,
    along_sigma: f64,
    class: CellClass,
) -> Kernel {
    let along = unit_profile(n, 0.0, along_sigma);
    let center = unit_profile(n, 0.0, center_sigma);
    let surround: Vec<f64> = unit_profile(n, 0.0, surround_sigma).into_iter().map(|v| -v).collect();
    Kernel::from_terms(
        vec![
            oriented_term(center, along.clone(), horizontal),
            oriented_term(surround, along, horizontal),
        ],
        class,
    )
}

fn orientation_of(theta: f64) -> Result<bool> {
    axis_aligned(theta).map_or_else(
        || domain(format!("orientation {theta} rad is not horizontal or vertical")),
        Ok,
    )
}

/// Ventral bar-selective simple cell.
pub fn dog_edge_kernel(rf_px: usize, theta: f64, polarity: Polarity) -> Result<Kernel> {
    dog_edge_kernel_with(rf_px, theta, polarity, &DogParams::default())
}

pub fn dog_edge_kernel_with(rf_px: usize, theta: f64, polarity: Polarity, p: &DogParams) -> Result<Kernel> {
    let n = checked_size(rf_px)?;
    let horizontal = orientation_of(theta)?;
    let c = p.center_sigma_rf * n as f64;
    let k = bar_dog(
        n,
        horizontal,
        c,
        c * p.surround_ratio,
        p.along_sigma_rf * n as f64,
        CellClass::VentralEdge,
    )
    .unit_positive()
    .tagged(0, theta, Polarity::Pos);
    let k = if polarity == Polarity::Neg { k.negated() } else { k };
    Ok(k.checked())
}

pub const DORSAL_RF_DEG: [f64; 4] = [0.9, 1.33, 1.76, 2.2];
pub const DORSAL_WIDTH_RATIO: f64 = 2.5;
pub const DORSAL_AR_FACTOR: [f64; 4] = [10.0, 9.0, 8.0, 7.0];
pub const MT_RF_DEG: [f64; 4] = [2.5, 3.26, 4.02, 4.78];
pub const MT_ASPECT: [f64; 4] = [33.0, 52.0, 80.0, 126.6];
pub const MT_WIDTH_RATIO: [f64; 4] = [3.3, 5.2, 8.0, 12.6];
pub const VENTRAL_RF_DEG: [f64; 4] = [0.4, 0.6, 0.8, 1.0];

pub fn dorsal_aspect(scale: usize) -> f64 {
    DORSAL_WIDTH_RATIO * DORSAL_AR_FACTOR[scale]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DorsalClass {
    Edge,
    Border,
}

fn check_scale(scale: usize) -> Result<()> {
    if scale > 3 {
        return domain(format!("scale index {scale} outside 0..=3"));
    }
    Ok(())
}

/// Elongated dorsal simple cell with `sigma_along = RF`, `sigma_across =
/// RF / AR`. The edge class is a center-surround DoG (surround `WR` times
/// wider); the border class is two opposite-sign Gaussians offset by one
/// sigma to either side of the axis. Positive polarity.
pub fn dorsal_simple_kernel(scale: usize, theta: f64, class: DorsalClass, px_per_deg: f64) -> Result<Kernel> {
    check_scale(scale)?;
    let horizontal = orientation_of(theta)?;
    let n = odd_px(DORSAL_RF_DEG[scale], px_per_deg);
    let rf = n as f64;
    let across_sigma = rf / dorsal_aspect(scale);
    let k = match class {
        DorsalClass::Edge => bar_dog(
            n,
            horizontal,
            across_sigma,
            across_sigma * DORSAL_WIDTH_RATIO,
            rf,
            CellClass::DorsalEdge,
        ),
        DorsalClass::Border => {
            let along = unit_profile(n, 0.0, rf);
            let light = unit_profile(n, -across_sigma, across_sigma);
            let dark: Vec<f64> = unit_profile(n, across_sigma, across_sigma).into_iter().map(|v| -v).collect();
            Kernel::from_terms(
                vec![
                    oriented_term(light, along.clone(), horizontal),
                    oriented_term(dark, along, horizontal),
                ],
                CellClass::DorsalBorder,
            )
        }
    };
    Ok(k.unit_positive().tagged(scale, theta, Polarity::Pos).checked())
}

/// Shape parameters of the MT off-center kernel's flanks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtOffParams {
    /// Flank centers at `+- flank_offset * RF` across the axis.
    pub flank_offset: f64,
    /// Flank sigma as a fraction of RF.
    pub flank_sigma: f64,
}

impl Default for MtOffParams {
    fn default() -> Self {
        Self {
            flank_offset: 0.4,
            flank_sigma: 0.05,
        }
    }
}

pub fn mt_rf_px(scale: usize, px_per_deg: f64) -> usize {
    odd_px(MT_RF_DEG[scale], px_per_deg)
}

/// On-center MT: narrow excitatory strip (`sigma = RF / AR`) minus a
/// surround `WR` times wider, both with `sigma_along = RF`.
pub fn mt_on_kernel(scale: usize, phi: f64, px_per_deg: f64) -> Result<Kernel> {
    check_scale(scale)?;
    let horizontal = orientation_of(phi)?;
    let n = mt_rf_px(scale, px_per_deg);
    let rf = n as f64;
    let center = rf / MT_ASPECT[scale];
    let k = bar_dog(n, horizontal, center, center * MT_WIDTH_RATIO[scale], rf, CellClass::MtOn);
    Ok(k.unit_positive().tagged(scale, phi, Polarity::Pos).checked())
}

pub fn mt_off_kernel(scale: usize, phi: f64, px_per_deg: f64) -> Result<Kernel> {
    mt_off_kernel_with(scale, phi, px_per_deg, &MtOffParams::default())
}

/// Off-center MT: two excitatory flanks and one inhibitory center Gaussian
/// of width `WR * RF / AR`.
pub fn mt_off_kernel_with(scale: usize, phi: f64, px_per_deg: f64, p: &MtOffParams) -> Result<Kernel> {
    check_scale(scale)?;
    let horizontal = orientation_of(phi)?;
    let n = mt_rf_px(scale, px_per_deg);
    let rf = n as f64;
    let along = unit_profile(n, 0.0, rf);
    let off = p.flank_offset * rf;
    let fs = p.flank_sigma * rf;
    let half = |v: Vec<f64>| v.into_iter().map(|x| 0.5 * x).collect::<Vec<_>>();
    let center_sigma = MT_WIDTH_RATIO[scale] * rf / MT_ASPECT[scale];
    let center: Vec<f64> = unit_profile(n, 0.0, center_sigma).into_iter().map(|v| -v).collect();
    let k = Kernel::from_terms(
        vec![
            oriented_term(half(unit_profile(n, -off, fs)), along.clone(), horizontal),
            oriented_term(half(unit_profile(n, off, fs)), along.clone(), horizontal),
            oriented_term(center, along, horizontal),
        ],
        CellClass::MtOff,
    );
    Ok(k.unit_positive().tagged(scale, phi, Polarity::Pos).checked())
}

/// Isotropic Gaussian pooling kernel with unit sum, truncated at
/// `truncate * sigma`.
pub fn gaussian_pool_kernel(sigma: f64, truncate: f64) -> Result<Kernel> {
    if !(sigma > 0.0) {
        return domain("pooling sigma must be positive");
    }
    let n = 2 * (truncate * sigma).ceil().max(1.0) as usize + 1;
    let p = unit_profile(n, 0.0, sigma);
    Ok(Kernel::from_terms(vec![SeparableTerm { col: p.clone(), row: p }], CellClass::Pooling))
}

#[inline]
pub fn half_wave(x: f64) -> f64 {
    x.max(0.0)
}

/// Correlation (no kernel flip) with replicate padding, same-size output.
pub fn convolve(map: &Grid, kernel: &Kernel) -> Result<Grid> {
    let (kw, kh) = (kernel.width(), kernel.height());
    if kw > map.width() || kh > map.height() {
        return Err(BosError::KernelTooLarge {
            kernel_w: kw,
            kernel_h: kh,
            map_w: map.width(),
            map_h: map.height(),
        });
    }
    if kernel.is_separable() {
        Ok(convolve_separable(map, kernel.terms()))
    } else {
        Ok(convolve_dense(map, &kernel.weights))
    }
}

/// Direct double loop, parallel over output rows.
pub fn convolve_dense(map: &Grid, weights: &Grid) -> Grid {
    let (w, h) = (map.width(), map.height());
    let (kw, kh) = (weights.width(), weights.height());
    let (cx, cy) = ((kw / 2) as isize, (kh / 2) as isize);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..kh {
                let yy = y as isize + j as isize - cy;
                for i in 0..kw {
                    let xx = x as isize + i as isize - cx;
                    acc += weights.get(i, j) * map.get_clamped(xx, yy);
                }
            }
            *o = acc;
        }
    });
    Grid::from_vec(w, h, out)
}

/// Taps below this fraction of the largest magnitude are skipped.
const TAP_CUTOFF: f64 = 1e-18;

/// Nonnegligible tap window `lo..hi` of a profile.
fn tap_window(taps: &[f64]) -> (usize, usize) {
    let peak = taps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep = |v: &f64| v.abs() > TAP_CUTOFF * peak;
    match taps.iter().position(keep) {
        Some(lo) => (lo, taps.len() - taps.iter().rev().position(keep).unwrap()),
        None => (0, 0),
    }
}

fn correlate_line(src: &[f64], taps: &[f64], out: &mut [f64], pad: &mut Vec<f64>) {
    let n = src.len();
    let c = taps.len() / 2;
    pad.clear();
    pad.extend(std::iter::repeat(src[0]).take(c));
    pad.extend_from_slice(src);
    pad.extend(std::iter::repeat(src[n - 1]).take(c));
    let (lo, hi) = tap_window(taps);
    let taps = &taps[lo..hi];
    for (x, o) in out.iter_mut().enumerate() {
        *o = taps.iter().zip(&pad[x + lo..x + hi]).map(|(k, v)| k * v).sum();
    }
}

fn convolve_separable(map: &Grid, terms: &[SeparableTerm]) -> Grid {
    let (w, h) = (map.width(), map.height());
    let mut total = vec![0.0; w * h];
    for t in terms {
        // Horizontal pass over rows.
        let mut tmp = vec![0.0; w * h];
        tmp.par_chunks_mut(w).enumerate().for_each_init(Vec::new, |pad, (y, out)| {
            correlate_line(map.row(y), &t.row, out, pad);
        });
        // Vertical pass, on the transpose so lines are contiguous.
        let tmp_t = Grid::from_vec(w, h, tmp).transpose();
        let mut res_t = vec![0.0; w * h];
        res_t.par_chunks_mut(h).enumerate().for_each_init(Vec::new, |pad, (x, out)| {
            correlate_line(tmp_t.row(x), &t.col, out, pad);
        });
        for x in 0..w {
            for y in 0..h {
                total[y * w + x] += res_t[x * h + y];
            }
        }
    }
    Grid::from_vec(w, h, total)
}

/// Dumps a set of kernels as `<class>_s<scale>_<orientation>_<polarity>.txt`.
pub fn dump_kernels(kernels: &[Kernel], dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for k in kernels {
        let mut name = String::new();
        let orient = if axis_aligned(k.orientation) == Some(true) { "h" } else { "v" };
        let _ = write!(
            name,
            "{}_s{}_{}_{}.txt",
            k.cell_class.name(),
            k.scale_index,
            orient,
            if k.polarity == Polarity::Pos { "pos" } else { "neg" }
        );
        let path = dir.join(name);
        std::fs::write(&path, k.to_text())?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize, at: usize, left: f64, right: f64) -> Grid {
        Grid::from_fn(w, h, |x, _| if x < at { left } else { right })
    }

    #[test]
    fn gabor_center_is_zero_for_odd_phase() {
        let k = gabor_kernel(13, 0.0, FRAC_PI_2).unwrap();
        assert!(k.weights.get(6, 6).abs() < 1e-15);
        assert!(k.sum().abs() < BALANCE_TOL);
    }

    #[test]
    fn gabor_is_antisymmetric_for_any_theta() {
        for theta in [0.0, 0.3, FRAC_PI_2, 2.0] {
            let k = gabor_kernel(15, theta, FRAC_PI_2).unwrap();
            let n = k.width();
            for y in 0..n {
                for x in 0..n {
                    let a = k.weights.get(x, y);
                    let b = k.weights.get(n - 1 - x, n - 1 - y);
                    assert!((a + b).abs() < 1e-12, "theta={theta}");
                }
            }
        }
    }

    #[test]
    fn even_rf_rounded_up() {
        let k = gabor_kernel(12, 0.0, FRAC_PI_2).unwrap();
        assert_eq!(k.width(), 13);
        assert!(gabor_kernel(2, 0.0, FRAC_PI_2).is_err());
    }

    #[test]
    fn gabor_light_dark_polarity() {
        // psi = +pi/2 responds positively to light-left / dark-right.
        let img = step(41, 41, 20, 1.0, 0.0);
        let k = gabor_kernel(13, 0.0, FRAC_PI_2).unwrap();
        let r = convolve(&img, &k).unwrap();
        assert!(r.get(20, 20) > 0.0);
        let k_neg = gabor_kernel(13, 0.0, -FRAC_PI_2).unwrap();
        let r_neg = convolve(&img, &k_neg).unwrap();
        assert!(r_neg.get(20, 20) < 0.0);
    }

    #[test]
    fn dog_uniform_field_gives_zero() {
        let img = Grid::filled(41, 41, 0.7);
        for pol in [Polarity::Pos, Polarity::Neg] {
            let k = dog_edge_kernel(13, 0.0, pol).unwrap();
            let r = convolve(&img, &k).unwrap();
            assert!(r.data().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn dog_bar_peaks_on_bar_with_polarity_sign() {
        // Light 3 px bar on dark ground, vertical.
        let img = Grid::from_fn(41, 41, |x, _| if (19..22).contains(&x) { 1.0 } else { 0.0 });
        let on = convolve(&img, &dog_edge_kernel(13, 0.0, Polarity::Pos).unwrap()).unwrap();
        let off = convolve(&img, &dog_edge_kernel(13, 0.0, Polarity::Neg).unwrap()).unwrap();
        let row: Vec<f64> = (0..41).map(|x| on.get(x, 20)).collect();
        let argmax = (0..41).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, 20);
        assert!(on.get(20, 20) > 0.0);
        assert!(off.get(20, 20) < 0.0);
    }

    #[test]
    fn orientations_are_transposes() {
        let v = dog_edge_kernel(13, 0.0, Polarity::Pos).unwrap();
        let h = dog_edge_kernel(13, FRAC_PI_2, Polarity::Pos).unwrap();
        assert!(v.weights.transpose().max_abs_diff(&h.weights) < 1e-15);
        let gv = gabor_kernel(13, 0.0, FRAC_PI_2).unwrap();
        let gh = gabor_kernel(13, FRAC_PI_2, FRAC_PI_2).unwrap();
        assert!(gv.weights.transpose().max_abs_diff(&gh.weights) < 1e-15);
    }

    #[test]
    fn dorsal_sizes_and_aspect() {
        let k = dorsal_simple_kernel(0, 0.0, DorsalClass::Edge, 32.0).unwrap();
        assert_eq!(k.width(), 29);
        assert_eq!(dorsal_aspect(3), 17.5);
        for scale in 0..4 {
            for class in [DorsalClass::Edge, DorsalClass::Border] {
                let k = dorsal_simple_kernel(scale, FRAC_PI_2, class, 32.0).unwrap();
                assert!(k.sum().abs() < BALANCE_TOL);
                let img = Grid::filled(k.width() + 4, k.height() + 4, 0.3);
                let r = convolve(&img, &k).unwrap();
                assert!(r.data().iter().all(|v| v.abs() < 1e-12));
            }
        }
        let sizes: Vec<usize> = (0..4)
            .map(|s| dorsal_simple_kernel(s, 0.0, DorsalClass::Border, 32.0).unwrap().width())
            .collect();
        assert_eq!(sizes, vec![29, 43, 57, 71]);
        let mt: Vec<usize> = (0..4).map(|s| mt_rf_px(s, 32.0)).collect();
        assert_eq!(mt, vec![81, 105, 129, 153]);
    }

    #[test]
    fn mt_kernels_are_balanced() {
        for scale in 0..4 {
            for phi in [0.0, FRAC_PI_2] {
                assert!(mt_on_kernel(scale, phi, 32.0).unwrap().sum().abs() < BALANCE_TOL);
                assert!(mt_off_kernel(scale, phi, 32.0).unwrap().sum().abs() < BALANCE_TOL);
            }
        }
    }

    /// Correlation value of `kernel` centered on an image of vertical bars.
    fn bar_response(kernel: &Kernel, bars: &[(f64, f64)]) -> f64 {
        let n = kernel.width();
        let c = (n / 2) as f64;
        let img = Grid::from_fn(n, n, |x, _| {
            let dx = x as f64 - c;
            if bars.iter().any(|&(mu, w)| (dx - mu).abs() <= w / 2.0) {
                1.0
            } else {
                0.0
            }
        });
        crate::filters::convolve_dense(&img, &kernel.weights).get(n / 2, n / 2)
    }

    #[test]
    fn mt_on_prefers_bar_of_tenth_rf_width() {
        let k = mt_on_kernel(1, 0.0, 32.0).unwrap();
        let rf = k.width() as f64;
        let best = bar_response(&k, &[(0.0, (rf / 10.0).round())]);
        assert!(best > 0.0);
        // Much wider or off-center bars drive it less.
        assert!(bar_response(&k, &[(0.0, (rf / 2.0).round())]) < best);
        assert!(bar_response(&k, &[(rf / 5.0, (rf / 10.0).round())]) < best);
    }

    #[test]
    fn mt_off_flank_and_center_bars() {
        let p = MtOffParams::default();
        let k = mt_off_kernel(2, 0.0, 32.0).unwrap();
        let rf = k.width() as f64;
        let width = (rf / 10.0).round();
        let flank = p.flank_offset * rf;
        assert!(bar_response(&k, &[(0.0, width)]) <= 0.0);
        let one = bar_response(&k, &[(flank, width)]);
        let two = bar_response(&k, &[(flank, width), (-flank, width)]);
        assert!(one > 0.0);
        assert!(two > one);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut d = Grid::zeros(3, 3);
        d.set(1, 1, 1.0);
        let k = Kernel::dense(d, CellClass::Pooling).unwrap();
        let img = Grid::from_fn(9, 7, |x, y| (x * 7 + y * 3) as f64 * 0.1);
        assert_eq!(convolve(&img, &k).unwrap(), img);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let k = mt_on_kernel(3, 0.0, 32.0).unwrap();
        let img = Grid::zeros(100, 100);
        assert!(matches!(convolve(&img, &k), Err(BosError::KernelTooLarge { .. })));
    }

    #[test]
    fn separable_matches_dense() {
        let img = Grid::from_fn(60, 50, |x, y| ((x * 31 + y * 17) % 11) as f64 / 10.0);
        for k in [
            gabor_kernel(19, FRAC_PI_2, -FRAC_PI_2).unwrap(),
            dog_edge_kernel(13, 0.0, Polarity::Neg).unwrap(),
            dorsal_simple_kernel(0, FRAC_PI_2, DorsalClass::Border, 32.0).unwrap(),
        ] {
            let a = convolve(&img, &k).unwrap();
            let b = convolve_dense(&img, &k.weights);
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn half_wave_examples() {
        assert_eq!(half_wave(-1.0), 0.0);
        assert_eq!(half_wave(0.0), 0.0);
        assert_eq!(half_wave(2.5), 2.5);
    }

    #[test]
    fn kernel_text_round_trip() {
        let k = dog_edge_kernel(7, 0.0, Polarity::Pos).unwrap();
        let g = Kernel::weights_from_text(&k.to_text()).unwrap();
        assert!(g.max_abs_diff(&k.weights) < 1e-12);
    }
}
