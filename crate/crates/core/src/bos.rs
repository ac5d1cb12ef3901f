//! Initial border-ownership responses: complex cells gated by MT context
//! pooled over a one-sided surround, then combined across scales.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::filters;
use crate::grid::Grid;
use crate::labels::{Label, Orientation, Side, NUM_LABELS};
use crate::ventral::{CellStage, ResponseVolume};

/// Responses per label and scale. After scale selection `scales == 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BosPopulation {
    pub stage: CellStage,
    pub scales: usize,
    maps: Vec<Grid>,
}

impl BosPopulation {
    /// `maps` in label-major order: `maps[label.index() * scales + c]`.
    pub fn new(stage: CellStage, scales: usize, maps: Vec<Grid>) -> Self {
        assert_eq!(maps.len(), NUM_LABELS * scales);
        Self { stage, scales, maps }
    }

    /// Scale-collapsed population from one map per label.
    pub fn from_labels(stage: CellStage, maps: Vec<Grid>) -> Self {
        Self::new(stage, 1, maps)
    }

    pub fn get(&self, label: Label, scale: usize) -> &Grid {
        assert!(scale < self.scales);
        &self.maps[label.index() * self.scales + scale]
    }

    /// The map of a scale-collapsed population.
    pub fn map(&self, label: Label) -> &Grid {
        self.get(label, 0)
    }

    pub fn maps(&self) -> &[Grid] {
        &self.maps
    }

    pub fn width(&self) -> usize {
        self.maps[0].width()
    }

    pub fn height(&self) -> usize {
        self.maps[0].height()
    }

    pub fn value(&self, label: Label, x: usize, y: usize) -> f64 {
        self.map(label).get(x, y)
    }

    pub fn with_stage(mut self, stage: CellStage) -> Self {
        self.stage = stage;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    LinearNegativeSlope,
    Gaussian,
}

/// Where and how strongly MT responses are pooled on one side of a border.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurroundSpec {
    pub max_extent_deg: f64,
    /// First sample distance along the side direction.
    pub start_deg: f64,
    /// Lattice spacing as a fraction of the MT receptive field.
    pub spacing_rf: f64,
    /// Half-width of the lattice across the side direction; 0 gives a ray.
    pub lateral_extent_deg: f64,
    pub weight_fn: WeightFn,
    /// Gaussian sigma as a fraction of `max_extent_deg`.
    pub gaussian_sigma_frac: f64,
    pub on_weight: f64,
    pub off_weight: f64,
}

impl Default for SurroundSpec {
    fn default() -> Self {
        Self {
            max_extent_deg: 9.0,
            start_deg: 0.25,
            spacing_rf: 0.25,
            lateral_extent_deg: 9.0,
            weight_fn: WeightFn::LinearNegativeSlope,
            gaussian_sigma_frac: 1.0 / 3.0,
            on_weight: 1.0,
            off_weight: 1.0,
        }
    }
}

/// One surround sample: pixel offset and weight (area element included).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub dx: i64,
    pub dy: i64,
    pub weight: f64,
}

impl SurroundSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_extent_deg > 0.0) || !(self.start_deg >= 0.0) || self.start_deg > self.max_extent_deg {
            return domain("surround extent must satisfy 0 <= start <= max_extent, max_extent > 0");
        }
        if !(self.spacing_rf > 0.0) || !(self.lateral_extent_deg >= 0.0) || !(self.gaussian_sigma_frac > 0.0) {
            return domain("surround spacing, lateral extent and sigma must be positive");
        }
        if self.on_weight < 0.0 || self.off_weight < 0.0 {
            return domain("surround MT weights must be non-negative");
        }
        Ok(())
    }

    /// Weight at distance `d` degrees, `w(0) = 1`.
    pub fn weight(&self, d: f64) -> f64 {
        match self.weight_fn {
            WeightFn::LinearNegativeSlope => (1.0 - d / self.max_extent_deg).max(0.0),
            WeightFn::Gaussian => {
                let s = self.gaussian_sigma_frac * self.max_extent_deg;
                (-d * d / (2.0 * s * s)).exp()
            }
        }
    }

    /// Lattice spacing in pixels for MT scale `c`.
    pub fn spacing_px(&self, scale: usize, px_per_deg: f64) -> f64 {
        (self.spacing_rf * filters::mt_rf_px(scale, px_per_deg) as f64).max(1.0)
    }

    /// Sample lattice on `side`: rows every spacing from `start` to the
    /// maximum extent along the side direction, columns every spacing within
    /// the lateral extent, clipped to the disc of radius `max_extent`.
    /// Weights carry the lattice cell size in degrees (length for a ray,
    /// area otherwise).
    pub fn taps(&self, side: Side, scale: usize, px_per_deg: f64) -> Vec<Tap> {
        let sp = self.spacing_px(scale, px_per_deg);
        let start = self.start_deg * px_per_deg;
        let max = self.max_extent_deg * px_per_deg;
        let lateral = self.lateral_extent_deg * px_per_deg;
        let cell = if lateral < sp { sp / px_per_deg } else { (sp / px_per_deg).powi(2) };
        let n_lat = (lateral / sp).floor() as i64;
        let (ux, uy) = side.unit();
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let a = start + k as f64 * sp;
            if a > max {
                break;
            }
            for j in -n_lat..=n_lat {
                let b = j as f64 * sp;
                let d = a.hypot(b);
                if d > max {
                    continue;
                }
                let w = self.weight(d / px_per_deg) * cell;
                if w <= 0.0 {
                    continue;
                }
                // Across direction is (-uy, ux).
                let dx = (a * ux as f64 - b * uy as f64).round() as i64;
                let dy = (a * uy as f64 + b * ux as f64).round() as i64;
                out.push(Tap { dx, dy, weight: w });
            }
            k += 1;
        }
        out
    }
}

/// Orientation-summed MT drive `on_w * sum_phi ON + off_w * sum_phi OFF`.
fn mt_drive(mt_on: &ResponseVolume, mt_off: &ResponseVolume, c: usize, s: &SurroundSpec) -> Grid {
    let mut m = Grid::zeros(mt_on.get(Orientation::Vertical, 0, c).width(), mt_on.get(Orientation::Vertical, 0, c).height());
    for o in Orientation::ALL {
        let on = mt_on.get(o, 0, c);
        let off = mt_off.get(o, 0, c);
        for ((v, a), b) in m.data_mut().iter_mut().zip(on.data()).zip(off.data()) {
            *v += s.on_weight * a + s.off_weight * b;
        }
    }
    m
}

fn pooled(drive: &Grid, taps: &[Tap], x: usize, y: usize) -> f64 {
    let mut acc = 0.0;
    for t in taps {
        if let Some(v) = drive.get_signed((x as i64 + t.dx) as isize, (y as i64 + t.dy) as isize) {
            acc += t.weight * v;
        }
    }
    acc
}

/// Surround context of side `side` at `(x, y)` for MT scale `c`. Samples
/// outside the map contribute 0.
#[allow(clippy::too_many_arguments)]
pub fn mt_context(
    mt_on: &ResponseVolume,
    mt_off: &ResponseVolume,
    x: usize,
    y: usize,
    side: Side,
    c: usize,
    surround: &SurroundSpec,
    px_per_deg: f64,
) -> f64 {
    let drive = mt_drive(mt_on, mt_off, c, surround);
    pooled(&drive, &surround.taps(side, c, px_per_deg), x, y)
}

/// Context map for `side` at scale `c`, evaluated only where `mask` holds
/// (zero elsewhere).
pub fn context_map(drive: &Grid, taps: &[Tap], mask: impl Fn(usize, usize) -> bool + Sync) -> Grid {
    let (w, h) = (drive.width(), drive.height());
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            if mask(x, y) {
                *o = pooled(drive, taps, x, y);
            }
        }
    });
    Grid::from_vec(w, h, out)
}

/// `B(x, label, c) = C(x, theta, s, c) * context(x, side, c)` for all labels
/// and scales.
pub fn bos_initial(
    complex: &ResponseVolume,
    mt_on: &ResponseVolume,
    mt_off: &ResponseVolume,
    surround: &SurroundSpec,
    px_per_deg: f64,
) -> Result<BosPopulation> {
    surround.validate()?;
    let scales = complex.scales;
    let drives: Vec<Grid> = (0..scales).into_par_iter().map(|c| mt_drive(mt_on, mt_off, c, surround)).collect();
    // One context map per (side, scale).
    let jobs: Vec<(Side, usize)> = Side::ALL.into_iter().flat_map(|s| (0..scales).map(move |c| (s, c))).collect();
    let contexts: Vec<Grid> = jobs
        .par_iter()
        .map(|&(side, c)| {
            let o = side.orientation();
            let taps = surround.taps(side, c, px_per_deg);
            let active = |x: usize, y: usize| (0..complex.features).any(|f| complex.get(o, f, c).get(x, y) > 0.0);
            context_map(&drives[c], &taps, active)
        })
        .collect();
    let mut maps = Vec::with_capacity(NUM_LABELS * scales);
    for label in Label::all() {
        for c in 0..scales {
            let ctx = &contexts[label.side.index() * scales + c];
            maps.push(complex.map(label.orientation, label.feature, c).zip_with(ctx, |a, b| a * b));
        }
    }
    Ok(BosPopulation::new(CellStage::BosInitial, scales, maps))
}

/// Pointwise maximum over scales.
pub fn scale_select(pop: &BosPopulation) -> BosPopulation {
    let maps = Label::all()
        .map(|l| {
            let mut m = pop.get(l, 0).clone();
            for c in 1..pop.scales {
                m = m.zip_with(pop.get(l, c), f64::max);
            }
            m
        })
        .collect();
    BosPopulation::new(pop.stage, 1, maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Feature;

    fn volume(stage: CellStage, w: usize, h: usize, f: impl Fn(Orientation, usize, usize, usize) -> f64) -> ResponseVolume {
        let mut maps = Vec::new();
        for o in Orientation::ALL {
            for c in 0..4 {
                maps.push(Grid::from_fn(w, h, |x, y| f(o, c, x, y)));
            }
        }
        ResponseVolume::new(stage, 1, 4, maps)
    }

    #[test]
    fn weights_are_monotone_and_unit_at_zero() {
        for wf in [WeightFn::LinearNegativeSlope, WeightFn::Gaussian] {
            let s = SurroundSpec {
                weight_fn: wf,
                ..Default::default()
            };
            assert_eq!(s.weight(0.0), 1.0);
            let mut prev = 1.0;
            for i in 1..100 {
                let w = s.weight(i as f64 * 0.1);
                assert!(w >= 0.0 && w <= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn taps_stay_on_their_side_within_extent() {
        let s = SurroundSpec::default();
        for side in Side::ALL {
            let taps = s.taps(side, 0, 32.0);
            assert!(!taps.is_empty());
            let (ux, uy) = side.unit();
            for t in &taps {
                assert!(t.dx * ux + t.dy * uy >= 8);
                assert!(((t.dx * t.dx + t.dy * t.dy) as f64).sqrt() <= 9.0 * 32.0 + 1.0);
            }
        }
        let key = |t: &Tap| (t.dx, t.dy, t.weight.to_bits());
        let mut l: Vec<_> = s.taps(Side::Left, 2, 32.0).iter().map(|t| key(&Tap { dx: -t.dx, ..*t })).collect();
        let mut r: Vec<_> = s.taps(Side::Right, 2, 32.0).iter().map(key).collect();
        l.sort_unstable();
        r.sort_unstable();
        assert_eq!(l, r);
    }

    #[test]
    fn zero_mt_gives_zero_context() {
        let z = volume(CellStage::MtOn, 50, 50, |_, _, _, _| 0.0);
        let s = SurroundSpec::default();
        assert_eq!(mt_context(&z, &z, 25, 25, Side::Left, 0, &s, 32.0), 0.0);
    }

    #[test]
    fn nearer_activation_gives_larger_context() {
        let s = SurroundSpec {
            lateral_extent_deg: 0.0,
            ..Default::default()
        };
        let taps = s.taps(Side::Right, 0, 32.0);
        let near = taps.first().unwrap();
        let far = taps.last().unwrap();
        let w = 320;
        let at = |dx: i64| volume(CellStage::MtOn, w, 5, move |o, c, x, y| (o == Orientation::Vertical && c == 0 && x as i64 == dx && y == 2) as u8 as f64);
        let z = volume(CellStage::MtOff, w, 5, |_, _, _, _| 0.0);
        let a = mt_context(&at(near.dx), &z, 0, 2, Side::Right, 0, &s, 32.0);
        let b = mt_context(&at(far.dx), &z, 0, 2, Side::Right, 0, &s, 32.0);
        assert!(a > b && b > 0.0, "{a} {b}");
    }

    #[test]
    fn context_matches_weighted_sum_oracle() {
        let s = SurroundSpec {
            lateral_extent_deg: 0.0,
            ..Default::default()
        };
        let w = 400;
        let prof = |x: usize| ((x * 37) % 13) as f64 / 13.0;
        let on = volume(CellStage::MtOn, w, 3, |_, _, x, _| prof(x));
        let off = volume(CellStage::MtOff, w, 3, |_, _, x, _| 0.5 * prof(x + 3));
        let x0 = 40;
        let got = mt_context(&on, &off, x0, 1, Side::Right, 1, &s, 32.0);
        // Oracle: explicit loop over the ray.
        let sp = 0.25 * filters::mt_rf_px(1, 32.0) as f64;
        let mut want = 0.0;
        let mut a = 8.0;
        while a <= 288.0 {
            let x = x0 as f64 + a;
            let xi = x.round() as usize;
            let wgt = (1.0 - (a / 32.0) / 9.0).max(0.0) * sp / 32.0;
            if xi < w {
                want += wgt * 2.0 * (prof(xi) + 0.5 * prof(xi + 3));
            }
            a += sp;
        }
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn gating_is_multiplicative() {
        let (w, h) = (60, 60);
        let mut cmaps = vec![Grid::zeros(w, h); 32];
        cmaps[0] = Grid::from_fn(w, h, |x, _| if x == 30 { 1.0 } else { 0.0 });
        let complex = ResponseVolume::new(CellStage::Complex, 4, 4, cmaps);
        let on = volume(CellStage::MtOn, w, h, |_, _, x, _| if x < 25 { 0.5 } else { 0.0 });
        let off = volume(CellStage::MtOff, w, h, |_, _, _, _| 0.0);
        let pop = bos_initial(&complex, &on, &off, &SurroundSpec::default(), 32.0).unwrap();
        let left = Label::new(Orientation::Vertical, Feature::BorderLightDark, Side::Left);
        assert!(pop.get(left, 0).get(30, 30) > 0.0);
        // Empty surround on the right.
        assert_eq!(pop.get(left.twin(), 0).get(30, 30), 0.0);
        // Zero complex response gates everything.
        assert_eq!(pop.get(left, 0).get(10, 30), 0.0);
        assert_eq!(pop.get(left, 1).max(), 0.0);
    }

    #[test]
    fn scale_select_is_pointwise_max() {
        let maps: Vec<Grid> = (0..64).map(|i| Grid::from_fn(5, 4, |x, y| ((x * 7 + y * 3 + i * 5) % 9) as f64)).collect();
        let pop = BosPopulation::new(CellStage::BosInitial, 4, maps.clone());
        let sel = scale_select(&pop);
        for l in Label::all() {
            for y in 0..4 {
                for x in 0..5 {
                    let want = (0..4).map(|c| maps[l.index() * 4 + c].get(x, y)).fold(f64::MIN, f64::max);
                    assert_eq!(sel.map(l).get(x, y), want);
                }
            }
        }
        let same = BosPopulation::new(CellStage::BosInitial, 4, (0..64).map(|i| maps[(i / 4) * 4].clone()).collect());
        assert_eq!(scale_select(&same).map(Label::from_index(3)), &maps[12]);
    }
}
