//! Relaxation labeling over the 16 border-ownership labels and the bounded
//! multiplicative update of the responses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bos::BosPopulation;
use crate::error::{domain, BosError, Result};
use crate::grid::Grid;
use crate::labels::{Label, Orientation, NUM_LABELS};
use crate::ventral::CellStage;

/// Potentials are clamped to `[-P_MAX, P_MAX]`.
pub const P_MAX: f64 = 0.5;

/// Per-location label confidences.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSpace {
    width: usize,
    height: usize,
    /// One confidence map per label, in label index order.
    q: Vec<Grid>,
    participating: Vec<bool>,
}

impl LabelSpace {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn q(&self, label: Label) -> &Grid {
        &self.q[label.index()]
    }

    pub fn confidence(&self, x: usize, y: usize, label: Label) -> Option<f64> {
        self.is_participating(x, y).then(|| self.q[label.index()].get(x, y))
    }

    pub fn is_participating(&self, x: usize, y: usize) -> bool {
        self.participating[y * self.width + x]
    }

    pub fn participating_count(&self) -> usize {
        self.participating.iter().filter(|&&p| p).count()
    }

    pub fn maps(&self) -> &[Grid] {
        &self.q
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    /// `gain * (q_final - q_initial)`.
    Delta,
    /// `gain * (q_final / q_initial - 1)`.
    Relative,
    /// `gain * (share_final - share_initial)` with `share = q / (q + q_twin)`,
    /// the label's weight within its ownership pair.
    PairShare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityFn {
    /// Overall strength in `[0, 1]` multiplying every label weight.
    pub strength: f64,
    /// Width of the Gaussian over feature dissimilarity for same-side labels.
    pub sigma_compat: f64,
    /// Magnitude of the penalty for opposite-side labels at zero
    /// dissimilarity.
    pub incompat_slope: f64,
    /// Dissimilarity at which the penalty reaches zero.
    pub incompat_span: f64,
    /// Half-extent of the neighborhood along the contour, pixels.
    pub radius_px: usize,
    pub along_sigma_frac: f64,
    pub across_sigma_frac: f64,
}

impl Default for CompatibilityFn {
    fn default() -> Self {
        Self {
            strength: 1.0,
            sigma_compat: 0.5,
            incompat_slope: 1.0,
            incompat_span: 1.0,
            radius_px: 33,
            along_sigma_frac: 0.5,
            across_sigma_frac: 0.25,
        }
    }
}

impl CompatibilityFn {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_compat > 0.0) || !(self.incompat_span > 0.0) {
            return domain("compatibility sigma and span must be positive");
        }
        if !(0.0..=1.0).contains(&self.incompat_slope) || !(0.0..=1.0).contains(&self.strength) {
            return domain("incompatibility slope and strength must lie in [0, 1]");
        }
        if self.radius_px == 0 || !(self.along_sigma_frac > 0.0) || !(self.across_sigma_frac > 0.0) {
            return domain("neighborhood radius and sigmas must be positive");
        }
        Ok(())
    }

    /// Label compatibility in `[-1, 1]`, independent of displacement.
    pub fn label_weight(&self, i: Label, j: Label) -> f64 {
        if i.orientation != j.orientation {
            return 0.0;
        }
        let d = i.feature.dissimilarity(j.feature);
        let l = if i.side == j.side {
            (-d * d / (2.0 * self.sigma_compat * self.sigma_compat)).exp()
        } else {
            -self.incompat_slope * (1.0 - d / self.incompat_span).max(0.0)
        };
        self.strength * l
    }

    /// Axis profiles `(along, across)` of the spatial weighting, before the
    /// center tap is removed.
    fn profiles(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.radius_px as f64;
        let prof = |sigma: f64| -> Vec<f64> {
            (-(self.radius_px as i64)..=self.radius_px as i64)
                .map(|t| {
                    let t = t as f64;
                    (-t * t / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        };
        (prof(self.along_sigma_frac * r), prof(self.across_sigma_frac * r))
    }

    /// Normalizer making the off-center spatial weights sum to one.
    fn spatial_norm(&self) -> f64 {
        let (a, b) = self.profiles();
        let c = self.radius_px;
        a.iter().sum::<f64>() * b.iter().sum::<f64>() - a[c] * b[c]
    }

    /// Spatial weight of displacement `(dx, dy)` for labels of orientation
    /// `o`; elongated along the contour, zero at the origin and outside the
    /// neighborhood square.
    pub fn spatial(&self, o: Orientation, dx: i64, dy: i64) -> f64 {
        let r = self.radius_px as i64;
        if (dx == 0 && dy == 0) || dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        let (along_d, across_d) = match o {
            Orientation::Vertical => (dy, dx),
            Orientation::Horizontal => (dx, dy),
        };
        let (a, b) = self.profiles();
        a[(along_d + r) as usize] * b[(across_d + r) as usize] / self.spatial_norm()
    }

    /// `r(i, j, delta)`.
    pub fn r(&self, i: Label, j: Label, dx: i64, dy: i64) -> f64 {
        let l = self.label_weight(i, j);
        if l == 0.0 {
            0.0
        } else {
            l * self.spatial(i.orientation, dx, dy)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RlParams {
    pub max_iter: usize,
    pub epsilon: f64,
    pub potential_gain: f64,
    pub potential_mode: PotentialMode,
    /// Locations whose summed response is below this fraction of the
    /// population maximum do not participate.
    pub participation_floor: f64,
}

impl Default for RlParams {
    fn default() -> Self {
        Self {
            max_iter: 10,
            epsilon: 1e-4,
            potential_gain: 5.0,
            potential_mode: PotentialMode::PairShare,
            participation_floor: 1e-9,
        }
    }
}

impl RlParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.epsilon > 0.0) || !(self.potential_gain >= 0.0) {
            return domain("relaxation needs max_iter >= 1, epsilon > 0, gain >= 0");
        }
        if !(0.0..1.0).contains(&self.participation_floor) {
            return domain("participation floor must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Normalizes responses into confidences at locations with any response.
pub fn init_confidences(pop: &BosPopulation, participation_floor: f64) -> LabelSpace {
    assert_eq!(pop.scales, 1, "relaxation runs on a scale-collapsed population");
    let (w, h) = (pop.width(), pop.height());
    let mut totals = vec![0.0; w * h];
    for m in pop.maps() {
        for (t, v) in totals.iter_mut().zip(m.data()) {
            *t += v;
        }
    }
    let peak = totals.iter().cloned().fold(0.0, f64::max);
    let floor = participation_floor * peak;
    let participating: Vec<bool> = totals.iter().map(|&t| t > 0.0 && t > floor).collect();
    let q = pop
        .maps()
        .iter()
        .map(|m| {
            let mut g = Grid::zeros(w, h);
            for (i, v) in g.data_mut().iter_mut().enumerate() {
                if participating[i] {
                    *v = m.data()[i] / totals[i];
                }
            }
            g
        })
        .collect();
    LabelSpace {
        width: w,
        height: h,
        q,
        participating,
    }
}

/// Builds a label space from explicit confidence maps; a location
/// participates when its confidences are not all zero.
pub fn label_space_from_maps(q: Vec<Grid>) -> Result<LabelSpace> {
    if q.len() != NUM_LABELS {
        return domain(format!("expected {NUM_LABELS} confidence maps, got {}", q.len()));
    }
    let (w, h) = (q[0].width(), q[0].height());
    if q.iter().any(|m| m.width() != w || m.height() != h) {
        return domain("confidence maps differ in size");
    }
    let participating = (0..w * h).map(|i| q.iter().any(|m| m.data()[i] != 0.0)).collect();
    Ok(LabelSpace {
        width: w,
        height: h,
        q,
        participating,
    })
}

/// Support for `label` at `(x, y)` by explicit summation over the
/// neighborhood.
pub fn support(space: &LabelSpace, x: usize, y: usize, label: Label, compat: &CompatibilityFn) -> f64 {
    let r = compat.radius_px as i64;
    let mut s = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= space.width as i64 || ny >= space.height as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !space.is_participating(nx, ny) {
                continue;
            }
            for j in Label::all() {
                let w = compat.r(label, j, dx, dy);
                if w != 0.0 {
                    s += w * space.q[j.index()].get(nx, ny);
                }
            }
        }
    }
    s
}

fn correlate_zero_line(src: &[f64], taps: &[f64], out: &mut [f64], pad: &mut Vec<f64>) {
    out.fill(0.0);
    let Some(first) = src.iter().position(|&v| v != 0.0) else {
        return;
    };
    let last = src.len() - 1 - src.iter().rev().position(|&v| v != 0.0).unwrap();
    let c = taps.len() / 2;
    pad.clear();
    pad.resize(c, 0.0);
    pad.extend_from_slice(src);
    pad.resize(src.len() + 2 * c, 0.0);
    let lo = first.saturating_sub(c);
    let hi = (last + c + 1).min(src.len());
    for (i, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
        *o = taps.iter().zip(&pad[i..i + taps.len()]).map(|(k, v)| k * v).sum();
    }
}

/// Zero-padded separable correlation `col (x) row` minus the center tap.
fn neighborhood_sum(map: &Grid, col: &[f64], row: &[f64], norm: f64) -> Grid {
    let (w, h) = (map.width(), map.height());
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w)
        .enumerate()
        .for_each_init(Vec::new, |pad, (y, out)| correlate_zero_line(map.row(y), row, out, pad));
    let tmp_t = Grid::from_vec(w, h, tmp).transpose();
    let mut res_t = vec![0.0; w * h];
    res_t
        .par_chunks_mut(h)
        .enumerate()
        .for_each_init(Vec::new, |pad, (x, out)| correlate_zero_line(tmp_t.row(x), col, out, pad));
    let center = col[col.len() / 2] * row[row.len() / 2];
    let res = Grid::from_vec(h, w, res_t).transpose();
    res.zip_with(map, |a, b| (a - center * b) / norm)
}

/// Support maps for all labels, vectorized over locations.
pub fn support_maps(space: &LabelSpace, compat: &CompatibilityFn) -> Vec<Grid> {
    let (along, across) = compat.profiles();
    let norm = compat.spatial_norm();
    let smoothed: Vec<Grid> = Label::all()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|l| {
            let (col, row) = match l.orientation {
                Orientation::Vertical => (&along, &across),
                Orientation::Horizontal => (&across, &along),
            };
            neighborhood_sum(&space.q[l.index()], col, row, norm)
        })
        .collect();
    Label::all()
        .map(|i| {
            let mut s = Grid::zeros(space.width, space.height);
            for j in Label::all() {
                let l = compat.label_weight(i, j);
                if l != 0.0 {
                    for (a, b) in s.data_mut().iter_mut().zip(smoothed[j.index()].data()) {
                        *a += l * b;
                    }
                }
            }
            s
        })
        .collect()
}

/// One synchronous update `q <- q (1 + s) / sum q (1 + s)`; returns the new
/// space and the largest confidence change.
pub fn rl_step(space: &LabelSpace, compat: &CompatibilityFn) -> (LabelSpace, f64) {
    let s = support_maps(space, compat);
    let (w, h) = (space.width, space.height);
    let mut next = space.clone();
    let rows: Vec<(Vec<[f64; NUM_LABELS]>, f64)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::with_capacity(w);
            let mut delta: f64 = 0.0;
            for x in 0..w {
                let mut q = [0.0; NUM_LABELS];
                for (k, v) in q.iter_mut().enumerate() {
                    *v = space.q[k].get(x, y);
                }
                if space.is_participating(x, y) {
                    let mut num = [0.0; NUM_LABELS];
                    let mut total = 0.0;
                    for k in 0..NUM_LABELS {
                        num[k] = q[k] * (1.0 + s[k].get(x, y));
                        total += num[k];
                    }
                    if total > 0.0 {
                        for k in 0..NUM_LABELS {
                            let v = num[k] / total;
                            delta = delta.max((v - q[k]).abs());
                            q[k] = v;
                        }
                    }
                }
                out.push(q);
            }
            (out, delta)
        })
        .collect();
    let mut max_delta: f64 = 0.0;
    for (y, (row, d)) in rows.into_iter().enumerate() {
        max_delta = max_delta.max(d);
        for (x, q) in row.into_iter().enumerate() {
            for k in 0..NUM_LABELS {
                next.q[k].set(x, y, q[k]);
            }
        }
    }
    (next, max_delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlOutcome {
    pub initial: LabelSpace,
    pub last: LabelSpace,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// One map per label, within `[-P_MAX, P_MAX]`.
    pub potentials: Vec<Grid>,
    /// States after each step, when traced.
    pub trace: Vec<LabelSpace>,
}

/// Runs relaxation to convergence or `max_iter` steps and derives the
/// potentials.
pub fn rl_run(space: &LabelSpace, compat: &CompatibilityFn, params: &RlParams) -> Result<RlOutcome> {
    rl_run_traced(space, compat, params, false)
}

/// [`rl_run`], optionally keeping every intermediate state.
pub fn rl_run_traced(space: &LabelSpace, compat: &CompatibilityFn, params: &RlParams, trace: bool) -> Result<RlOutcome> {
    compat.validate()?;
    params.validate()?;
    let mut cur = space.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut final_delta = 0.0;
    let mut states = Vec::new();
    while iterations < params.max_iter {
        let (next, delta) = rl_step(&cur, compat);
        cur = next;
        if trace {
            states.push(cur.clone());
        }
        iterations += 1;
        final_delta = delta;
        if delta < params.epsilon {
            converged = true;
            break;
        }
    }
    let potentials = potentials(space, &cur, params);
    Ok(RlOutcome {
        initial: space.clone(),
        last: cur,
        iterations,
        converged,
        final_delta,
        potentials,
        trace: states,
    })
}

fn share(q: &[Grid], l: Label, i: usize) -> f64 {
    let (a, b) = (q[l.index()].data()[i], q[l.twin().index()].data()[i]);
    if a + b > 0.0 {
        a / (a + b)
    } else {
        0.5
    }
}

fn potentials(initial: &LabelSpace, last: &LabelSpace, params: &RlParams) -> Vec<Grid> {
    let g = params.potential_gain;
    Label::all()
        .map(|l| {
            let (q0, q1) = (&initial.q[l.index()], &last.q[l.index()]);
            let mut p = Grid::zeros(initial.width, initial.height);
            for (i, v) in p.data_mut().iter_mut().enumerate() {
                if !initial.participating[i] {
                    continue;
                }
                let (a, b) = (q0.data()[i], q1.data()[i]);
                let raw = match params.potential_mode {
                    PotentialMode::Delta => g * (b - a),
                    PotentialMode::Relative if a > 0.0 => g * (b / a - 1.0),
                    PotentialMode::Relative => 0.0,
                    PotentialMode::PairShare => g * (share(&last.q, l, i) - share(&initial.q, l, i)),
                };
                *v = raw.clamp(-P_MAX, P_MAX);
            }
            p
        })
        .collect()
}

/// `R_post = (1 + P) R_pre`. Potentials outside `[-0.5, 0.5]` are rejected.
pub fn apply_update(pop: &BosPopulation, potentials: &[Grid]) -> Result<BosPopulation> {
    if pop.scales != 1 || potentials.len() != NUM_LABELS {
        return domain("update needs a scale-collapsed population and one potential map per label");
    }
    for p in potentials {
        if let Some(&bad) = p.data().iter().find(|v| !(v.abs() <= P_MAX)) {
            return Err(BosError::PotentialOutOfRange(bad));
        }
    }
    let maps = Label::all()
        .map(|l| pop.map(l).zip_with(&potentials[l.index()], |r, p| (1.0 + p) * r))
        .collect();
    Ok(BosPopulation::from_labels(CellStage::BosFinal, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Feature, Side};

    fn left() -> Label {
        Label::new(Orientation::Vertical, Feature::BorderLightDark, Side::Left)
    }

    fn pop_with(w: usize, h: usize, f: impl Fn(Label, usize, usize) -> f64) -> BosPopulation {
        BosPopulation::from_labels(CellStage::BosInitial, Label::all().map(|l| Grid::from_fn(w, h, |x, y| f(l, x, y))).collect())
    }

    #[test]
    fn init_normalizes_and_marks_participation() {
        let b = left().twin();
        let pop = pop_with(3, 1, |l, x, _| match (x, l) {
            (0, _) => 0.0,
            (1, l) if l == left() => 2.0,
            (2, l) if l == left() => 3.0,
            (2, l) if l == b => 1.0,
            _ => 0.0,
        });
        let s = init_confidences(&pop, 0.0);
        assert!(!s.is_participating(0, 0));
        assert_eq!(s.confidence(0, 0, left()), None);
        assert_eq!(s.confidence(1, 0, left()), Some(1.0));
        assert_eq!(s.confidence(2, 0, left()), Some(0.75));
        assert_eq!(s.confidence(2, 0, b), Some(0.25));
    }

    #[test]
    fn compatibility_is_bounded() {
        let c = CompatibilityFn::default();
        for i in Label::all() {
            for j in Label::all() {
                let l = c.label_weight(i, j);
                assert!((-1.0..=1.0).contains(&l));
                assert_eq!(l, c.label_weight(j, i));
            }
        }
        assert_eq!(c.label_weight(left(), left()), 1.0);
        assert_eq!(c.label_weight(left(), left().twin()), -1.0);
        let total: f64 = (-40..=40).flat_map(|dy| (-40..=40).map(move |dx| (dx, dy))).map(|(dx, dy)| c.spatial(Orientation::Vertical, dx, dy)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_location_has_zero_support() {
        let pop = pop_with(80, 80, |l, x, y| if x == 40 && y == 40 && l == left() { 1.0 } else { 0.0 });
        let s = init_confidences(&pop, 0.0);
        let c = CompatibilityFn::default();
        assert_eq!(support(&s, 40, 40, left(), &c), 0.0);
    }

    #[test]
    fn collinear_neighbor_support_is_kernel_value() {
        let pop = pop_with(80, 80, |l, x, y| if x == 40 && (y == 40 || y == 43) && l == left() { 1.0 } else { 0.0 });
        let s = init_confidences(&pop, 0.0);
        let c = CompatibilityFn::default();
        let got = support(&s, 40, 40, left(), &c);
        assert!(got > 0.0);
        assert_eq!(got, c.r(left(), left(), 0, 3));
        let maps = support_maps(&s, &c);
        assert!((maps[left().index()].get(40, 40) - got).abs() < 1e-12);
    }

    #[test]
    fn zero_compatibility_is_a_fixed_point() {
        let pop = pop_with(30, 30, |l, x, y| ((x * 3 + y * 5 + l.index() * 7) % 4) as f64);
        let s = init_confidences(&pop, 0.0);
        let c = CompatibilityFn {
            strength: 0.0,
            ..Default::default()
        };
        let out = rl_run(&s, &c, &RlParams::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.last.maps(), s.maps());
        assert!(out.potentials.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unanimous_neighborhood_grows_its_label() {
        let other = Label::new(Orientation::Vertical, Feature::EdgeLightBar, Side::Right);
        let pop = pop_with(40, 60, |l, x, _| match (x, l) {
            (20, l) if l == left() => 0.6,
            (20, l) if l == other => 0.4,
            _ => 0.0,
        });
        let c = CompatibilityFn::default();
        let mut s = init_confidences(&pop, 0.0);
        let mut prev = s.q(left()).get(20, 30);
        for _ in 0..10 {
            s = rl_step(&s, &c).0;
            let q = s.q(left()).get(20, 30);
            assert!(q >= prev);
            prev = q;
        }
        assert!(prev > 0.6);
    }

    #[test]
    fn apply_update_examples() {
        let pop = pop_with(1, 1, |l, _, _| if l == left() { 1.0 } else { 2.0 });
        let mut p = vec![Grid::zeros(1, 1); 16];
        let same = apply_update(&pop, &p).unwrap();
        assert_eq!(same.maps(), pop.maps());
        p[left().index()].set(0, 0, 0.5);
        p[left().twin().index()].set(0, 0, -0.5);
        let out = apply_update(&pop, &p).unwrap();
        assert_eq!(out.value(left(), 0, 0), 1.5);
        assert_eq!(out.value(left().twin(), 0, 0), 1.0);
        p[0].set(0, 0, 0.6);
        assert!(matches!(apply_update(&pop, &p), Err(BosError::PotentialOutOfRange(_))));
    }
}
