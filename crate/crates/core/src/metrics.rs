//! Readouts: normalized difference, improvement, vector modulation index and
//! max-direction maps.

use serde::{Deserialize, Serialize};

use crate::bos::BosPopulation;
use crate::labels::{Label, Orientation, Side};

/// `(pref - nonpref) / max(pref, nonpref)`, `None` when both are zero.
pub fn normalized_difference(pref: f64, nonpref: f64) -> Option<f64> {
    let m = pref.max(nonpref);
    (m > 0.0).then(|| (pref - nonpref) / m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Improvement {
    Percent(f64),
    /// Initial difference not positive.
    NotComparable,
}

impl Improvement {
    pub fn percent(self) -> Option<f64> {
        match self {
            Improvement::Percent(v) => Some(v),
            Improvement::NotComparable => None,
        }
    }
}

/// `100 (D_post - D_pre) / D_pre`.
pub fn improvement_pct(d_pre: f64, d_post: f64) -> Improvement {
    if d_pre > 0.0 {
        Improvement::Percent(100.0 * (d_post - d_pre) / d_pre)
    } else {
        Improvement::NotComparable
    }
}

/// Side whose unit vector the VMI uses for orientation `o`.
pub fn positive_side(o: Orientation) -> Side {
    match o {
        Orientation::Vertical => Side::Right,
        Orientation::Horizontal => Side::Down,
    }
}

/// Labels contributing to a readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    All,
    BorderOnly,
}

impl Pool {
    pub fn contains(self, l: Label) -> bool {
        match self {
            Pool::All => true,
            Pool::BorderOnly => l.feature.is_border(),
        }
    }
}

/// Sum over (orientation, feature) of `(B+ - B-) * u(+)`, image
/// coordinates (x right, y down).
pub fn vmi(pop: &BosPopulation, x: usize, y: usize, pool: Pool) -> (f64, f64) {
    let (mut vx, mut vy) = (0.0, 0.0);
    for l in Label::all().filter(|l| pool.contains(*l)) {
        if l.side != positive_side(l.orientation) {
            continue;
        }
        let d = pop.value(l, x, y) - pop.value(l.twin(), x, y);
        let (ux, uy) = l.side.unit();
        vx += d * ux as f64;
        vy += d * uy as f64;
    }
    (vx, vy)
}

/// Strongest label's side and response at every location with activity.
pub fn max_direction_map(pop: &BosPopulation, pool: Pool) -> Vec<Option<(Side, f64)>> {
    let (w, h) = (pop.width(), pop.height());
    let labels: Vec<Label> = Label::all().filter(|l| pool.contains(*l)).collect();
    (0..w * h)
        .map(|i| {
            let mut best: Option<(Side, f64)> = None;
            for l in &labels {
                let v = pop.map(*l).data()[i];
                if v > 0.0 && best.map_or(true, |(_, b)| v > b) {
                    best = Some((l.side, v));
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::labels::Feature;
    use crate::ventral::CellStage;

    #[test]
    fn normalized_difference_examples() {
        assert_eq!(normalized_difference(2.0, 1.0), Some(0.5));
        assert_eq!(normalized_difference(1.0, 1.0), Some(0.0));
        assert_eq!(normalized_difference(1.0, 2.0), Some(-0.5));
        assert_eq!(normalized_difference(0.0, 0.0), None);
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(0.2, 0.5).percent().unwrap() - 150.0).abs() < 1e-12);
        assert_eq!(improvement_pct(0.3, 0.3), Improvement::Percent(0.0));
        assert_eq!(improvement_pct(-0.1, 0.3), Improvement::NotComparable);
    }

    fn pop(f: impl Fn(Label) -> f64) -> BosPopulation {
        BosPopulation::from_labels(CellStage::BosFinal, Label::all().map(|l| Grid::filled(1, 1, f(l))).collect())
    }

    #[test]
    fn vmi_examples() {
        assert_eq!(vmi(&pop(|_| 0.7), 0, 0, Pool::All), (0.0, 0.0));
        let right = Label::new(Orientation::Vertical, Feature::BorderLightDark, Side::Right);
        let p = pop(|l| if l == right { 1.0 } else { 0.0 });
        assert_eq!(vmi(&p, 0, 0, Pool::All), (1.0, 0.0));
        let flipped = pop(|l| if l == right.twin() { 1.0 } else { 0.0 });
        assert_eq!(vmi(&flipped, 0, 0, Pool::All), (-1.0, 0.0));
    }

    #[test]
    fn max_direction_examples() {
        let up = Label::new(Orientation::Horizontal, Feature::EdgeDarkBar, Side::Up);
        let p = pop(|l| if l == up { 0.3 } else { 0.0 });
        assert_eq!(max_direction_map(&p, Pool::All), vec![Some((Side::Up, 0.3))]);
        assert_eq!(max_direction_map(&p, Pool::BorderOnly), vec![None]);
        assert_eq!(max_direction_map(&pop(|_| 0.0), Pool::All), vec![None]);
    }
}
