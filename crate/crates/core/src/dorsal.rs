//! Dorsal simple cells with the contrast rectifier and the MT on/off stage.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filters::{self, DorsalClass, MtOffParams};
use crate::grid::Grid;
use crate::labels::Orientation;
use crate::stimulus::Canvas;
use crate::ventral::{self, rectify, CellStage, ResponseVolume, NUM_SCALES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectifierParams {
    pub gamma: f64,
    pub rho: f64,
}

impl Default for RectifierParams {
    fn default() -> Self {
        Self { gamma: 0.001, rho: 0.02 }
    }
}

/// Contrast saturation `(1 - e^(-R/rho)) / (1 + e^(-R/rho) / gamma)`.
/// Maps `[0, inf)` into `[0, 1]`, non-decreasing (1 exactly once saturated
/// in floating point).
pub fn phi(r: f64, p: &RectifierParams) -> f64 {
    let e = (-r / p.rho).exp();
    (1.0 - e) / (1.0 + e / p.gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DorsalParams {
    pub rectifier: RectifierParams,
    /// Gain on the linear dorsal simple response before the rectifier.
    pub simple_gain: f64,
    pub mt_on_gain: f64,
    pub mt_off_gain: f64,
    pub mt_off: MtOffParams,
}

impl Default for DorsalParams {
    fn default() -> Self {
        Self {
            rectifier: RectifierParams::default(),
            simple_gain: 15.0,
            mt_on_gain: 10.0,
            mt_off_gain: 5.0,
            mt_off: MtOffParams::default(),
        }
    }
}

/// Dorsal simple cells: elongated border and edge kernels, half-wave
/// rectified, then passed through `phi`.
pub fn dorsal_simple(canvas: &Canvas, p: &DorsalParams) -> Result<ResponseVolume> {
    let ppd = canvas.px_per_deg;
    let linear = ventral::linear_pairs(canvas, |o, border, c| {
        let class = if border { DorsalClass::Border } else { DorsalClass::Edge };
        filters::dorsal_simple_kernel(c, o.theta(), class, ppd)
    })?;
    let (gain, rect) = (p.simple_gain, p.rectifier);
    Ok(ventral::split_polarities(&linear, CellStage::DorsalSimple, move |v| {
        if v > 0.0 {
            phi(gain * v, &rect)
        } else {
            0.0
        }
    }))
}

/// Per orientation and scale, the pointwise maximum over the four dorsal
/// selectivities. Returned as a single-feature volume.
pub fn dorsal_feed(volume: &ResponseVolume) -> ResponseVolume {
    let mut maps = Vec::with_capacity(2 * volume.scales);
    for o in Orientation::ALL {
        for c in 0..volume.scales {
            let mut m = volume.get(o, 0, c).clone();
            for f in 1..volume.features {
                m = m.zip_with(volume.get(o, f, c), f64::max);
            }
            maps.push(m);
        }
    }
    ResponseVolume::new(CellStage::DorsalSimple, 1, volume.scales, maps)
}

/// MT on- and off-center responses of each orientation's feed map.
pub fn mt_responses(feed: &ResponseVolume, p: &DorsalParams, px_per_deg: f64) -> Result<(ResponseVolume, ResponseVolume)> {
    let jobs: Vec<(bool, Orientation, usize)> = [true, false]
        .into_iter()
        .flat_map(|on| Orientation::ALL.into_iter().flat_map(move |o| (0..NUM_SCALES).map(move |c| (on, o, c))))
        .collect();
    let rect = p.rectifier;
    let maps = jobs
        .par_iter()
        .map(|&(on, o, c)| {
            let (k, gain) = if on {
                (filters::mt_on_kernel(c, o.theta(), px_per_deg)?, p.mt_on_gain)
            } else {
                (filters::mt_off_kernel_with(c, o.theta(), px_per_deg, &p.mt_off)?, p.mt_off_gain)
            };
            let lin = filters::convolve(feed.get(o, 0, c), &k)?;
            Ok(lin.map(|v| {
                let v = rectify(v);
                if v > 0.0 {
                    phi(gain * v, &rect)
                } else {
                    0.0
                }
            }))
        })
        .collect::<Result<Vec<Grid>>>()?;
    let mut maps = maps.into_iter();
    let on: Vec<Grid> = maps.by_ref().take(2 * NUM_SCALES).collect();
    let off: Vec<Grid> = maps.collect();
    Ok((
        ResponseVolume::new(CellStage::MtOn, 1, NUM_SCALES, on),
        ResponseVolume::new(CellStage::MtOff, 1, NUM_SCALES, off),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(g: Grid) -> Canvas {
        Canvas::from_grid(g, 32.0).unwrap()
    }

    #[test]
    fn phi_scalar_values() {
        let p = RectifierParams::default();
        assert_eq!(phi(0.0, &p), 0.0);
        // Oracle: direct evaluation written out.
        let e = (-1.0f64).exp();
        let want = (1.0 - e) / (1.0 + 1000.0 * e);
        assert!((phi(0.02, &p) - want).abs() < 1e-15);
        assert!((phi(0.02, &p) - 1.714e-3).abs() < 1e-6);
        assert!((phi(50.0, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_canvas_gives_zero_dorsal() {
        let c = canvas(Grid::filled(160, 160, 0.3));
        let p = DorsalParams::default();
        let d = dorsal_simple(&c, &p).unwrap();
        assert_eq!(d.max_value(), 0.0);
        let (on, off) = mt_responses(&dorsal_feed(&d), &p, 32.0).unwrap();
        assert_eq!(on.max_value(), 0.0);
        assert_eq!(off.max_value(), 0.0);
    }

    #[test]
    fn low_contrast_step_saturates() {
        let p = DorsalParams::default();
        let full = canvas(Grid::from_fn(120, 120, |x, _| if x < 60 { 1.0 } else { 0.0 }));
        let low = canvas(Grid::from_fn(120, 120, |x, _| if x < 60 { 0.51 } else { 0.49 }));
        let a = dorsal_simple(&full, &p).unwrap();
        let b = dorsal_simple(&low, &p).unwrap();
        for c in 0..4 {
            let m = |v: &ResponseVolume| v.get(Orientation::Vertical, 0, c).get(60, 60).max(v.get(Orientation::Vertical, 0, c).get(59, 60));
            assert!(m(&a) <= 1.0 && m(&a) > 0.9);
            assert!(m(&b) >= 0.5 * m(&a), "scale {c}: {} vs {}", m(&b), m(&a));
        }
    }

    #[test]
    fn feed_is_pointwise_max() {
        let mk = |seed: u64| Grid::from_fn(9, 7, |x, y| ((x * 31 + y * 17 + seed as usize * 7) % 11) as f64 / 11.0);
        let maps: Vec<Grid> = (0..32).map(|i| mk(i as u64)).collect();
        let vol = ResponseVolume::new(CellStage::DorsalSimple, 4, 4, maps.clone());
        let feed = dorsal_feed(&vol);
        for o in Orientation::ALL {
            for c in 0..4 {
                for y in 0..7 {
                    for x in 0..9 {
                        let mut best = f64::NEG_INFINITY;
                        for f in 0..4 {
                            best = best.max(maps[(o.index() * 4 + f) * 4 + c].get(x, y));
                        }
                        assert_eq!(feed.get(o, 0, c).get(x, y), best);
                    }
                }
            }
        }
    }

    #[test]
    fn single_bar_drives_mt_on_not_off() {
        let p = DorsalParams::default();
        let (w, h) = (200, 200);
        for c in 0..4 {
            let rf = filters::mt_rf_px(c, 32.0);
            let half = (rf / 20).max(1);
            let bar = Grid::from_fn(w, h, |x, y| {
                let inside = (x as i64 - 100).unsigned_abs() as usize <= half && (y as i64 - 100).unsigned_abs() as usize <= rf / 2;
                if inside {
                    1.0
                } else {
                    0.0
                }
            });
            let mut maps = vec![Grid::zeros(w, h); 8];
            maps[c] = bar;
            let feed = ResponseVolume::new(CellStage::DorsalSimple, 1, 4, maps);
            let (on, off) = mt_responses(&feed, &p, 32.0).unwrap();
            assert!(on.get(Orientation::Vertical, 0, c).get(100, 100) > 0.0, "scale {c}");
            assert_eq!(off.get(Orientation::Vertical, 0, c).get(100, 100), 0.0);
        }
    }
}
