//! Ventral simple and complex cells over 2 orientations, 4 features and 4
//! scales.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filters::{self, DogParams, GaborParams, Kernel, Polarity};
use crate::grid::Grid;
use crate::labels::{Feature, Orientation};
use crate::stimulus::Canvas;

pub const NUM_ORIENTATIONS: usize = 2;
pub const NUM_FEATURES: usize = 4;
pub const NUM_SCALES: usize = 4;

/// Responses below this are numerical residue of zero-sum kernels.
pub const ZERO_FLUSH: f64 = 1e-12;

#[inline]
pub fn rectify(v: f64) -> f64 {
    if v > ZERO_FLUSH {
        v
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStage {
    Simple,
    Complex,
    DorsalSimple,
    MtOn,
    MtOff,
    BosInitial,
    BosFinal,
}

/// Maps indexed by (orientation, feature, scale). MT volumes use a single
/// feature slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseVolume {
    pub stage: CellStage,
    pub features: usize,
    pub scales: usize,
    maps: Vec<Grid>,
}

impl ResponseVolume {
    pub fn new(stage: CellStage, features: usize, scales: usize, maps: Vec<Grid>) -> Self {
        assert_eq!(maps.len(), NUM_ORIENTATIONS * features * scales);
        Self {
            stage,
            features,
            scales,
            maps,
        }
    }

    fn slot(&self, o: Orientation, feature: usize, scale: usize) -> usize {
        assert!(feature < self.features && scale < self.scales);
        (o.index() * self.features + feature) * self.scales + scale
    }

    pub fn get(&self, o: Orientation, feature: usize, scale: usize) -> &Grid {
        &self.maps[self.slot(o, feature, scale)]
    }

    pub fn map(&self, o: Orientation, f: Feature, scale: usize) -> &Grid {
        self.get(o, f.index(), scale)
    }

    pub fn maps(&self) -> &[Grid] {
        &self.maps
    }

    /// `(orientation, feature, scale)` for each map in storage order.
    pub fn indices(&self) -> Vec<(Orientation, usize, usize)> {
        let mut out = Vec::with_capacity(self.maps.len());
        for o in Orientation::ALL {
            for f in 0..self.features {
                for c in 0..self.scales {
                    out.push((o, f, c));
                }
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.maps.iter().map(Grid::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.maps.iter().map(Grid::max).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VentralParams {
    pub rf_deg: [f64; 4],
    pub gabor: GaborParams,
    pub dog: DogParams,
    /// Complex pooling sigma as a fraction of the simple-cell RF.
    pub pool_sigma_rf: f64,
    pub pool_truncate: f64,
}

impl Default for VentralParams {
    fn default() -> Self {
        Self {
            rf_deg: filters::VENTRAL_RF_DEG,
            gabor: GaborParams::default(),
            dog: DogParams::default(),
            pool_sigma_rf: 0.25,
            pool_truncate: 3.0,
        }
    }
}

impl VentralParams {
    pub fn rf_px(&self, scale: usize, px_per_deg: f64) -> usize {
        filters::odd_px(self.rf_deg[scale], px_per_deg)
    }

    /// Positive-polarity kernel of the class `feature` belongs to; the other
    /// polarity is its negation.
    pub fn kernel(&self, o: Orientation, border: bool, scale: usize, px_per_deg: f64) -> Result<Kernel> {
        let rf = self.rf_px(scale, px_per_deg);
        let k = if border {
            filters::gabor_kernel_with(rf, o.theta(), std::f64::consts::FRAC_PI_2, &self.gabor)?
        } else {
            filters::dog_edge_kernel_with(rf, o.theta(), Polarity::Pos, &self.dog)?
        };
        let mut k = k;
        k.scale_index = scale;
        Ok(k)
    }
}

/// Linear responses of the positive-polarity kernels, indexed (o, class, c),
/// class 0 = border, 1 = edge.
pub(crate) fn linear_pairs(
    canvas: &Canvas,
    kernel: impl Fn(Orientation, bool, usize) -> Result<Kernel> + Sync,
) -> Result<Vec<Grid>> {
    let jobs: Vec<(Orientation, bool, usize)> = Orientation::ALL
        .into_iter()
        .flat_map(|o| [true, false].into_iter().flat_map(move |b| (0..NUM_SCALES).map(move |c| (o, b, c))))
        .collect();
    jobs.par_iter()
        .map(|&(o, b, c)| filters::convolve(&canvas.luminance, &kernel(o, b, c)?))
        .collect()
}

/// Expands (o, class, c) linear maps into rectified (o, feature, c) maps.
pub(crate) fn split_polarities(linear: &[Grid], stage: CellStage, post: impl Fn(f64) -> f64 + Sync) -> ResponseVolume {
    let mut maps = Vec::with_capacity(NUM_ORIENTATIONS * NUM_FEATURES * NUM_SCALES);
    for o in Orientation::ALL {
        for f in Feature::ALL {
            let class = if f.is_border() { 0 } else { 1 };
            let sign = if f.is_light() { 1.0 } else { -1.0 };
            for c in 0..NUM_SCALES {
                let src = &linear[(o.index() * 2 + class) * NUM_SCALES + c];
                maps.push(src.map(|v| post(rectify(sign * v))));
            }
        }
    }
    ResponseVolume::new(stage, NUM_FEATURES, NUM_SCALES, maps)
}

/// Gabor (border) and DoG (bar) simple cells, half-wave rectified.
pub fn simple_responses(canvas: &Canvas, p: &VentralParams) -> Result<ResponseVolume> {
    let linear = linear_pairs(canvas, |o, b, c| p.kernel(o, b, c, canvas.px_per_deg))?;
    Ok(split_polarities(&linear, CellStage::Simple, |v| v))
}

/// Gaussian-weighted spatial pooling of each simple map, rectified.
pub fn complex_responses(simple: &ResponseVolume, p: &VentralParams, px_per_deg: f64) -> Result<ResponseVolume> {
    let kernels: Vec<Kernel> = (0..simple.scales)
        .map(|c| filters::gaussian_pool_kernel(p.pool_sigma_rf * p.rf_px(c, px_per_deg) as f64, p.pool_truncate))
        .collect::<Result<_>>()?;
    let maps = simple
        .indices()
        .par_iter()
        .zip(simple.maps().par_iter())
        .map(|(&(_, _, c), m)| Ok(filters::convolve(m, &kernels[c])?.map(rectify)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResponseVolume::new(CellStage::Complex, simple.features, simple.scales, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{make_square, StimulusSpec};

    fn canvas(g: Grid) -> Canvas {
        Canvas::from_grid(g, 32.0).unwrap()
    }

    #[test]
    fn uniform_canvas_gives_zero_volume() {
        let c = canvas(Grid::filled(120, 120, 0.5));
        let p = VentralParams::default();
        let s = simple_responses(&c, &p).unwrap();
        assert_eq!(s.max_value(), 0.0);
        let cx = complex_responses(&s, &p, 32.0).unwrap();
        assert_eq!(cx.max_value(), 0.0);
    }

    #[test]
    fn vertical_step_drives_vertical_border_cells_only() {
        let c = canvas(Grid::from_fn(120, 120, |x, _| if x < 60 { 1.0 } else { 0.0 }));
        let p = VentralParams::default();
        let s = simple_responses(&c, &p).unwrap();
        for scale in 0..4 {
            let v = s.map(Orientation::Vertical, Feature::BorderLightDark, scale);
            let row: Vec<f64> = (0..120).map(|x| v.get(x, 60)).collect();
            let argmax = (0..120).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!((59..=60).contains(&argmax), "scale {scale}: argmax {argmax}");
            for f in Feature::ALL {
                let h = s.map(Orientation::Horizontal, f, scale);
                assert!(h.get(60, 60).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn contrast_inversion_swaps_polarities() {
        let img = Grid::from_fn(100, 100, |x, y| if x < 50 && y > 30 { 1.0 } else { 0.0 });
        let p = VentralParams::default();
        let a = simple_responses(&canvas(img.clone()), &p).unwrap();
        let b = simple_responses(&canvas(img.map(|v| 1.0 - v)), &p).unwrap();
        let pairs = [
            (Feature::BorderLightDark, Feature::BorderDarkLight),
            (Feature::EdgeLightBar, Feature::EdgeDarkBar),
        ];
        for o in Orientation::ALL {
            for (f, g) in pairs {
                for c in 0..4 {
                    assert!(a.map(o, f, c).max_abs_diff(b.map(o, g, c)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn complex_impulse_response_is_pool_kernel() {
        let p = VentralParams::default();
        let mut maps = vec![Grid::zeros(61, 61); 32];
        maps[0].set(30, 30, 2.0);
        let simple = ResponseVolume::new(CellStage::Simple, 4, 4, maps);
        let cx = complex_responses(&simple, &p, 32.0).unwrap();
        let k = filters::gaussian_pool_kernel(p.pool_sigma_rf * 13.0, p.pool_truncate).unwrap();
        let r = k.width() / 2;
        for dy in 0..k.height() {
            for dx in 0..k.width() {
                let got = cx.maps()[0].get(30 + dx - r, 30 + dy - r);
                assert!((got - 2.0 * k.weights.get(dx, dy)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_ridge_is_wider_with_same_argmax() {
        let spec = StimulusSpec::default();
        let c = make_square(&spec).unwrap();
        let p = VentralParams::default();
        let s = simple_responses(&c, &p).unwrap();
        let cx = complex_responses(&s, &p, 32.0).unwrap();
        let o = Orientation::Vertical;
        let f = Feature::BorderLightDark;
        let width = |g: &Grid| {
            let peak = (150..250).map(|x| g.get(x, 200)).fold(0.0, f64::max);
            (150..250).filter(|&x| g.get(x, 200) > 0.5 * peak).count()
        };
        let argmax = |g: &Grid| (190..210).max_by(|&a, &b| g.get(a, 200).total_cmp(&g.get(b, 200))).unwrap();
        let sm = s.map(o, f, 3);
        let cm = cx.map(o, f, 3);
        assert!(width(cm) > width(sm));
        assert!((argmax(cm) as i64 - argmax(sm) as i64).abs() <= 1);
    }
}
