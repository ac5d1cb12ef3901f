//! The full feedforward-plus-relaxation pipeline for one canvas.

use serde::{Deserialize, Serialize};

use crate::bos::{self, BosPopulation, SurroundSpec};
use crate::dorsal::{self, DorsalParams};
use crate::error::Result;
use crate::filters::{self, DorsalClass, Kernel};
use crate::grid::Grid;
use crate::labels::Orientation;
use crate::relax::{self, CompatibilityFn, LabelSpace, RlParams};
use crate::stimulus::Canvas;
use crate::ventral::{self, ResponseVolume, VentralParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub ventral: VentralParams,
    pub dorsal: DorsalParams,
    pub surround: SurroundSpec,
    pub compat: CompatibilityFn,
    pub rl: RlParams,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.surround.validate()?;
        self.compat.validate()?;
        self.rl.validate()
    }
}

/// Intermediate volumes, kept on request for dumps.
#[derive(Clone, Debug)]
pub struct Intermediates {
    pub simple: ResponseVolume,
    pub complex: ResponseVolume,
    pub dorsal_simple: ResponseVolume,
    pub mt_on: ResponseVolume,
    pub mt_off: ResponseVolume,
    pub bos_multiscale: BosPopulation,
    /// Initial confidences followed by the state after each step.
    pub rl_trace: Vec<LabelSpace>,
}

#[derive(Clone, Debug)]
pub struct ModelOutput {
    /// Scale-selected responses before relaxation.
    pub pre: BosPopulation,
    pub post: BosPopulation,
    pub potentials: Vec<Grid>,
    pub iterations: usize,
    pub converged: bool,
    pub participating: usize,
    pub intermediates: Option<Box<Intermediates>>,
}

pub fn run_model(canvas: &Canvas, p: &ModelParams, keep: bool) -> Result<ModelOutput> {
    p.validate()?;
    let ppd = canvas.px_per_deg;
    let simple = ventral::simple_responses(canvas, &p.ventral)?;
    let complex = ventral::complex_responses(&simple, &p.ventral, ppd)?;
    let dorsal_simple = dorsal::dorsal_simple(canvas, &p.dorsal)?;
    let feed = dorsal::dorsal_feed(&dorsal_simple);
    let (mt_on, mt_off) = dorsal::mt_responses(&feed, &p.dorsal, ppd)?;
    let multi = bos::bos_initial(&complex, &mt_on, &mt_off, &p.surround, ppd)?;
    let pre = bos::scale_select(&multi);
    let space = relax::init_confidences(&pre, p.rl.participation_floor);
    let outcome = relax::rl_run_traced(&space, &p.compat, &p.rl, keep)?;
    let post = relax::apply_update(&pre, &outcome.potentials)?;
    let participating = space.participating_count();
    let intermediates = keep.then(|| {
        let mut rl_trace = vec![space];
        rl_trace.extend(outcome.trace);
        Box::new(Intermediates {
            simple,
            complex,
            dorsal_simple,
            mt_on,
            mt_off,
            bos_multiscale: multi,
            rl_trace,
        })
    });
    Ok(ModelOutput {
        pre,
        post,
        potentials: outcome.potentials,
        iterations: outcome.iterations,
        converged: outcome.converged,
        participating,
        intermediates,
    })
}

/// Every kernel the pipeline uses at `px_per_deg`, positive polarity only
/// (the negative polarity is the negation).
pub fn kernel_bank(p: &ModelParams, px_per_deg: f64) -> Result<Vec<Kernel>> {
    let mut out = Vec::new();
    for c in 0..ventral::NUM_SCALES {
        for o in Orientation::ALL {
            for border in [true, false] {
                out.push(p.ventral.kernel(o, border, c, px_per_deg)?);
            }
            for class in [DorsalClass::Border, DorsalClass::Edge] {
                out.push(filters::dorsal_simple_kernel(c, o.theta(), class, px_per_deg)?);
            }
            out.push(filters::mt_on_kernel(c, o.theta(), px_per_deg)?);
            out.push(filters::mt_off_kernel_with(c, o.theta(), px_per_deg, &p.dorsal.mt_off)?);
        }
        let rf = p.ventral.rf_px(c, px_per_deg) as f64;
        let mut pool = filters::gaussian_pool_kernel(p.ventral.pool_sigma_rf * rf, p.ventral.pool_truncate)?;
        pool.scale_index = c;
        out.push(pool);
    }
    Ok(out)
}
