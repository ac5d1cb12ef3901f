//! Border-ownership simulator: synthetic displays, a ventral/dorsal filter
//! hierarchy, MT-gated ownership responses and relaxation labeling.

pub mod bos;
pub mod config;
pub mod dorsal;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod grid;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod pgm;
pub mod relax;
pub mod report;
pub mod stimulus;
pub mod ventral;

pub use bos::{BosPopulation, SurroundSpec, WeightFn};
pub use error::{BosError, Result};
pub use filters::{CellClass, Kernel, Polarity};
pub use grid::Grid;
pub use labels::{Feature, Label, Orientation, Side};
pub use model::{run_model, ModelOutput, ModelParams};
pub use relax::{CompatibilityFn, LabelSpace, RlParams};
pub use stimulus::{Canvas, StimulusSpec};
pub use ventral::{CellStage, ResponseVolume};
