//! Plain-text experiment configuration: `key = value` lines grouped under
//! `[section]` headers, `#` comments. Unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bos::WeightFn;
use crate::error::{BosError, Result};
use crate::labels::{Feature, Label, Orientation};
use crate::model::ModelParams;
use crate::relax::PotentialMode;
use crate::stimulus::{BatteryGeometry, FigureSide, Rotation, ShapeKind, StimulusSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ZhouBattery,
    PositionSweep,
    SizeSweep,
    SolidOutline,
    OverlapVmi,
    Kanizsa,
    All,
}

impl ExperimentKind {
    /// The concrete experiments, in the order `all` runs them.
    pub const CONCRETE: [ExperimentKind; 6] = [
        ExperimentKind::ZhouBattery,
        ExperimentKind::PositionSweep,
        ExperimentKind::SizeSweep,
        ExperimentKind::SolidOutline,
        ExperimentKind::OverlapVmi,
        ExperimentKind::Kanizsa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ZhouBattery => "zhou_battery",
            ExperimentKind::PositionSweep => "position_sweep",
            ExperimentKind::SizeSweep => "size_sweep",
            ExperimentKind::SolidOutline => "solid_outline",
            ExperimentKind::OverlapVmi => "overlap_vmi",
            ExperimentKind::Kanizsa => "kanizsa",
            ExperimentKind::All => "all",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [ExperimentKind::All]
            .into_iter()
            .chain(ExperimentKind::CONCRETE)
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Which border-ownership neurons an experiment reports on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronSelector {
    /// The eight (orientation, feature) families, each with its left/up
    /// ownership preference.
    All,
    One(Label),
}

impl NeuronSelector {
    pub fn families(self) -> Vec<Label> {
        match self {
            NeuronSelector::All => Orientation::ALL
                .into_iter()
                .flat_map(|o| Feature::ALL.into_iter().map(move |f| Label::new(o, f, o.sides()[0])))
                .collect(),
            NeuronSelector::One(l) => vec![l],
        }
    }
}

impl FromStr for NeuronSelector {
    type Err = BosError;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            Ok(NeuronSelector::All)
        } else {
            Ok(NeuronSelector::One(s.parse()?))
        }
    }
}

impl fmt::Display for NeuronSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeuronSelector::All => f.write_str("all"),
            NeuronSelector::One(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub position_range_px: i64,
    pub position_step_px: i64,
    pub sizes_deg: Vec<f64>,
    /// Adds a square as wide as the canvas to the size sweep.
    pub full_canvas: bool,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            position_range_px: 32,
            position_step_px: 2,
            sizes_deg: vec![3.0, 4.0, 6.0, 8.0, 11.0],
            full_canvas: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputParams {
    /// Canvas and selected-neuron maps per stimulus.
    pub dump_maps: bool,
    /// Every intermediate volume per stimulus (large).
    pub dump_volumes: bool,
    /// Label confidences after every relaxation step.
    pub dump_iterations: bool,
}

impl Default for OutputParams {
    fn default() -> Self {
        Self {
            dump_maps: true,
            dump_volumes: false,
            dump_iterations: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub neuron: NeuronSelector,
    pub seed: u64,
    /// 0 uses all cores.
    pub threads: usize,
    pub out: PathBuf,
    pub stimulus: StimulusSpec,
    pub battery: BatteryGeometry,
    pub sweep: SweepParams,
    pub model: ModelParams,
    pub output: OutputParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::All,
            neuron: NeuronSelector::All,
            seed: 0,
            threads: 0,
            out: PathBuf::from("out"),
            stimulus: StimulusSpec::default(),
            battery: BatteryGeometry::default(),
            sweep: SweepParams::default(),
            model: ModelParams::default(),
            output: OutputParams::default(),
        }
    }
}

struct Ctx<'a> {
    path: &'a str,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, msg: impl Into<String>) -> BosError {
        BosError::Config {
            path: self.path.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn num<T: FromStr>(&self, key: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| self.err(format!("`{key}`: cannot parse `{v}`")))
    }

    fn boolean(&self, key: &str, v: &str) -> Result<bool> {
        match v {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.err(format!("`{key}`: expected true or false, got `{v}`"))),
        }
    }

    fn choice<T: Copy>(&self, key: &str, v: &str, options: &[(&str, T)]) -> Result<T> {
        options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            self.err(format!("`{key}`: expected one of {}, got `{v}`", names.join(", ")))
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BosError::Config {
            path: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses config text on top of the defaults, then validates.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let ctx = Ctx { path, line: i + 1 };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ctx.err("unterminated section header"))?;
                section = name.trim().to_string();
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(ctx.err(format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ctx.err("expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(ctx.err(format!("`{key}` has no value")));
            }
            cfg.set(&ctx, &section, key, value)?;
        }
        cfg.validate().map_err(|e| BosError::Config {
            path: path.to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.stimulus.validate()?;
        self.model.validate()?;
        let s = &self.sweep;
        if s.position_step_px <= 0 || s.position_range_px < 0 {
            return Err(BosError::Domain("position sweep needs step > 0 and range >= 0".into()));
        }
        if s.sizes_deg.is_empty() || s.sizes_deg.iter().any(|v| !(*v > 0.0)) {
            return Err(BosError::Domain("size sweep needs positive sizes".into()));
        }
        let b = &self.battery;
        if [b.small_deg, b.large_deg, b.c_shape_deg, b.overlap_deg].iter().any(|v| !(*v > 0.0)) {
            return Err(BosError::Domain("battery sizes must be positive".into()));
        }
        Ok(())
    }

    fn set(&mut self, ctx: &Ctx, section: &str, key: &str, v: &str) -> Result<()> {
        let st = &mut self.stimulus;
        let m = &mut self.model;
        let unknown = || ctx.err(format!("unknown key `{key}` in [{section}]"));
        match section {
            "" => match key {
                "experiment" => self.experiment = v.parse().map_err(|e: String| ctx.err(e))?,
                "neuron" => self.neuron = v.parse().map_err(|e: BosError| ctx.err(e.to_string()))?,
                "seed" => self.seed = ctx.num(key, v)?,
                "threads" => self.threads = ctx.num(key, v)?,
                "out" => self.out = PathBuf::from(v),
                _ => return Err(unknown()),
            },
            "canvas" => match key {
                "width" => st.width = ctx.num(key, v)?,
                "height" => st.height = ctx.num(key, v)?,
                "px_per_deg" => st.px_per_deg = ctx.num(key, v)?,
                _ => return Err(unknown()),
            },
            "stimulus" => match key {
                "shape_kind" => {
                    st.shape_kind = ctx.choice(
                        key,
                        v,
                        &[
                            ("square", ShapeKind::Square),
                            ("c_shape", ShapeKind::CShape),
                            ("overlapping_squares", ShapeKind::OverlappingSquares),
                            ("outlined_square", ShapeKind::OutlinedSquare),
                            ("pacman_display", ShapeKind::PacmanDisplay),
                        ],
                    )?
                }
                "figure_side" => {
                    st.figure_side = ctx.choice(
                        key,
                        v,
                        &[
                            ("left", FigureSide::Left),
                            ("right", FigureSide::Right),
                            ("up", FigureSide::Up),
                            ("down", FigureSide::Down),
                        ],
                    )?
                }
                "figure_lum" => st.figure_lum = ctx.num(key, v)?,
                "ground_lum" => st.ground_lum = ctx.num(key, v)?,
                "other_lum" => st.other_lum = ctx.num(key, v)?,
                "size_deg" => st.size_deg = ctx.num(key, v)?,
                "offset_px" => st.offset_px = ctx.num(key, v)?,
                "rotation" => st.rotation = ctx.choice(key, v, &[("0", Rotation::None), ("90", Rotation::Quarter)])?,
                "count" => st.count = ctx.num(key, v)?,
                "outline_width_px" => st.outline_width_px = ctx.num(key, v)?,
                "notch_depth" => st.geometry.notch_depth = ctx.num(key, v)?,
                "notch_height" => st.geometry.notch_height = ctx.num(key, v)?,
                "overlap_shift_x" => st.geometry.overlap_shift_x = ctx.num(key, v)?,
                "overlap_shift_y" => st.geometry.overlap_shift_y = ctx.num(key, v)?,
                "pacman_radius_deg" => st.geometry.pacman_radius_deg = ctx.num(key, v)?,
                "pacman_mouth_deg" => st.geometry.pacman_mouth_deg = ctx.num(key, v)?,
                "pacman_spacing_deg" => st.geometry.pacman_spacing_deg = ctx.num(key, v)?,
                _ => return Err(unknown()),
            },
            "battery" => match key {
                "small_deg" => self.battery.small_deg = ctx.num(key, v)?,
                "large_deg" => self.battery.large_deg = ctx.num(key, v)?,
                "c_shape_deg" => self.battery.c_shape_deg = ctx.num(key, v)?,
                "overlap_deg" => self.battery.overlap_deg = ctx.num(key, v)?,
                _ => return Err(unknown()),
            },
            "sweep" => match key {
                "position_range_px" => self.sweep.position_range_px = ctx.num(key, v)?,
                "position_step_px" => self.sweep.position_step_px = ctx.num(key, v)?,
                "sizes_deg" => {
                    self.sweep.sizes_deg = v
                        .split(',')
                        .map(|s| ctx.num::<f64>(key, s.trim()))
                        .collect::<Result<_>>()?
                }
                "full_canvas" => self.sweep.full_canvas = ctx.boolean(key, v)?,
                _ => return Err(unknown()),
            },
            "ventral" => {
                let p = &mut m.ventral;
                match key {
                    "gabor_aspect" => p.gabor.aspect = ctx.num(key, v)?,
                    "gabor_wavelength_rf" => p.gabor.wavelength_rf = ctx.num(key, v)?,
                    "gabor_sigma_rf" => p.gabor.sigma_rf = ctx.num(key, v)?,
                    "gabor_min_wavelength_px" => p.gabor.min_wavelength_px = ctx.num(key, v)?,
                    "dog_center_sigma_rf" => p.dog.center_sigma_rf = ctx.num(key, v)?,
                    "dog_surround_ratio" => p.dog.surround_ratio = ctx.num(key, v)?,
                    "dog_along_sigma_rf" => p.dog.along_sigma_rf = ctx.num(key, v)?,
                    "pool_sigma_rf" => p.pool_sigma_rf = ctx.num(key, v)?,
                    "pool_truncate" => p.pool_truncate = ctx.num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "dorsal" => {
                let p = &mut m.dorsal;
                match key {
                    "gamma" => p.rectifier.gamma = ctx.num(key, v)?,
                    "rho" => p.rectifier.rho = ctx.num(key, v)?,
                    "simple_gain" => p.simple_gain = ctx.num(key, v)?,
                    "mt_on_gain" => p.mt_on_gain = ctx.num(key, v)?,
                    "mt_off_gain" => p.mt_off_gain = ctx.num(key, v)?,
                    "mt_off_flank_offset" => p.mt_off.flank_offset = ctx.num(key, v)?,
                    "mt_off_flank_sigma" => p.mt_off.flank_sigma = ctx.num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "surround" => {
                let p = &mut m.surround;
                match key {
                    "max_extent_deg" => p.max_extent_deg = ctx.num(key, v)?,
                    "start_deg" => p.start_deg = ctx.num(key, v)?,
                    "spacing_rf" => p.spacing_rf = ctx.num(key, v)?,
                    "lateral_extent_deg" => p.lateral_extent_deg = ctx.num(key, v)?,
                    "weight_fn" => {
                        p.weight_fn = ctx.choice(
                            key,
                            v,
                            &[("linear", WeightFn::LinearNegativeSlope), ("gaussian", WeightFn::Gaussian)],
                        )?
                    }
                    "gaussian_sigma_frac" => p.gaussian_sigma_frac = ctx.num(key, v)?,
                    "on_weight" => p.on_weight = ctx.num(key, v)?,
                    "off_weight" => p.off_weight = ctx.num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "compat" => {
                let p = &mut m.compat;
                match key {
                    "strength" => p.strength = ctx.num(key, v)?,
                    "sigma_compat" => p.sigma_compat = ctx.num(key, v)?,
                    "incompat_slope" => p.incompat_slope = ctx.num(key, v)?,
                    "incompat_span" => p.incompat_span = ctx.num(key, v)?,
                    "radius_px" => p.radius_px = ctx.num(key, v)?,
                    "along_sigma_frac" => p.along_sigma_frac = ctx.num(key, v)?,
                    "across_sigma_frac" => p.across_sigma_frac = ctx.num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "rl" => {
                let p = &mut m.rl;
                match key {
                    "max_iter" => p.max_iter = ctx.num(key, v)?,
                    "epsilon" => p.epsilon = ctx.num(key, v)?,
                    "potential_gain" => p.potential_gain = ctx.num(key, v)?,
                    "potential_mode" => {
                        p.potential_mode = ctx.choice(
                            key,
                            v,
                            &[
                                ("delta", PotentialMode::Delta),
                                ("relative", PotentialMode::Relative),
                                ("pair_share", PotentialMode::PairShare),
                            ],
                        )?
                    }
                    "participation_floor" => p.participation_floor = ctx.num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "output" => match key {
                "dump_maps" => self.output.dump_maps = ctx.boolean(key, v)?,
                "dump_volumes" => self.output.dump_volumes = ctx.boolean(key, v)?,
                "dump_iterations" => self.output.dump_iterations = ctx.boolean(key, v)?,
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        }
        Ok(())
    }
}

const SECTIONS: [&str; 11] = [
    "canvas", "stimulus", "battery", "sweep", "ventral", "dorsal", "surround", "compat", "rl", "output", "",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("", "x.cfg").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn parses_sections_and_comments() {
        let text = "experiment = kanizsa  # trailing\nneuron = h,edb,down\n\n[rl]\nmax_iter = 7\npotential_mode = relative\n[sweep]\nsizes_deg = 3, 5.5\n[surround]\nweight_fn = gaussian\n";
        let c = ExperimentConfig::parse(text, "x.cfg").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Kanizsa);
        assert_eq!(c.neuron.to_string(), "h,edb,down");
        assert_eq!(c.model.rl.max_iter, 7);
        assert_eq!(c.model.rl.potential_mode, PotentialMode::Relative);
        assert_eq!(c.sweep.sizes_deg, vec![3.0, 5.5]);
        assert_eq!(c.model.surround.weight_fn, WeightFn::Gaussian);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("seed = 1\n[rl]\nmax_iterz = 3\n", 3),
            ("\n\nneuron = v,bld,up\n", 3),
            ("[bogus]\n", 1),
            ("[rl]\nmax_iter 3\n", 2),
            ("[dorsal]\nrho = abc\n", 2),
        ];
        for (text, line) in cases {
            match ExperimentConfig::parse(text, "bad.cfg") {
                Err(BosError::Config { line: l, path, .. }) => {
                    assert_eq!(l, line, "{text}");
                    assert_eq!(path, "bad.cfg");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn invariant_violations_are_rejected() {
        let r = ExperimentConfig::parse("[stimulus]\nfigure_lum = 0.5\nground_lum = 0.5\n", "c");
        assert!(matches!(r, Err(BosError::Config { .. })));
        let r = ExperimentConfig::parse("[compat]\nincompat_slope = 2\n", "c");
        assert!(r.is_err());
    }

    #[test]
    fn all_selector_lists_eight_families() {
        let f = NeuronSelector::All.families();
        assert_eq!(f.len(), 8);
        assert!(f.iter().all(|l| l.side.slot() == 0));
    }
}
