//! Experiment protocols. Stimuli run in parallel; rows, checks and summaries
//! are assembled in job order afterwards.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bos::BosPopulation;
use crate::config::{ExperimentConfig, ExperimentKind, NeuronSelector};
use crate::error::{domain, BosError, Result};
use crate::grid::Grid;
use crate::labels::{Feature, Label, Orientation, Side, NUM_LABELS};
use crate::metrics::{self, Pool};
use crate::model::{run_model, ModelOutput};
use crate::pgm;
use crate::report::{self, Check, ExperimentReport, MetricRow, StimulusRecord};
use crate::stimulus::{
    self, zhou_battery, BatteryItem, Canvas, FigureSide, Role, ShapeKind, StimulusSpec, BLACK, GRAY, WHITE,
};

/// Runs the configured experiment and writes its outputs under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.experiment {
        ExperimentKind::ZhouBattery => run_zhou_battery(cfg),
        ExperimentKind::PositionSweep => run_position_sweep(cfg),
        ExperimentKind::SizeSweep => run_size_sweep(cfg),
        ExperimentKind::SolidOutline => run_solid_outline(cfg),
        ExperimentKind::OverlapVmi => run_overlap_vmi(cfg),
        ExperimentKind::Kanizsa => run_kanizsa(cfg),
        ExperimentKind::All => run_all(cfg),
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BosError::Domain(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Job {
    id: String,
    pair_id: usize,
    kind: String,
    role: Role,
    param: String,
    canvas: Canvas,
    probe: (usize, usize),
    /// Center of the pair identity window: orientation of the border and
    /// its pixel-boundary position.
    strip: Option<(Orientation, i64)>,
}

/// Responses of all labels at the probe.
#[derive(Clone, Debug)]
struct ProbeValues {
    pre: [f64; NUM_LABELS],
    post: [f64; NUM_LABELS],
}

fn probe_values(out: &ModelOutput, (x, y): (usize, usize)) -> ProbeValues {
    let mut v = ProbeValues {
        pre: [0.0; NUM_LABELS],
        post: [0.0; NUM_LABELS],
    };
    for l in Label::all() {
        v.pre[l.index()] = out.pre.value(l, x, y);
        v.post[l.index()] = out.post.value(l, x, y);
    }
    v
}

struct Done<R> {
    record: StimulusRecord,
    artifacts: Vec<String>,
    readout: R,
}

fn label_file(l: Label) -> String {
    format!("{}_{}_{}", l.orientation.short(), l.feature.short(), l.side.name())
}

fn envelope(pop: &BosPopulation) -> Grid {
    let mut g = pop.map(Label::from_index(0)).clone();
    for m in pop.maps() {
        g = g.zip_with(m, f64::max);
    }
    g
}

struct Dumper<'a> {
    root: &'a Path,
    dir: String,
    manifest: Vec<(String, f64)>,
}

impl Dumper<'_> {
    fn scaled(&mut self, name: &str, g: &Grid) -> Result<()> {
        let s = pgm::write_scaled(&self.root.join(&self.dir).join(name), g)?;
        self.manifest.push((name.to_string(), s));
        Ok(())
    }

    fn signed(&mut self, name: &str, g: &Grid) -> Result<()> {
        let s = pgm::write_signed(&self.root.join(&self.dir).join(name), g)?;
        self.manifest.push((name.to_string(), s));
        Ok(())
    }

    /// Writes the scale manifest and returns every file relative to the
    /// root.
    fn finish(self, manifest: &str) -> Result<Vec<String>> {
        if self.manifest.is_empty() {
            return Ok(Vec::new());
        }
        let mut w = csv::Writer::from_path(self.root.join(&self.dir).join(manifest))?;
        w.write_record(["file", "scale"])?;
        for (f, s) in &self.manifest {
            w.write_record([f.as_str(), &format!("{s:e}")])?;
        }
        w.flush()?;
        let mut out: Vec<String> = self.manifest.iter().map(|(f, _)| format!("{}/{f}", self.dir)).collect();
        out.push(format!("{}/{manifest}", self.dir));
        Ok(out)
    }
}

fn dump_stimulus(cfg: &ExperimentConfig, exp: &str, job: &Job, out: &ModelOutput) -> Result<Vec<String>> {
    let o = &cfg.output;
    let mut artifacts = Vec::new();
    if !o.dump_maps && !o.dump_volumes && !o.dump_iterations {
        return Ok(artifacts);
    }
    let dir = format!("{exp}/{}/maps", job.id);
    if o.dump_maps {
        let canvas = format!("{dir}/canvas.pgm");
        pgm::write_canvas(&cfg.out.join(&canvas), &job.canvas)?;
        artifacts.push(canvas);
    }
    let mut d = Dumper {
        root: &cfg.out,
        dir,
        manifest: Vec::new(),
    };
    if o.dump_maps {
        d.scaled("bos_pre_max.pgm", &envelope(&out.pre))?;
        d.scaled("bos_post_max.pgm", &envelope(&out.post))?;
        if let NeuronSelector::One(l) = cfg.neuron {
            for l in [l, l.twin()] {
                d.scaled(&format!("{}_pre.pgm", label_file(l)), out.pre.map(l))?;
                d.scaled(&format!("{}_post.pgm", label_file(l)), out.post.map(l))?;
            }
        }
    }
    if o.dump_volumes {
        if let Some(im) = &out.intermediates {
            for (name, vol) in [
                ("simple", &im.simple),
                ("complex", &im.complex),
                ("dorsal_simple", &im.dorsal_simple),
                ("mt_on", &im.mt_on),
                ("mt_off", &im.mt_off),
            ] {
                for ((orient, f, c), g) in vol.indices().into_iter().zip(vol.maps()) {
                    let tag = if vol.features == 1 { "all".to_string() } else { Feature::ALL[f].short().to_string() };
                    d.scaled(&format!("{name}_{}_{tag}_s{c}.pgm", orient.short()), g)?;
                }
            }
            for l in Label::all() {
                for c in 0..im.bos_multiscale.scales {
                    d.scaled(&format!("bos_initial_{}_s{c}.pgm", label_file(l)), im.bos_multiscale.get(l, c))?;
                }
                d.scaled(&format!("bos_pre_{}.pgm", label_file(l)), out.pre.map(l))?;
                d.scaled(&format!("bos_post_{}.pgm", label_file(l)), out.post.map(l))?;
                d.signed(&format!("potential_{}.pgm", label_file(l)), &out.potentials[l.index()])?;
            }
        }
    }
    if o.dump_iterations {
        if let Some(im) = &out.intermediates {
            for (k, q) in im.rl_trace.iter().enumerate() {
                for l in Label::all() {
                    d.scaled(&format!("q_it{k:02}_{}.pgm", label_file(l)), q.q(l))?;
                }
            }
        }
    }
    artifacts.extend(d.finish("manifest.csv")?);
    Ok(artifacts)
}

/// Runs every job, dumping maps and extracting a readout per stimulus.
fn run_jobs<R: Send>(
    cfg: &ExperimentConfig,
    exp: &str,
    jobs: &[Job],
    read: impl Fn(&Job, &ModelOutput) -> Result<R> + Sync,
) -> Result<Vec<Done<R>>> {
    jobs.par_iter()
        .map(|job| {
            log::info!("{exp}: {}", job.id);
            let keep = cfg.output.dump_volumes || cfg.output.dump_iterations;
            let out = run_model(&job.canvas, &cfg.model, keep)?;
            let artifacts = dump_stimulus(cfg, exp, job, &out)?;
            let max_abs_potential = out
                .potentials
                .iter()
                .flat_map(|g| g.data().iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(Done {
                record: StimulusRecord {
                    stimulus_id: job.id.clone(),
                    iterations: out.iterations,
                    converged: out.converged,
                    participating: out.participating,
                    max_abs_potential,
                    clipped: job.canvas.meta.clipped,
                },
                artifacts,
                readout: read(job, &out)?,
            })
        })
        .collect()
}

/// sha256 of the luminance window of half-width 0.5 degrees around the
/// border center.
pub fn strip_hash(canvas: &Canvas, orientation: Orientation, border: i64) -> String {
    let half = (0.5 * canvas.px_per_deg).round().max(1.0) as i64;
    let (w, h) = (canvas.width() as i64, canvas.height() as i64);
    let mut hasher = Sha256::new();
    let (cx, cy) = match orientation {
        Orientation::Vertical => (border, h / 2),
        Orientation::Horizontal => (w / 2, border),
    };
    for y in cy - half..cy + half {
        for x in cx - half..cx + half {
            let v = canvas.luminance.get_signed(x as isize, y as isize).unwrap_or(-1.0);
            hasher.update(v.to_le_bytes());
        }
    }
    report::hex(&hasher.finalize())
}

fn pair_identity_check(jobs: &[Job]) -> Check {
    let mut total = 0;
    let mut bad = Vec::new();
    for pair in jobs.chunks(2) {
        if let [a, b] = pair {
            if let (Some(sa), Some(sb)) = (a.strip, b.strip) {
                total += 1;
                if strip_hash(&a.canvas, sa.0, sa.1) != strip_hash(&b.canvas, sb.0, sb.1) {
                    bad.push(format!("{}/{}", a.id, b.id));
                }
            }
        }
    }
    Check {
        name: "pair_identity".into(),
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{total}/{total} pairs share the central strip")
        } else {
            format!("strip differs for {}", bad.join(", "))
        },
    }
}

/// Whether the family's preferred step has the light side left of / above
/// the contour.
pub fn light_first(f: Feature) -> bool {
    f.is_light()
}

fn preferred_role(l: Label) -> Role {
    if l.side.slot() == 0 {
        Role::A
    } else {
        Role::B
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::A => "A",
        Role::B => "B",
    }
}

/// Neurons reported for a selected family: the family and its twin.
fn neurons(families: &[Label]) -> Vec<Label> {
    families.iter().flat_map(|&l| [l, l.twin()]).collect()
}

/// Families grouped by the display set that drives them:
/// `(orientation, light_first) -> families`.
fn groups(families: &[Label]) -> BTreeMap<(Orientation, bool), Vec<Label>> {
    let mut g: BTreeMap<(Orientation, bool), Vec<Label>> = BTreeMap::new();
    for &l in families {
        g.entry((l.orientation, light_first(l.feature))).or_default().push(l);
    }
    g
}

/// Rows for A/B pairs (`jobs[2k]`, `jobs[2k + 1]`).
fn pair_rows(jobs: &[Job], values: &[ProbeValues], neurons: &[Label]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for (pair, vals) in jobs.chunks(2).zip(values.chunks(2)) {
        for &l in neurons {
            let i = l.index();
            let pref = preferred_role(l);
            let (p, n) = if pref == Role::A { (&vals[0], &vals[1]) } else { (&vals[1], &vals[0]) };
            let d_pre = metrics::normalized_difference(p.pre[i], n.pre[i]);
            let d_post = metrics::normalized_difference(p.post[i], n.post[i]);
            let imp = match (d_pre, d_post) {
                (Some(a), Some(b)) => metrics::improvement_pct(a, b).percent(),
                _ => None,
            };
            for (job, v) in pair.iter().zip(vals) {
                rows.push(MetricRow {
                    stimulus_id: job.id.clone(),
                    pair_id: job.pair_id,
                    neuron: l.to_string(),
                    r_pre: v.pre[i],
                    r_post: v.post[i],
                    d_pre,
                    d_post,
                    improvement_pct: imp,
                    kind: job.kind.clone(),
                    role: role_name(job.role).into(),
                    param: job.param.clone(),
                });
            }
        }
    }
    rows
}

/// Flags reported neurons that never respond.
fn energy_failures(rows: &[MetricRow], neurons: &[Label]) -> Vec<String> {
    neurons
        .iter()
        .filter(|l| {
            let name = l.to_string();
            rows.iter().filter(|r| r.neuron == name).all(|r| r.r_pre <= 0.0 && r.r_post <= 0.0)
        })
        .map(|l| format!("neuron {l} has no response on any stimulus"))
        .collect()
}

fn finish<R>(
    cfg: &ExperimentConfig,
    exp: &str,
    jobs: &[Job],
    done: &[Done<R>],
    report: &mut ExperimentReport,
) -> Result<()> {
    for (job, d) in jobs.iter().zip(done) {
        let dir = format!("{exp}/{}", job.id);
        fs::create_dir_all(cfg.out.join(&dir))?;
        let rows: Vec<MetricRow> = report.rows.iter().filter(|r| r.stimulus_id == job.id).cloned().collect();
        report::write_rows(&cfg.out.join(&dir).join("rows.csv"), &rows)?;
        let mut rec = serde_json::to_string_pretty(&d.record)?;
        rec.push('\n');
        fs::write(cfg.out.join(&dir).join("record.json"), rec)?;
        report.artifacts.push(format!("{dir}/rows.csv"));
        report.artifacts.push(format!("{dir}/record.json"));
        report.artifacts.extend(d.artifacts.iter().cloned());
        report.stimuli.push(d.record.clone());
    }
    report.write(&cfg.out, exp)
}

fn square_pair(base: &StimulusSpec, o: Orientation, light: bool, size_deg: f64, offset: i64) -> [(Role, StimulusSpec); 2] {
    let (near, far) = if light { (WHITE, BLACK) } else { (BLACK, WHITE) };
    let sides = match o {
        Orientation::Vertical => [FigureSide::Left, FigureSide::Right],
        Orientation::Horizontal => [FigureSide::Up, FigureSide::Down],
    };
    let mk = |side, fig, gnd| StimulusSpec {
        shape_kind: ShapeKind::Square,
        figure_side: side,
        figure_lum: fig,
        ground_lum: gnd,
        size_deg,
        offset_px: offset,
        rotation: stimulus::Rotation::None,
        ..base.clone()
    };
    [(Role::A, mk(sides[0], near, far)), (Role::B, mk(sides[1], far, near))]
}

fn polarity_tag(light: bool) -> &'static str {
    if light {
        "light"
    } else {
        "dark"
    }
}

fn probe(spec: &StimulusSpec) -> (usize, usize) {
    (spec.width / 2, spec.height / 2)
}

fn center(spec: &StimulusSpec, o: Orientation) -> i64 {
    match o {
        Orientation::Vertical => (spec.width / 2) as i64,
        Orientation::Horizontal => (spec.height / 2) as i64,
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

#[derive(Serialize)]
struct FamilyBattery {
    neuron: String,
    min_d_pre: Option<f64>,
    min_d_post: Option<f64>,
    pairs_preferred_pre: usize,
    pairs_preferred_post: usize,
    mean_square_improvement_pct: Option<f64>,
    regressions: usize,
    /// Largest response on opposite-polarity columns over the largest on
    /// matching ones.
    opposite_polarity_ratio: Option<f64>,
}

pub fn run_zhou_battery(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::ZhouBattery.name();
    let families = cfg.neuron.families();
    let grouped = groups(&families);
    let mut jobs = Vec::new();
    let mut spans = Vec::new();
    for ((o, light), _) in &grouped {
        let start = jobs.len();
        let items = zhou_battery(*o == Orientation::Horizontal, *light, &cfg.stimulus, &cfg.battery)?;
        for BatteryItem {
            pair_id,
            kind,
            role,
            spec,
            canvas,
        } in items
        {
            jobs.push(Job {
                id: format!("zb-{}-{}-p{pair_id}-{}-{}", o.short(), polarity_tag(*light), kind.name(), role_name(role)),
                pair_id,
                kind: kind.name().into(),
                role,
                param: String::new(),
                probe: probe(&spec),
                strip: Some((*o, center(&spec, *o))),
                canvas,
            });
        }
        spans.push(start..jobs.len());
    }
    let done = run_jobs(cfg, exp, &jobs, |j, out| Ok(probe_values(out, j.probe)))?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    for ((_, fams), range) in grouped.iter().zip(&spans) {
        let vals: Vec<ProbeValues> = done[range.clone()].iter().map(|d| d.readout.clone()).collect();
        report.rows.extend(pair_rows(&jobs[range.clone()], &vals, &neurons(fams)));
    }
    report.checks.push(pair_identity_check(&jobs));
    report.failures.extend(energy_failures(&report.rows, &neurons(&families)));

    let mut fam_summaries = Vec::new();
    let mut square_imps = Vec::new();
    for &l in &families {
        let name = l.to_string();
        let rows: Vec<&MetricRow> = report.rows.iter().filter(|r| r.neuron == name && r.role == "A").collect();
        let pre: Vec<Option<f64>> = rows.iter().map(|r| r.d_pre).collect();
        let post: Vec<Option<f64>> = rows.iter().map(|r| r.d_post).collect();
        let imps: Vec<f64> = rows
            .iter()
            .filter(|r| is_square_kind(&r.kind))
            .filter_map(|r| r.improvement_pct)
            .collect();
        square_imps.extend(&imps);
        let matching: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.neuron == name && !r.kind.ends_with("_opposite"))
            .map(|r| r.r_post)
            .collect();
        let opposite: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.neuron == name && r.kind.ends_with("_opposite"))
            .map(|r| r.r_post)
            .collect();
        let mmax = matching.iter().cloned().fold(0.0, f64::max);
        fam_summaries.push(FamilyBattery {
            neuron: name,
            min_d_pre: min_opt(&pre),
            min_d_post: min_opt(&post),
            pairs_preferred_pre: pre.iter().filter(|d| d.map_or(false, |d| d > 0.0)).count(),
            pairs_preferred_post: post.iter().filter(|d| d.map_or(false, |d| d > 0.0)).count(),
            mean_square_improvement_pct: mean(imps),
            regressions: rows
                .iter()
                .filter(|r| match (r.d_pre, r.d_post) {
                    (Some(a), Some(b)) => b < a,
                    _ => true,
                })
                .count(),
            opposite_polarity_ratio: (mmax > 0.0).then(|| opposite.iter().cloned().fold(0.0, f64::max) / mmax),
        });
    }
    report.summarize("families", &fam_summaries)?;
    report.summarize("mean_square_improvement_pct", mean(square_imps))?;
    report.summarize("max_iterations", done.iter().map(|d| d.record.iterations).max())?;
    report.summarize(
        "max_abs_potential",
        done.iter().map(|d| d.record.max_abs_potential).fold(0.0, f64::max),
    )?;
    write_bars(cfg, exp, &report.rows, &mut report.artifacts)?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

fn is_square_kind(kind: &str) -> bool {
    kind.contains("square") && kind != "overlapping_squares"
}

fn min_opt(v: &[Option<f64>]) -> Option<f64> {
    v.iter().try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
}

/// Bar-chart data: one line per (neuron, pair) with A and B responses
/// before and after relaxation.
fn write_bars(cfg: &ExperimentConfig, exp: &str, rows: &[MetricRow], artifacts: &mut Vec<String>) -> Result<()> {
    let rel = format!("{exp}/bars.csv");
    fs::create_dir_all(cfg.out.join(exp))?;
    let mut w = csv::Writer::from_path(cfg.out.join(&rel))?;
    w.write_record(["neuron", "pair_id", "kind", "a_pre", "b_pre", "a_post", "b_post", "d_pre", "d_post"])?;
    for pair in rows.chunks(2) {
        if let [a, b] = pair {
            let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            let polarity = a.stimulus_id.split('-').nth(2).unwrap_or("");
            w.write_record([
                a.neuron.clone(),
                a.pair_id.to_string(),
                format!("{}:{polarity}", a.kind),
                a.r_pre.to_string(),
                b.r_pre.to_string(),
                a.r_post.to_string(),
                b.r_post.to_string(),
                f(a.d_pre),
                f(a.d_post),
            ])?;
        }
    }
    w.flush()?;
    artifacts.push(rel);
    Ok(())
}

/// Families used by sweeps when every family is selected: the vertical
/// light-left step and light bar.
fn sweep_families(sel: NeuronSelector) -> Vec<Label> {
    match sel {
        NeuronSelector::All => vec![
            Label::new(Orientation::Vertical, Feature::BorderLightDark, Side::Left),
            Label::new(Orientation::Vertical, Feature::EdgeLightBar, Side::Left),
        ],
        NeuronSelector::One(l) => vec![l],
    }
}

#[derive(Serialize)]
struct SweepSummary {
    neuron: String,
    argmax_offset_px: i64,
    unimodal: bool,
    preferred_dominates: bool,
    peak: f64,
}

pub fn run_position_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::PositionSweep.name();
    let families = sweep_families(cfg.neuron);
    let s = &cfg.sweep;
    let offsets: Vec<i64> = (-s.position_range_px..=s.position_range_px)
        .filter(|k| (k + s.position_range_px) % s.position_step_px == 0)
        .collect();
    let mut jobs = Vec::new();
    // Border families see a step, bar families a line.
    let mut grouped: BTreeMap<(Orientation, bool, bool), Vec<Label>> = BTreeMap::new();
    for &l in &families {
        grouped
            .entry((l.orientation, light_first(l.feature), !l.feature.is_border()))
            .or_default()
            .push(l);
    }
    for ((o, light, line), _) in &grouped {
        let kind = if *line { "outline" } else { "square" };
        for (pi, &k) in offsets.iter().enumerate() {
            let pair = if *line {
                outline_pair(&cfg.stimulus, *o, *light, cfg.battery.small_deg, k)
            } else {
                square_pair(&cfg.stimulus, *o, *light, cfg.battery.small_deg, k)
            };
            for (role, spec) in pair {
                jobs.push(Job {
                    id: format!("ps-{}-{}-{kind}-{k:+}-{}", o.short(), polarity_tag(*light), role_name(role)),
                    pair_id: pi,
                    kind: kind.into(),
                    role,
                    param: format!("offset_px={k}"),
                    probe: probe(&spec),
                    strip: Some((*o, center(&spec, *o) + k)),
                    canvas: stimulus::make_display(&spec)?,
                });
            }
        }
    }
    let done = run_jobs(cfg, exp, &jobs, |j, out| Ok(probe_values(out, j.probe)))?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    let per_group = 2 * offsets.len();
    let mut summaries = Vec::new();
    for (gi, (_, fams)) in grouped.iter().enumerate() {
        let range = gi * per_group..(gi + 1) * per_group;
        let vals: Vec<ProbeValues> = done[range.clone()].iter().map(|d| d.readout.clone()).collect();
        report.rows.extend(pair_rows(&jobs[range], &vals, &neurons(fams)));
        for &l in fams {
            let i = l.index();
            let (p, n): (Vec<f64>, Vec<f64>) = vals
                .chunks(2)
                .map(|v| if preferred_role(l) == Role::A { (v[0].post[i], v[1].post[i]) } else { (v[1].post[i], v[0].post[i]) })
                .unzip();
            let (am, peak) = argmax(&p);
            summaries.push(SweepSummary {
                neuron: l.to_string(),
                argmax_offset_px: offsets[am],
                unimodal: is_unimodal(&p),
                preferred_dominates: p.iter().zip(&n).all(|(a, b)| *a <= 0.1 * peak || a > b),
                peak,
            });
        }
    }
    report.checks.push(pair_identity_check(&jobs));
    report.failures.extend(energy_failures(&report.rows, &neurons(&families)));
    report.summarize("families", &summaries)?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
}

/// Non-decreasing up to the peak and non-increasing after it, up to a
/// relative tolerance of 1e-9 of the peak.
pub fn is_unimodal(v: &[f64]) -> bool {
    let (m, peak) = argmax(v);
    let tol = 1e-9 * peak.abs();
    v[..=m].windows(2).all(|w| w[1] >= w[0] - tol) && v[m..].windows(2).all(|w| w[1] <= w[0] + tol)
}

#[derive(Serialize)]
struct SizeSummary {
    neuron: String,
    size_deg: f64,
    full_canvas: bool,
    d_pre: Option<f64>,
    d_post: Option<f64>,
}

pub fn run_size_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::SizeSweep.name();
    let families = sweep_families(cfg.neuron);
    let st = &cfg.stimulus;
    let mut sizes: Vec<(f64, bool)> = cfg.sweep.sizes_deg.iter().map(|&s| (s, false)).collect();
    if cfg.sweep.full_canvas {
        sizes.push((st.width.max(st.height) as f64 / st.px_per_deg, true));
    }
    let grouped = groups(&families);
    let mut jobs = Vec::new();
    for ((o, light), _) in &grouped {
        for (pi, &(size, full)) in sizes.iter().enumerate() {
            for (role, spec) in square_pair(st, *o, *light, size, 0) {
                jobs.push(Job {
                    id: format!("ss-{}-{}-{size}deg-{}", o.short(), polarity_tag(*light), role_name(role)),
                    pair_id: pi,
                    kind: if full { "full_canvas".into() } else { "square".into() },
                    role,
                    param: format!("size_deg={size}"),
                    probe: probe(&spec),
                    strip: Some((*o, center(&spec, *o))),
                    canvas: stimulus::make_square(&spec)?,
                });
            }
        }
    }
    let done = run_jobs(cfg, exp, &jobs, |j, out| Ok(probe_values(out, j.probe)))?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    let per_group = 2 * sizes.len();
    for (gi, (_, fams)) in grouped.iter().enumerate() {
        let range = gi * per_group..(gi + 1) * per_group;
        let vals: Vec<ProbeValues> = done[range.clone()].iter().map(|d| d.readout.clone()).collect();
        report.rows.extend(pair_rows(&jobs[range], &vals, &neurons(fams)));
    }
    let mut summaries = Vec::new();
    for &l in &families {
        let name = l.to_string();
        for r in report.rows.iter().filter(|r| r.neuron == name && r.role == "A") {
            summaries.push(SizeSummary {
                neuron: name.clone(),
                size_deg: sizes[r.pair_id].0,
                full_canvas: sizes[r.pair_id].1,
                d_pre: r.d_pre,
                d_post: r.d_post,
            });
        }
    }
    report.checks.push(pair_identity_check(&jobs));
    report.failures.extend(energy_failures(&report.rows, &neurons(&families)));
    report.summarize("sizes", &summaries)?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

#[derive(Serialize)]
struct OutlineSummary {
    neuron: String,
    solid_d_post: Option<f64>,
    outline_d_post: Option<f64>,
    solid_d_pre: Option<f64>,
    outline_d_pre: Option<f64>,
    sign_consistent: bool,
}

/// Outlined-square pair: the line straddles the canvas center and `B` is
/// the mirror image of `A`. Light families get a white outline on black.
fn outline_pair(base: &StimulusSpec, o: Orientation, light: bool, size_deg: f64, offset: i64) -> [(Role, StimulusSpec); 2] {
    let (line, gnd) = if light { (WHITE, BLACK) } else { (BLACK, WHITE) };
    let t = base.outline_width_px as i64;
    let sides = match o {
        Orientation::Vertical => [FigureSide::Left, FigureSide::Right],
        Orientation::Horizontal => [FigureSide::Up, FigureSide::Down],
    };
    let mk = |side, offset| StimulusSpec {
        shape_kind: ShapeKind::OutlinedSquare,
        figure_side: side,
        figure_lum: line,
        ground_lum: gnd,
        size_deg,
        offset_px: offset,
        rotation: stimulus::Rotation::None,
        ..base.clone()
    };
    [(Role::A, mk(sides[0], t / 2 + t % 2 + offset)), (Role::B, mk(sides[1], offset - t / 2))]
}

pub fn run_solid_outline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::SolidOutline.name();
    let families = cfg.neuron.families();
    let grouped = groups(&families);
    let size = cfg.battery.small_deg;
    let mut jobs = Vec::new();
    let mut spans = Vec::new();
    for ((o, light), _) in &grouped {
        let start = jobs.len();
        for (pi, outline) in [false, true].into_iter().enumerate() {
            let kind = if outline { "outline" } else { "solid" };
            let pair = if outline {
                outline_pair(&cfg.stimulus, *o, *light, size, 0)
            } else {
                square_pair(&cfg.stimulus, *o, *light, size, 0)
            };
            for (role, spec) in pair {
                jobs.push(Job {
                    id: format!("so-{}-{}-{kind}-{}", o.short(), polarity_tag(*light), role_name(role)),
                    pair_id: pi,
                    kind: kind.into(),
                    role,
                    param: String::new(),
                    probe: probe(&spec),
                    strip: Some((*o, center(&spec, *o))),
                    canvas: stimulus::make_display(&spec)?,
                });
            }
        }
        spans.push(start..jobs.len());
    }
    let done = run_jobs(cfg, exp, &jobs, |j, out| Ok(probe_values(out, j.probe)))?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    for ((_, fams), range) in grouped.iter().zip(&spans) {
        let vals: Vec<ProbeValues> = done[range.clone()].iter().map(|d| d.readout.clone()).collect();
        report.rows.extend(pair_rows(&jobs[range.clone()], &vals, &neurons(fams)));
    }
    let mut summaries = Vec::new();
    for &l in &families {
        let name = l.to_string();
        let find = |kind: &str| report.rows.iter().find(|r| r.neuron == name && r.kind == kind);
        let (s, o) = (find("solid"), find("outline"));
        let sd = s.and_then(|r| r.d_post);
        let od = o.and_then(|r| r.d_post);
        summaries.push(OutlineSummary {
            neuron: name.clone(),
            solid_d_post: sd,
            outline_d_post: od,
            solid_d_pre: s.and_then(|r| r.d_pre),
            outline_d_pre: o.and_then(|r| r.d_pre),
            sign_consistent: matches!((sd, od), (Some(a), Some(b)) if a.signum() == b.signum() && a != 0.0 && b != 0.0),
        });
    }
    report.checks.push(pair_identity_check(&jobs));
    report.failures.extend(energy_failures(&report.rows, &neurons(&families)));
    report.summarize("families", &summaries)?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

/// One boundary sample of a direction readout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionSample {
    pub x: usize,
    pub y: usize,
    pub vx: f64,
    pub vy: f64,
    pub direction: Option<Side>,
    pub strength: f64,
    /// Sides counted as correct.
    pub expected: Vec<Side>,
}

impl DirectionSample {
    pub fn active(&self) -> bool {
        self.direction.is_some()
    }

    pub fn correct(&self) -> bool {
        self.direction.map_or(false, |d| self.expected.contains(&d))
    }
}

/// Occluder pixels 4-adjacent to the occluded square, each expecting the
/// directions pointing away from its occluded neighbors.
pub fn occlusion_boundary(canvas: &Canvas) -> Result<Vec<(usize, usize, Vec<Side>)>> {
    let Some(occ) = canvas.meta.occluder_id else {
        return domain("canvas has no occluder");
    };
    let (w, h) = (canvas.width(), canvas.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if canvas.shape_id(x, y) != occ {
                continue;
            }
            let mut expected = Vec::new();
            for s in Side::ALL {
                let (dx, dy) = s.unit();
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let id = canvas.shape_id(nx as usize, ny as usize);
                if id != occ && id != stimulus::GROUND_ID {
                    expected.push(s.opposite());
                }
            }
            if !expected.is_empty() {
                out.push((x, y, expected));
            }
        }
    }
    Ok(out)
}

fn direction_samples(pop: &BosPopulation, pool: Pool, points: &[(usize, usize, Vec<Side>)]) -> Vec<DirectionSample> {
    let dirs = metrics::max_direction_map(pop, pool);
    let w = pop.width();
    points
        .iter()
        .map(|(x, y, expected)| {
            let (vx, vy) = metrics::vmi(pop, *x, *y, pool);
            let d = dirs[y * w + x];
            DirectionSample {
                x: *x,
                y: *y,
                vx,
                vy,
                direction: d.map(|d| d.0),
                strength: d.map_or(0.0, |d| d.1),
                expected: expected.clone(),
            }
        })
        .collect()
}

fn side_code(s: Option<Side>) -> u8 {
    match s {
        None => 0,
        Some(Side::Left) => 64,
        Some(Side::Right) => 128,
        Some(Side::Up) => 192,
        Some(Side::Down) => 255,
    }
}

/// Direction code / strength graymaps and VMI component maps of the
/// post-relaxation population.
fn dump_directions(cfg: &ExperimentConfig, exp: &str, job: &Job, pop: &BosPopulation, pool: Pool) -> Result<Vec<String>> {
    let (w, h) = (pop.width(), pop.height());
    let dirs = metrics::max_direction_map(pop, pool);
    let dir = format!("{exp}/{}/maps", job.id);
    let codes: Vec<u8> = dirs.iter().map(|d| side_code(d.map(|d| d.0))).collect();
    pgm::write_codes(&cfg.out.join(&dir).join("direction.pgm"), w, h, &codes)?;
    let mut d = Dumper {
        root: &cfg.out,
        dir: dir.clone(),
        manifest: Vec::new(),
    };
    // direction.pgm holds side codes: 0 none, 64 left, 128 right, 192 up,
    // 255 down.
    d.scaled("strength.pgm", &Grid::from_vec(w, h, dirs.iter().map(|d| d.map_or(0.0, |d| d.1)).collect()))?;
    let mut vx = Grid::zeros(w, h);
    let mut vy = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (a, b) = metrics::vmi(pop, x, y, pool);
            vx.set(x, y, a);
            vy.set(x, y, b);
        }
    }
    d.signed("vmi_x.pgm", &vx)?;
    d.signed("vmi_y.pgm", &vy)?;
    let mut out = vec![format!("{dir}/direction.pgm")];
    out.extend(d.finish("direction_manifest.csv")?);
    Ok(out)
}

fn write_samples(path: &Path, id: &str, samples: &[DirectionSample]) -> Result<()> {
    let exists = path.exists();
    let f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(f);
    if !exists {
        w.write_record(["stimulus_id", "x", "y", "vx", "vy", "direction", "strength", "expected", "correct"])?;
    }
    for s in samples {
        let expected: Vec<&str> = s.expected.iter().map(|e| e.name()).collect();
        w.write_record([
            id.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            s.vx.to_string(),
            s.vy.to_string(),
            s.direction.map_or("", |d| d.name()).to_string(),
            s.strength.to_string(),
            expected.join("|"),
            s.correct().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DirectionTally {
    pub samples: usize,
    pub active: usize,
    pub correct: usize,
}

impl DirectionTally {
    pub fn of(samples: &[DirectionSample]) -> Self {
        Self {
            samples: samples.len(),
            active: samples.iter().filter(|s| s.active()).count(),
            correct: samples.iter().filter(|s| s.correct()).count(),
        }
    }

    /// Correct fraction among active samples.
    pub fn fraction(&self) -> Option<f64> {
        (self.active > 0).then(|| self.correct as f64 / self.active as f64)
    }
}

struct DirReadout {
    probe: ProbeValues,
    pre: Vec<DirectionSample>,
    post: Vec<DirectionSample>,
    artifacts: Vec<String>,
}

/// Mean responses of every label over the samples expecting `side`.
struct EdgeMeans {
    side: Side,
    values: ProbeValues,
}

fn edge_means(out: &ModelOutput, points: &[(usize, usize, Vec<Side>)]) -> Vec<EdgeMeans> {
    let mut sides: Vec<Side> = points.iter().flat_map(|p| p.2.iter().copied()).collect();
    sides.sort();
    sides.dedup();
    sides
        .into_iter()
        .map(|side| {
            let pts: Vec<(usize, usize)> = points.iter().filter(|p| p.2 == [side]).map(|p| (p.0, p.1)).collect();
            let mut v = ProbeValues {
                pre: [0.0; NUM_LABELS],
                post: [0.0; NUM_LABELS],
            };
            for l in Label::all() {
                let i = l.index();
                v.pre[i] = mean(pts.iter().map(|&(x, y)| out.pre.value(l, x, y))).unwrap_or(0.0);
                v.post[i] = mean(pts.iter().map(|&(x, y)| out.post.value(l, x, y))).unwrap_or(0.0);
            }
            EdgeMeans { side, values: v }
        })
        .collect()
}

pub fn run_overlap_vmi(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::OverlapVmi.name();
    let families = sweep_families(cfg.neuron);
    let grouped = groups(&families);
    let mut jobs = Vec::new();
    for ((o, light), _) in &grouped {
        let (near, far) = if *light { (WHITE, BLACK) } else { (BLACK, WHITE) };
        let sides = match o {
            Orientation::Vertical => [FigureSide::Left, FigureSide::Right],
            Orientation::Horizontal => [FigureSide::Up, FigureSide::Down],
        };
        for (role, side, fig, other) in [(Role::A, sides[0], near, far), (Role::B, sides[1], far, near)] {
            let spec = StimulusSpec {
                shape_kind: ShapeKind::OverlappingSquares,
                figure_side: side,
                figure_lum: fig,
                other_lum: other,
                ground_lum: GRAY,
                size_deg: cfg.battery.overlap_deg,
                offset_px: 0,
                rotation: stimulus::Rotation::None,
                ..cfg.stimulus.clone()
            };
            jobs.push(Job {
                id: format!("ov-{}-{}-{}", o.short(), polarity_tag(*light), role_name(role)),
                pair_id: 0,
                kind: "overlapping_squares".into(),
                role,
                param: String::new(),
                probe: probe(&spec),
                strip: Some((*o, center(&spec, *o))),
                canvas: stimulus::make_display(&spec)?,
            });
        }
    }
    let done = run_jobs(cfg, exp, &jobs, |j, out| {
        let points = occlusion_boundary(&j.canvas)?;
        Ok(DirReadout {
            probe: probe_values(out, j.probe),
            pre: direction_samples(&out.pre, Pool::All, &points),
            post: direction_samples(&out.post, Pool::All, &points),
            artifacts: dump_directions(cfg, exp, j, &out.post, Pool::All)?,
        })
    })?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    for ((_, fams), pair) in grouped.iter().zip(jobs.chunks(2).zip(done.chunks(2))) {
        let vals: Vec<ProbeValues> = pair.1.iter().map(|d| d.readout.probe.clone()).collect();
        report.rows.extend(pair_rows(pair.0, &vals, &neurons(fams)));
    }
    let vmi_rel = format!("{exp}/vmi.csv");
    fs::create_dir_all(cfg.out.join(exp))?;
    let _ = fs::remove_file(cfg.out.join(&vmi_rel));
    let mut tallies = BTreeMap::new();
    let (mut pre_all, mut post_all) = (Vec::new(), Vec::new());
    for (job, d) in jobs.iter().zip(&done) {
        write_samples(&cfg.out.join(&vmi_rel), &job.id, &d.readout.post)?;
        tallies.insert(job.id.clone(), (DirectionTally::of(&d.readout.pre), DirectionTally::of(&d.readout.post)));
        pre_all.extend(d.readout.pre.iter().cloned());
        post_all.extend(d.readout.post.iter().cloned());
        report.artifacts.extend(d.readout.artifacts.iter().cloned());
    }
    report.artifacts.push(vmi_rel);
    report.checks.push(pair_identity_check(&jobs));
    report.failures.extend(energy_failures(&report.rows, &neurons(&families)));
    report.summarize("per_stimulus_pre_post", &tallies)?;
    report.summarize("boundary_pre", DirectionTally::of(&pre_all))?;
    report.summarize("boundary_post", DirectionTally::of(&post_all))?;
    report.summarize("into_occluder_fraction_post", DirectionTally::of(&post_all).fraction())?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

/// Mouth-edge samples of the first inducer: pixels on both sides of each
/// straight mouth edge, from a quarter radius out to the rim. The expected
/// side points into the inducer body.
pub fn mouth_edge_samples(spec: &StimulusSpec) -> Result<Vec<(usize, usize, Vec<Side>)>> {
    let pm = *stimulus::pacmen(spec)?.first().ok_or_else(|| BosError::Domain("no inducer".into()))?;
    let mut out = Vec::new();
    for sign in [-1.0, 1.0] {
        let a = pm.facing + sign * pm.mouth / 2.0;
        let (ux, uy) = (a.cos(), a.sin());
        // Normal pointing away from the mouth, into the body.
        let (nx, ny) = (-sign * uy, sign * ux);
        let into = Side::ALL
            .into_iter()
            .max_by(|p, q| {
                let dp = p.unit().0 as f64 * nx + p.unit().1 as f64 * ny;
                let dq = q.unit().0 as f64 * nx + q.unit().1 as f64 * ny;
                dp.total_cmp(&dq)
            })
            .unwrap_or(Side::Up);
        let mut t = (pm.radius / 4.0).ceil();
        while t < pm.radius {
            for off in [-0.5, 0.5] {
                let px = (pm.cx + (t + 0.5) * ux + off * nx).floor();
                let py = (pm.cy + (t + 0.5) * uy + off * ny).floor();
                if px >= 0.0 && py >= 0.0 && (px as usize) < spec.width && (py as usize) < spec.height {
                    let p = (px as usize, py as usize, vec![into]);
                    if !out.iter().any(|q: &(usize, usize, Vec<Side>)| q.0 == p.0 && q.1 == p.1) {
                        out.push(p);
                    }
                }
            }
            t += 1.0;
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct KanizsaSummary {
    count: u8,
    pre: DirectionTally,
    post: DirectionTally,
    /// Active samples pointing toward the display center (away from the
    /// inducer body).
    toward_center_post: usize,
    into_fraction_post: Option<f64>,
}

pub fn run_kanizsa(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::Kanizsa.name();
    let mut jobs = Vec::new();
    let mut specs = Vec::new();
    for (pi, count) in [1u8, 2, 4].into_iter().enumerate() {
        let spec = StimulusSpec {
            shape_kind: ShapeKind::PacmanDisplay,
            count,
            figure_lum: WHITE,
            ground_lum: BLACK,
            offset_px: 0,
            rotation: stimulus::Rotation::None,
            ..cfg.stimulus.clone()
        };
        jobs.push(Job {
            id: format!("kz-count{count}"),
            pair_id: pi,
            kind: "pacman_display".into(),
            role: Role::A,
            param: format!("count={count}"),
            probe: probe(&spec),
            strip: None,
            canvas: stimulus::make_display(&spec)?,
        });
        specs.push(spec);
    }
    let points = mouth_edge_samples(&specs[0])?;
    let done = run_jobs(cfg, exp, &jobs, |j, out| {
        Ok((
            DirReadout {
                probe: probe_values(out, j.probe),
                pre: direction_samples(&out.pre, Pool::BorderOnly, &points),
                post: direction_samples(&out.post, Pool::BorderOnly, &points),
                artifacts: dump_directions(cfg, exp, j, &out.post, Pool::BorderOnly)?,
            },
            edge_means(out, &points),
        ))
    })?;
    let mut report = ExperimentReport::new(exp, cfg)?;
    let rel = format!("{exp}/directions.csv");
    fs::create_dir_all(cfg.out.join(exp))?;
    let _ = fs::remove_file(cfg.out.join(&rel));
    let mut summaries = Vec::new();
    for (job, d) in jobs.iter().zip(&done) {
        let (dr, means) = &d.readout;
        write_samples(&cfg.out.join(&rel), &job.id, &dr.post)?;
        report.artifacts.extend(dr.artifacts.iter().cloned());
        let post = &dr.post;
        summaries.push(KanizsaSummary {
            count: specs[job.pair_id].count,
            pre: DirectionTally::of(&dr.pre),
            post: DirectionTally::of(post),
            toward_center_post: post
                .iter()
                .filter(|s| s.direction.map_or(false, |dir| s.expected.iter().any(|e| e.opposite() == dir)))
                .count(),
            into_fraction_post: DirectionTally::of(post).fraction(),
        });
        report.rows.extend(kanizsa_rows(job, means));
    }
    report.artifacts.push(rel);
    report.summarize("counts", &summaries)?;
    finish(cfg, exp, &jobs, &done, &mut report)?;
    Ok(report)
}

/// Per mouth edge and feature: mean response of the label owning toward the
/// inducer body (`A`) and of its twin (`B`), with `d` comparing the two.
fn kanizsa_rows(job: &Job, means: &[EdgeMeans]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for m in means {
        let o = m.side.orientation();
        for f in Feature::ALL {
            let l = Label::new(o, f, m.side);
            let (i, t) = (l.index(), l.twin().index());
            let v = &m.values;
            let d_pre = metrics::normalized_difference(v.pre[i], v.pre[t]);
            let d_post = metrics::normalized_difference(v.post[i], v.post[t]);
            let imp = match (d_pre, d_post) {
                (Some(a), Some(b)) => metrics::improvement_pct(a, b).percent(),
                _ => None,
            };
            for (role, idx) in [("A", i), ("B", t)] {
                rows.push(MetricRow {
                    stimulus_id: job.id.clone(),
                    pair_id: job.pair_id,
                    neuron: Label::from_index(idx).to_string(),
                    r_pre: v.pre[idx],
                    r_post: v.post[idx],
                    d_pre,
                    d_post,
                    improvement_pct: imp,
                    kind: format!("mouth_edge_{}", o.short()),
                    role: role.into(),
                    param: job.param.clone(),
                });
            }
        }
    }
    rows
}

pub fn run_all(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = ExperimentKind::All.name();
    let mut report = ExperimentReport::new(exp, cfg)?;
    for kind in ExperimentKind::CONCRETE {
        let sub = run_experiment(&ExperimentConfig {
            experiment: kind,
            ..cfg.clone()
        })?;
        report.rows.extend(sub.rows.iter().cloned());
        report.stimuli.extend(sub.stimuli.iter().cloned());
        report.checks.extend(sub.checks.iter().map(|c| Check {
            name: format!("{kind}.{}", c.name),
            ..c.clone()
        }));
        report.failures.extend(sub.failures.iter().map(|f| format!("{kind}: {f}")));
        report.artifacts.extend(sub.artifacts.iter().cloned());
        report.summarize(kind.name(), &sub.summary)?;
    }
    report.write(&cfg.out, exp)?;
    Ok(report)
}
