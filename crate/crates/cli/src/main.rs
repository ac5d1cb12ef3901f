use std::path::PathBuf;
use std::process::ExitCode;

use bos_core::config::{ExperimentConfig, ExperimentKind, NeuronSelector};
use bos_core::{experiments, model, pgm, stimulus, BosError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bos-sim", version, about = "Border-ownership model simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report.
    Run(RunArgs),
    /// Write every filter kernel as text.
    DumpKernels {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "kernels")]
        out: PathBuf,
    },
    /// Render the configured stimulus as a graymap.
    RenderStimulus {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "stimulus.pgm")]
        out: PathBuf,
    },
    /// Parse and validate a config file.
    ValidateConfig { file: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `all` or `<orientation>,<feature>,<side>`, e.g. `v,bld,left`.
    #[arg(long)]
    neuron: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn load(path: Option<&PathBuf>) -> Result<ExperimentConfig, BosError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(args: RunArgs) -> Result<ExitCode, BosError> {
    let mut cfg = load(args.config.as_ref())?;
    if let Some(e) = args.experiment {
        cfg.experiment = e;
    }
    if let Some(o) = args.out {
        cfg.out = o;
    }
    if let Some(n) = &args.neuron {
        cfg.neuron = n.parse::<NeuronSelector>().map_err(|e| BosError::Config {
            path: "--neuron".into(),
            line: 0,
            msg: e.to_string(),
        })?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    let report = experiments::with_threads(cfg.threads, || experiments::run_experiment(&cfg))??;
    let dir = cfg.out.join(report.experiment.as_str());
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check {} failed: {}", c.name, c.detail);
    }
    for f in &report.failures {
        eprintln!("failure: {f}");
    }
    println!("{} rows, report in {}", report.rows.len(), dir.join("report.json").display());
    Ok(if report.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn dispatch(cli: Cli) -> Result<ExitCode, BosError> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::DumpKernels { config, out } => {
            let cfg = load(config.as_ref())?;
            let bank = model::kernel_bank(&cfg.model, cfg.stimulus.px_per_deg)?;
            let paths = bos_core::filters::dump_kernels(&bank, &out)?;
            println!("{} kernels written to {}", paths.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::RenderStimulus { config, out } => {
            let cfg = load(config.as_ref())?;
            let canvas = stimulus::make_display(&cfg.stimulus)?;
            pgm::write_canvas(&out, &canvas)?;
            if canvas.meta.clipped {
                eprintln!("warning: figure clipped by the canvas");
            }
            println!("{}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { file } => {
            ExperimentConfig::load(&file)?;
            println!("{}: ok", file.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e @ (BosError::Config { .. } | BosError::Selector(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
