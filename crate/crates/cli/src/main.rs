use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use contrastive_lab::augment::PresetName;
use contrastive_lab::model::ProjectorKind;
use contrastive_lab::runner::{run_experiment, ExperimentConfig, ExperimentKind};
use contrastive_lab::LabError;

/// Run contrastive-learning geometry experiments on synthetic data.
///
/// Flags override values read from the config file.
#[derive(Debug, Parser)]
#[command(name = "clab", version)]
struct Cli {
    /// Experiment to run (e.g. bound_tracking, rank_vs_strength, full_sweep).
    #[arg(long)]
    experiment: Option<String>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, value_enum)]
    projector: Option<ProjectorArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Moderate,
    Large,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectorArg {
    Linear,
    Mlp,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn build_config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &cli.experiment {
        cfg.experiment = name.parse::<ExperimentKind>()?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = cli.epochs {
        cfg.epochs = epochs;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(p) = cli.preset {
        cfg.preset = match p {
            PresetArg::Small => PresetName::Small,
            PresetArg::Moderate => PresetName::Moderate,
            PresetArg::Large => PresetName::Large,
        };
    }
    if let Some(p) = cli.projector {
        cfg.projector = match p {
            ProjectorArg::Linear => ProjectorKind::Linear,
            ProjectorArg::Mlp => ProjectorKind::Mlp,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };

    log::info!("running {} into {}", cfg.experiment, cfg.out_dir.display());
    match run_experiment(&cfg) {
        Ok(m) => {
            println!(
                "{} finished in {:.1}s; wrote {} to {}",
                cfg.experiment,
                m.wall_clock_seconds,
                m.files.join(", "),
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = if matches!(e, LabError::Config(_)) { EXIT_VALIDATION } else { EXIT_RUNTIME };
            ExitCode::from(code)
        }
    }
}
