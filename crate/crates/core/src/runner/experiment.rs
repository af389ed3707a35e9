use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::train::{train_with, TrainOutcome, TrainSetup};
use crate::augment::PresetName;
use crate::diagnostics::{covariance_rank_experiment, pair_star_distance_hist, DiagnosticsRecord};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Files listed in the manifest may be incomplete.
    Failed,
}

/// Written as `manifest.json` into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: ExperimentKind,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Files written next to the manifest, relative to its directory.
    pub files: Vec<String>,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub config: ExperimentConfig,
    /// Per-epoch diagnostics of the run in this directory; empty for
    /// experiments that fan out into sub-runs or do not train.
    pub records: Vec<DiagnosticsRecord>,
}

/// Output directory plus the list of files written into it so far.
struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn sub(&mut self, name: &str) -> Result<OutDir> {
        self.files.push(format!("{name}/"));
        OutDir::create(&self.dir.join(name))
    }

    fn finish(
        self,
        cfg: &ExperimentConfig,
        start: Instant,
        records: Vec<DiagnosticsRecord>,
        outcome: &Result<()>,
    ) -> Result<ExperimentManifest> {
        let manifest = ExperimentManifest {
            experiment: cfg.experiment,
            status: if outcome.is_ok() { RunStatus::Completed } else { RunStatus::Failed },
            error: outcome.as_ref().err().map(ToString::to_string),
            files: self.files,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            config: cfg.clone(),
            records,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| LabError::Io(e.to_string()))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

fn epochs_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = format!("{}\n", DiagnosticsRecord::CSV_HEADER);
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn spectrum_csv(out: &TrainOutcome) -> String {
    let mut s = String::from("stage,index,log10_sigma\n");
    for (stage, snap) in [("initial", &out.initial), ("final", &out.last)] {
        for (k, v) in snap.spectrum.iter().enumerate() {
            let _ = writeln!(s, "{stage},{k},{v}");
        }
    }
    s
}

fn histogram_csv(out: &TrainOutcome, bins: usize) -> Result<String> {
    let mut s = String::from("stage,bin_lo,bin_hi,count,scale\n");
    for (stage, snap) in [("initial", &out.initial), ("final", &out.last)] {
        let h = pair_star_distance_hist(snap.embeddings.h1(), &snap.h_star, bins)?;
        for (k, c) in h.counts.iter().enumerate() {
            let _ = writeln!(s, "{stage},{},{},{c},{}", h.edges[k], h.edges[k + 1], h.scale);
        }
    }
    Ok(s)
}

/// Trains one run into `dir` and writes its manifest, diagnostics,
/// spectrum and dataset (plus the distance histogram when asked).
fn training_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    setup: &TrainSetup,
    with_hist: bool,
) -> Result<(ExperimentManifest, Option<TrainOutcome>)> {
    let start = Instant::now();
    let mut out = OutDir::create(dir)?;
    let mut trained = None;
    let outcome = (|| {
        let t = train_with(cfg, setup)?;
        out.write("epochs.csv", &epochs_csv(&t.manifest.records))?;
        out.write("spectrum.csv", &spectrum_csv(&t))?;
        let mut data = Vec::new();
        setup.dataset.write_csv(&mut data)?;
        out.write("dataset.csv", &String::from_utf8(data).expect("CSV is ASCII"))?;
        if with_hist {
            out.write("histogram.csv", &histogram_csv(&t, cfg.hist_bins)?)?;
        }
        trained = Some(t);
        Ok(())
    })();
    let records = trained.as_ref().map(|t| t.manifest.records.clone()).unwrap_or_default();
    let manifest = out.finish(cfg, start, records, &outcome)?;
    outcome.map(|_| (manifest, trained))
}

fn preset_runs(
    out: &mut OutDir,
    cfg: &ExperimentConfig,
    presets: &[PresetName],
) -> Result<Vec<(PresetName, TrainOutcome)>> {
    presets
        .iter()
        .map(|&preset| {
            let run_cfg = ExperimentConfig { preset, ..cfg.clone() };
            let dir = out.sub(preset.as_str())?.dir;
            let (_, t) = training_run(&dir, &run_cfg, &TrainSetup::from_config(&run_cfg)?, false)?;
            Ok((preset, t.expect("completed run carries its outcome")))
        })
        .collect()
}

fn rank_vs_strength(out: &mut OutDir, cfg: &ExperimentConfig) -> Result<()> {
    let runs = preset_runs(out, cfg, &[PresetName::Small, PresetName::Moderate, PresetName::Large])?;
    let mut s = String::from("preset,max_strength,epoch,rank_w_abs,rank_w_rel\n");
    for (preset, t) in &runs {
        let eps = preset.max_strength().unwrap_or(f64::NAN);
        for r in &t.manifest.records {
            let _ = writeln!(s, "{},{eps},{},{},{}", preset.as_str(), r.epoch, r.rank_w_abs, r.rank_w_rel);
        }
    }
    out.write("rank_vs_strength.csv", &s)
}

fn label_match(out: &mut OutDir, cfg: &ExperimentConfig) -> Result<()> {
    let runs = preset_runs(out, cfg, &[PresetName::Small, PresetName::Large])?;
    let mut s = String::from("preset,epoch,label_match_fine,label_match_coarse\n");
    for (preset, t) in &runs {
        for r in &t.manifest.records {
            let _ = writeln!(s, "{},{},{},{}", preset.as_str(), r.epoch, r.label_match_fine, r.label_match_coarse);
        }
    }
    out.write("label_match.csv", &s)
}

fn covariance_toy(out: &mut OutDir, cfg: &ExperimentConfig) -> Result<()> {
    let c = &cfg.covariance;
    let rows = covariance_rank_experiment(&c.theta_grid, c.n_images, c.n_seeds, cfg.tau_mode, cfg.seed)?;
    let mut s = String::from("theta_max,mean_rank,std_rank\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.theta_max, r.mean_rank, r.std_rank);
    }
    out.write("covariance_rank.csv", &s)
}

fn full_sweep(out: &mut OutDir, cfg: &ExperimentConfig) -> Result<()> {
    let kinds: Vec<ExperimentKind> =
        ExperimentKind::ALL.into_iter().filter(|k| *k != ExperimentKind::FullSweep).collect();
    let mut configs = Vec::new();
    for &kind in &kinds {
        let dir = out.sub(kind.as_str())?.dir;
        configs.push(ExperimentConfig { experiment: kind, out_dir: dir, ..cfg.clone() });
    }
    let results: Vec<Result<ExperimentManifest>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run_experiment(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(LabError::Io("sweep worker panicked".into()))))
            .collect()
    });
    let failed: Vec<String> =
        kinds.iter().zip(&results).filter_map(|(k, r)| r.as_ref().err().map(|e| format!("{k}: {e}"))).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LabError::Io(format!("sweep members failed: {}", failed.join("; "))))
    }
}

/// Runs the configured experiment and writes its files under `cfg.out_dir`.
///
/// The configuration is validated before anything touches the filesystem.
/// A failure after that point still leaves a `manifest.json` with status
/// `failed` and the list of files written so far.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentManifest> {
    cfg.validate()?;
    let single = |setup: fn(&ExperimentConfig) -> Result<TrainSetup>, hist: bool| -> Result<ExperimentManifest> {
        let start = Instant::now();
        match setup(cfg) {
            Ok(s) => training_run(&cfg.out_dir, cfg, &s, hist).map(|(m, _)| m),
            Err(e) => {
                OutDir::create(&cfg.out_dir)?.finish(cfg, start, Vec::new(), &Err(e.clone()))?;
                Err(e)
            }
        }
    };
    match cfg.experiment {
        ExperimentKind::BoundTracking | ExperimentKind::UnexplainedVariance => single(TrainSetup::from_config, false),
        ExperimentKind::DistanceHist => single(TrainSetup::from_config, true),
        ExperimentKind::Prop2Check => single(TrainSetup::subspace_shift, false),
        ExperimentKind::Prop4Check => single(TrainSetup::single_generator, false),
        kind => {
            let start = Instant::now();
            let mut out = OutDir::create(&cfg.out_dir)?;
            let outcome = match kind {
                ExperimentKind::RankVsStrength => rank_vs_strength(&mut out, cfg),
                ExperimentKind::LabelMatch => label_match(&mut out, cfg),
                ExperimentKind::CovarianceToy => covariance_toy(&mut out, cfg),
                ExperimentKind::FullSweep => full_sweep(&mut out, cfg),
                _ => unreachable!("single-run experiments handled above"),
            };
            let manifest = out.finish(cfg, start, Vec::new(), &outcome)?;
            outcome.map(|_| manifest)
        }
    }
}
