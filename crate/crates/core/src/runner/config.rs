use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::PresetName;
use crate::data::DatasetParams;
use crate::error::{LabError, Result};
use crate::linalg::RankThreshold;
use crate::loss::{LossSpec, DEFAULT_BETA};
use crate::model::{ModelConfig, ProjectorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RankVsStrength,
    #[default]
    BoundTracking,
    DistanceHist,
    UnexplainedVariance,
    LabelMatch,
    CovarianceToy,
    Prop2Check,
    Prop4Check,
    FullSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::RankVsStrength,
        ExperimentKind::BoundTracking,
        ExperimentKind::DistanceHist,
        ExperimentKind::UnexplainedVariance,
        ExperimentKind::LabelMatch,
        ExperimentKind::CovarianceToy,
        ExperimentKind::Prop2Check,
        ExperimentKind::Prop4Check,
        ExperimentKind::FullSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::RankVsStrength => "rank_vs_strength",
            ExperimentKind::BoundTracking => "bound_tracking",
            ExperimentKind::DistanceHist => "distance_hist",
            ExperimentKind::UnexplainedVariance => "unexplained_variance",
            ExperimentKind::LabelMatch => "label_match",
            ExperimentKind::CovarianceToy => "covariance_toy",
            ExperimentKind::Prop2Check => "prop2_check",
            ExperimentKind::Prop4Check => "prop4_check",
            ExperimentKind::FullSweep => "full_sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
            LabError::Config(format!("unknown experiment `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · ½(1 + cos(π t / T))` with `t` the epoch index.
    Cosine,
}

impl LrSchedule {
    /// Rate used during epoch `epoch` (1-based) of `epochs`.
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = (epoch - 1) as f64 / epochs.max(1) as f64;
                base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dim: usize,
    pub enc_dim: usize,
    pub proj_dim: usize,
    pub leaky_slope: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self { hidden_dim: m.hidden_dim, enc_dim: m.enc_dim, proj_dim: m.proj_dim, leaky_slope: m.leaky_slope }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceSection {
    pub theta_grid: Vec<f64>,
    pub n_images: usize,
    pub n_seeds: usize,
}

impl Default for CovarianceSection {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self { theta_grid: vec![PI / 18.0, PI / 9.0, PI / 6.0, PI / 3.0, PI / 2.0, PI], n_images: 500, n_seeds: 5 }
    }
}

/// Settings of the invariance-only runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropSection {
    /// Dimension of the input subspace the shifts live in.
    pub shift_dim: usize,
    /// Shift coefficients are drawn from `U[-shift_scale, shift_scale]`.
    pub shift_scale: f64,
    /// Strength range of the single generator is `U[0, generator_strength]`.
    pub generator_strength: f64,
}

impl Default for PropSection {
    fn default() -> Self {
        Self { shift_dim: 3, shift_scale: 0.5, generator_strength: 1.2 }
    }
}

/// Everything one experiment needs. Unset keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub loss: LossSpec,
    pub preset: PresetName,
    pub n_generators: usize,
    pub projector: ProjectorKind,
    pub eval_size: usize,
    pub hist_bins: usize,
    /// Absolute threshold behind `rank_w_abs`.
    pub rank_tau_abs: f64,
    /// Threshold behind `rank_w_rel` and the covariance toy.
    pub tau_mode: RankThreshold,
    pub out_dir: PathBuf,
    pub dataset: DatasetParams,
    pub model: ModelSection,
    pub covariance: CovarianceSection,
    pub props: PropSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            seed: 0,
            epochs: 200,
            learning_rate: 0.05,
            lr_schedule: LrSchedule::Constant,
            momentum: 0.9,
            weight_decay: 0.008,
            batch_size: 64,
            beta: DEFAULT_BETA,
            loss: LossSpec::Infonce,
            preset: PresetName::Large,
            n_generators: 64,
            projector: ProjectorKind::Linear,
            eval_size: 128,
            hist_bins: 20,
            rank_tau_abs: 0.01,
            tau_mode: RankThreshold::Relative(0.01),
            out_dir: PathBuf::from("runs"),
            dataset: DatasetParams::default(),
            model: ModelSection::default(),
            covariance: CovarianceSection::default(),
            props: PropSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.message().to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.dataset.d,
            hidden_dim: self.model.hidden_dim,
            enc_dim: self.model.enc_dim,
            proj_dim: self.model.proj_dim,
            projector: self.projector,
            leaky_slope: self.model.leaky_slope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.preset == PresetName::Custom {
            return bad("preset must be one of small, moderate, large".into());
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("n_generators", self.n_generators),
            ("eval_size", self.eval_size),
            ("hist_bins", self.hist_bins),
            ("covariance.n_seeds", self.covariance.n_seeds),
            ("props.shift_dim", self.props.shift_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        self.dataset.validate().map_err(|e| LabError::Config(format!("dataset: {e}")))?;
        self.model_config().validate()?;
        if self.batch_size < 2 || self.batch_size > self.dataset.n {
            return bad(format!("batch_size must lie in [2, {}], got {}", self.dataset.n, self.batch_size));
        }
        if self.eval_size < 2 {
            return bad("eval_size must be at least 2".into());
        }
        if !(self.rank_tau_abs > 0.0) {
            return bad(format!("rank_tau_abs must be positive, got {}", self.rank_tau_abs));
        }
        self.tau_mode.validate().map_err(|e| LabError::Config(e.to_string()))?;
        let max_planes = self.dataset.d * (self.dataset.d - 1) / 2;
        if self.n_generators > max_planes {
            return bad(format!("n_generators {} exceeds the {max_planes} coordinate planes", self.n_generators));
        }
        if self.props.shift_dim > self.dataset.d || !(self.props.shift_scale > 0.0) {
            return bad("props.shift_dim must be <= dataset.d and shift_scale positive".into());
        }
        if !(self.props.generator_strength > 0.0) {
            return bad("props.generator_strength must be positive".into());
        }
        let grid = &self.covariance.theta_grid;
        if grid.is_empty()
            || grid.iter().any(|t| !(0.0..=std::f64::consts::PI).contains(t))
            || grid.windows(2).any(|w| w[1] < w[0])
        {
            return bad("covariance.theta_grid must be non-empty, ascending, within [0, pi]".into());
        }
        if self.covariance.n_images < 2 {
            return bad("covariance.n_images must be at least 2".into());
        }
        Ok(())
    }
}
