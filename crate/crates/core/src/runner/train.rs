use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::augment::{AugmentationPolicy, PresetName, StrengthDistribution};
use crate::data::{
    generate_manifold_dataset, make_pair_batch, sample_indices, Augmenter, Batch, PairMode, SubspaceShift,
    SyntheticDataset,
};
use crate::diagnostics::{
    encoder_spectrum, estimate_generator, generator_alignment, kernel_alignment, label_match_rate,
    mean_pair_star_distance, projector_rank, unexplained_variance_local, DiagnosticsRecord,
};
use crate::error::{LabError, Result};
use crate::linalg::{svd, Matrix, RankThreshold};
use crate::loss::{delta_h, star_embeddings, upper_bound, EmbeddingSet, LossSpec};
use crate::model::{compute_gradients, local_matrix, region_code, Model, Projector};
use crate::rng::LabRng;

/// SGD with momentum and decoupled L2 term: `v ← μv + g + λp`, `p ← p − ηv`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64, n_params: usize) -> Self {
        Self { learning_rate, momentum, weight_decay, velocity: vec![0.0; n_params] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= self.learning_rate * *v;
        }
    }
}

/// Data, view construction and objective of one training run.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub dataset: SyntheticDataset,
    pub augmenter: Augmenter,
    pub pair_mode: PairMode,
    pub loss: LossSpec,
    /// When false the encoder keeps its initial weights and only the
    /// projector is optimized.
    pub train_encoder: bool,
}

impl TrainSetup {
    /// Lie-group views from the configured preset, both views augmented.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let dataset = generate_manifold_dataset(cfg.dataset, cfg.seed)?;
        let policy = preset_policy(cfg, cfg.preset)?;
        Ok(Self {
            dataset,
            augmenter: Augmenter::Lie(policy),
            pair_mode: PairMode::BothViews,
            loss: cfg.loss,
            train_encoder: true,
        })
    }

    /// View 2 is view 1 shifted inside a fixed low-dimensional subspace. The
    /// encoder is frozen so the encoder-space displacements stay fixed while
    /// the projector adapts to them.
    pub fn subspace_shift(cfg: &ExperimentConfig) -> Result<Self> {
        let dataset = generate_manifold_dataset(cfg.dataset, cfg.seed)?;
        let shift = SubspaceShift::random(cfg.dataset.d, cfg.props.shift_dim, cfg.props.shift_scale, policy_seed(cfg))?;
        Ok(Self {
            dataset,
            augmenter: Augmenter::Shift(shift),
            pair_mode: PairMode::AnchorFirst,
            loss: LossSpec::InvarianceOnly,
            train_encoder: false,
        })
    }

    /// View 2 is view 1 moved along a single rotation generator, encoder frozen.
    pub fn single_generator(cfg: &ExperimentConfig) -> Result<Self> {
        let dataset = generate_manifold_dataset(cfg.dataset, cfg.seed)?;
        let policy = AugmentationPolicy::preset(PresetName::Large, cfg.dataset.d, 1, policy_seed(cfg))?
            .with_strengths(StrengthDistribution::new(0.0, cfg.props.generator_strength)?, PresetName::Custom);
        Ok(Self {
            dataset,
            augmenter: Augmenter::Lie(policy),
            pair_mode: PairMode::AnchorFirst,
            loss: LossSpec::InvarianceOnly,
            train_encoder: false,
        })
    }
}

fn policy_seed(cfg: &ExperimentConfig) -> u64 {
    LabRng::new(cfg.seed).split_named("policy").seed()
}

pub fn preset_policy(cfg: &ExperimentConfig, preset: PresetName) -> Result<AugmentationPolicy<f64>> {
    AugmentationPolicy::preset(preset, cfg.dataset.d, cfg.n_generators, policy_seed(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub records: Vec<DiagnosticsRecord>,
}

/// Evaluation-batch geometry at one point of training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSnapshot {
    pub embeddings: EmbeddingSet<f64>,
    pub h_star: Matrix<f64>,
    pub spectrum: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub model: Model<f64>,
    pub initial: EvalSnapshot,
    pub last: EvalSnapshot,
}

struct EvalBatch {
    batch: Batch,
    /// Per-sample strength relating view 2 to view 1, when the views differ
    /// by a single generator.
    strengths: Option<Vec<f64>>,
}

fn eval_batch(cfg: &ExperimentConfig, setup: &TrainSetup) -> Result<EvalBatch> {
    let n = cfg.eval_size.min(setup.dataset.len());
    let indices: Vec<usize> = (0..n).collect();
    let mut rng = LabRng::new(cfg.seed).split_named("eval");
    let batch = make_pair_batch(&setup.dataset, &setup.augmenter, setup.pair_mode, &indices, &mut rng)?;
    let single = matches!(&setup.augmenter, Augmenter::Lie(p) if p.components().len() == 1);
    let strengths = single.then(|| {
        batch
            .strengths2
            .iter()
            .zip(&batch.strengths1)
            .map(|(s2, s1)| s2[0] - s1.first().copied().unwrap_or(0.0))
            .collect()
    });
    Ok(EvalBatch { batch, strengths })
}

/// `W / σ_max(W)`, so alignment ratios do not track the weight scale.
fn spectral_normalized(w: &Matrix<f64>) -> Result<Matrix<f64>> {
    let top = svd(w)?.singular_values.first().copied().unwrap_or(0.0);
    Ok(if top > 0.0 { w.scale(1.0 / top) } else { w.clone() })
}

/// Local matrices for each anchor (MLP) or the single weight (linear).
fn anchor_matrices(p: &Projector<f64>, anchors: &Matrix<f64>) -> Result<Vec<Matrix<f64>>> {
    match p {
        Projector::Linear(w) => Ok(vec![spectral_normalized(w)?]),
        Projector::Mlp(_) => {
            anchors.row_iter().map(|h| spectral_normalized(&local_matrix(p, &region_code(p, h)?)?)).collect()
        }
    }
}

fn nan_on_degenerate(r: Result<f64>) -> Result<f64> {
    match r {
        Err(LabError::Degenerate(_)) => Ok(f64::NAN),
        other => other,
    }
}

fn evaluate(
    model: &Model<f64>,
    cfg: &ExperimentConfig,
    eval: &EvalBatch,
    epoch: usize,
) -> Result<(DiagnosticsRecord, EvalSnapshot)> {
    let e = model.embed(&eval.batch.x1, &eval.batch.x2, cfg.beta)?;
    let b = upper_bound(&e);
    let h_star = star_embeddings(&e, &b.star_indices);
    let deltas = delta_h(&e);
    let aug = e.h2().sub(e.h1())?;
    let mats = anchor_matrices(&model.projector, e.h1())?;

    let kernel = nan_on_degenerate(if mats.len() == 1 {
        kernel_alignment(&mats[0], &aug).map(|(v, _)| v)
    } else {
        let rows: Vec<f64> = (0..aug.rows())
            .filter_map(|i| {
                let v = Matrix::new(1, aug.cols(), aug.row(i).to_vec()).ok()?;
                kernel_alignment(&mats[i], &v).ok().map(|(a, _)| a)
            })
            .collect();
        if rows.is_empty() {
            Err(LabError::Degenerate("no non-zero augmentation directions".into()))
        } else {
            Ok(rows.iter().sum::<f64>() / rows.len() as f64)
        }
    })?;
    let generator = nan_on_degenerate((|| {
        let g = estimate_generator(e.h1(), e.h2(), eval.strengths.as_deref())?;
        let vals = mats.iter().map(|w| generator_alignment(w, &g)).collect::<Result<Vec<_>>>()?;
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    })())?;
    let var_unexplained = nan_on_degenerate(unexplained_variance_local(&model.projector, e.h1(), &deltas))?;

    let record = DiagnosticsRecord {
        epoch,
        infonce: b.infonce,
        upper: b.upper,
        invariance: b.invariance,
        repulsion: b.repulsion,
        rank_w_abs: projector_rank(&model.projector, RankThreshold::Absolute(cfg.rank_tau_abs))?,
        rank_w_rel: projector_rank(&model.projector, cfg.tau_mode)?,
        var_unexplained,
        label_match_fine: label_match_rate(&b.star_indices, &eval.batch.fine_labels)?,
        label_match_coarse: label_match_rate(&b.star_indices, &eval.batch.coarse_labels)?,
        kernel_alignment: kernel,
        generator_alignment: generator,
        mean_pair_star_distance: mean_pair_star_distance(e.h1(), &h_star)?,
    };
    if !record.infonce.is_finite() {
        return Err(LabError::NonFinite(format!("InfoNCE at epoch {epoch}")));
    }
    let spectrum = encoder_spectrum(e.h1())?;
    Ok((record, EvalSnapshot { embeddings: e, h_star, spectrum }))
}

pub fn train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    Ok(train_with(cfg, &TrainSetup::from_config(cfg)?)?.manifest)
}

/// Trains for `cfg.epochs` epochs and records diagnostics before training
/// and after every epoch.
pub fn train_with(cfg: &ExperimentConfig, setup: &TrainSetup) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let root = LabRng::new(cfg.seed);
    let mut model = Model::init(&cfg.model_config(), &mut root.split_named("model"))?;
    let mut batch_rng = root.split_named("batches");
    let eval = eval_batch(cfg, setup)?;

    let (first, initial) = evaluate(&model, cfg, &eval, 0).map_err(|e| wrap(0, e))?;
    let mut records = vec![first];
    let mut last = initial.clone();
    let first_trained = if setup.train_encoder { 0 } else { model.n_encoder_params() };
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay, model.n_params() - first_trained);
    let n = setup.dataset.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        opt.learning_rate = cfg.lr_schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        let mut step = || -> Result<()> {
            for _ in 0..batches_per_epoch {
                let idx = sample_indices(n, cfg.batch_size, &mut batch_rng)?;
                let batch = make_pair_batch(&setup.dataset, &setup.augmenter, setup.pair_mode, &idx, &mut batch_rng)?;
                let (_, grads) = compute_gradients(&model, &batch.x1, &batch.x2, setup.loss, cfg.beta)?;
                let mut params = model.param_vector();
                opt.step(&mut params[first_trained..], &grads.flatten()[first_trained..]);
                model.set_param_vector(&params)?;
            }
            Ok(())
        };
        step().map_err(|e| wrap(epoch, e))?;
        let (rec, snap) = evaluate(&model, cfg, &eval, epoch).map_err(|e| wrap(epoch, e))?;
        log::debug!("epoch {epoch}: infonce {:.4} upper {:.4} rank {}", rec.infonce, rec.upper, rec.rank_w_rel);
        records.push(rec);
        last = snap;
    }

    let manifest = RunManifest {
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        records,
    };
    Ok(TrainOutcome { manifest, model, initial, last })
}

fn wrap(epoch: usize, e: LabError) -> LabError {
    LabError::Training { epoch, source: Box::new(e) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(epochs: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig { epochs, ..Default::default() };
        cfg.dataset.n = 96;
        cfg
    }

    #[test]
    fn zero_epochs_gives_only_the_initial_snapshot() {
        let m = train(&quick(0)).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].epoch, 0);
    }

    #[test]
    fn same_seed_same_records() {
        let a = train(&quick(3)).unwrap();
        let b = train(&quick(3)).unwrap();
        assert_eq!(a.records.len(), 4);
        assert_eq!(a.records, b.records);
        assert_eq!(a.config, b.config);
    }

    #[test]
    fn different_seeds_differ() {
        let a = train(&quick(1)).unwrap();
        let b = train(&ExperimentConfig { seed: 9, ..quick(1) }).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn sgd_momentum_update_by_hand() {
        let mut opt = Sgd::new(0.1, 0.5, 0.01, 1);
        let mut p = [2.0];
        opt.step(&mut p, &[1.0]);
        // v = 1 + 0.02, p = 2 − 0.102
        assert!((p[0] - 1.898).abs() < 1e-12);
        opt.step(&mut p, &[0.0]);
        let v = 0.5 * 1.02 + 0.01 * 1.898;
        assert!((p[0] - (1.898 - 0.1 * v)).abs() < 1e-12);
    }

    #[test]
    fn prop_setups_keep_the_encoder_fixed() {
        let cfg = quick(2);
        for setup in [TrainSetup::subspace_shift(&cfg).unwrap(), TrainSetup::single_generator(&cfg).unwrap()] {
            let out = train_with(&cfg, &setup).unwrap();
            let fresh =
                Model::<f64>::init(&cfg.model_config(), &mut LabRng::new(cfg.seed).split_named("model")).unwrap();
            assert_eq!(out.model.encoder, fresh.encoder);
            assert_ne!(out.model.projector, fresh.projector);
        }
    }

    #[test]
    fn eval_strengths_only_for_single_generator() {
        let cfg = quick(0);
        assert!(eval_batch(&cfg, &TrainSetup::from_config(&cfg).unwrap()).unwrap().strengths.is_none());
        let e = eval_batch(&cfg, &TrainSetup::single_generator(&cfg).unwrap()).unwrap();
        let s = e.strengths.unwrap();
        assert_eq!(s.len(), cfg.eval_size.min(cfg.dataset.n));
        assert!(s.iter().all(|&v| (0.0..=cfg.props.generator_strength).contains(&v)));
    }
}
