//! Encoder and projector networks with a hand-written reverse pass.

mod checkpoint;
mod mlp;
mod projector;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedArray};
pub use mlp::{encode, Activation, ForwardCache, Layer, LayerGrad, MlpParams};
pub use projector::{local_matrix, normalize, project, region_code, Projector, ProjectorKind, RegionCode, NORM_FLOOR};

use crate::error::{LabError, Result};
use crate::linalg::{dot, Matrix};
use crate::loss::{loss_and_grad_f, EmbeddingSet, LossSpec};
use crate::scalar::Real;

/// Layer widths and projector variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub enc_dim: usize,
    pub proj_dim: usize,
    pub projector: ProjectorKind,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            hidden_dim: 32,
            enc_dim: 16,
            proj_dim: 8,
            projector: ProjectorKind::Linear,
            leaky_slope: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.input_dim, self.hidden_dim, self.enc_dim, self.proj_dim].contains(&0) {
            return Err(LabError::Config("model widths must be positive".into()));
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 {
            return Err(LabError::Config(format!("leaky_slope must be >= 0, got {}", self.leaky_slope)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub encoder: MlpParams<T>,
    pub projector: Projector<T>,
}

/// Gradients laid out like the parameters: one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub encoder: Vec<LayerGrad<T>>,
    pub projector: Vec<LayerGrad<T>>,
}

impl<T: Real> ParamGrads<T> {
    /// Same order as [`Model::param_vector`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for g in self.encoder.iter().chain(&self.projector) {
            out.extend_from_slice(g.weight.as_slice());
            if let Some(b) = &g.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

impl<T: Real> Model<T> {
    pub fn new(encoder: MlpParams<T>, projector: Projector<T>) -> Result<Self> {
        if encoder.out_dim() != projector.in_dim() {
            return Err(LabError::Dimension(format!(
                "encoder outputs {} but projector expects {}",
                encoder.out_dim(),
                projector.in_dim()
            )));
        }
        Ok(Self { encoder, projector })
    }

    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let encoder = MlpParams::glorot(
            &[cfg.input_dim, cfg.hidden_dim, cfg.enc_dim],
            Activation::LeakyRelu(cfg.leaky_slope),
            true,
            rng,
        )?;
        let projector = Projector::init(cfg.projector, cfg.enc_dim, cfg.proj_dim, rng)?;
        Self::new(encoder, projector)
    }

    pub fn encode_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.encoder.forward_batch(x)?.0)
    }

    /// Encoder and normalized projector outputs of both views.
    pub fn embed(&self, x1: &Matrix<T>, x2: &Matrix<T>, beta: T) -> Result<EmbeddingSet<T>> {
        let h1 = self.encode_batch(x1)?;
        let h2 = self.encode_batch(x2)?;
        let f1 = normalize_rows(&self.projector.forward_batch(&h1)?.0)?.0;
        let f2 = normalize_rows(&self.projector.forward_batch(&h2)?.0)?.0;
        EmbeddingSet::new(f1, f2, h1, h2, beta)
    }

    fn param_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in self.encoder.layers() {
            out.push(l.weight.as_slice());
            if let Some(b) = &l.bias {
                out.push(b);
            }
        }
        for w in self.projector.weights() {
            out.push(w.as_slice());
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in self.encoder.layers_mut() {
            out.push(l.weight.as_mut_slice());
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
        }
        for w in self.projector.weights_mut() {
            out.push(w.as_mut_slice());
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Length of the encoder prefix of [`Model::param_vector`].
    pub fn n_encoder_params(&self) -> usize {
        self.encoder.layers().iter().map(|l| l.weight.as_slice().len() + l.bias.as_ref().map_or(0, Vec::len)).sum()
    }

    /// Encoder weights and biases layer by layer, then projector weights.
    pub fn param_vector(&self) -> Vec<T> {
        self.param_slices().concat()
    }

    pub fn set_param_vector(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(LabError::Dimension(format!("{} values for {} parameters", values.len(), self.n_params())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("parameter update".into()));
        }
        let mut rest = values;
        for s in self.param_slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }
}

fn normalize_rows<T: Real>(z: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let mut f = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let unit = normalize(z.row(r))?;
        norms.push(crate::linalg::norm(z.row(r)));
        f.row_mut(r).copy_from_slice(&unit);
    }
    Ok((f, norms))
}

/// Back through `f = z / ‖z‖`: `dz = (df − f (f·df)) / ‖z‖`.
fn normalize_backward<T: Real>(f: &Matrix<T>, norms: &[T], df: &Matrix<T>) -> Matrix<T> {
    let mut dz = df.clone();
    for (r, &n) in norms.iter().enumerate() {
        let fr = f.row(r);
        let proj = dot(fr, df.row(r));
        for (d, &fv) in dz.row_mut(r).iter_mut().zip(fr) {
            *d = (*d - fv * proj) / n;
        }
    }
    dz
}

fn add_layer_grads<T: Real>(acc: &mut [LayerGrad<T>], other: Vec<LayerGrad<T>>) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(other) {
        a.weight = a.weight.add(&b.weight)?;
        if let (Some(x), Some(y)) = (&mut a.bias, b.bias) {
            x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
        }
    }
    Ok(())
}

/// Loss on the paired views `x1`, `x2` and its gradient with respect to
/// every parameter. The hardest-negative index is held fixed.
pub fn compute_gradients<T: Real>(
    model: &Model<T>,
    x1: &Matrix<T>,
    x2: &Matrix<T>,
    spec: LossSpec,
    beta: T,
) -> Result<(T, ParamGrads<T>)> {
    let (h1, enc1) = model.encoder.forward_batch(x1)?;
    let (h2, enc2) = model.encoder.forward_batch(x2)?;
    let (z1, proj1) = model.projector.forward_batch(&h1)?;
    let (z2, proj2) = model.projector.forward_batch(&h2)?;
    let (f1, n1) = normalize_rows(&z1)?;
    let (f2, n2) = normalize_rows(&z2)?;
    let e = EmbeddingSet::new(f1, f2, h1, h2, beta)?;
    let (value, df1, df2) = loss_and_grad_f(&e, spec);

    let dz1 = normalize_backward(e.f1(), &n1, &df1);
    let dz2 = normalize_backward(e.f2(), &n2, &df2);
    let (mut proj_grads, dh1) = model.projector.backward(&proj1, &dz1)?;
    let (pg2, dh2) = model.projector.backward(&proj2, &dz2)?;
    add_layer_grads(&mut proj_grads, pg2)?;
    let (mut enc_grads, _) = model.encoder.backward(&enc1, &dh1)?;
    let (eg2, _) = model.encoder.backward(&enc2, &dh2)?;
    add_layer_grads(&mut enc_grads, eg2)?;

    let grads = ParamGrads { encoder: enc_grads, projector: proj_grads };
    if !grads.all_finite() {
        return Err(LabError::NonFinite("parameter gradient".into()));
    }
    Ok((value, grads))
}
