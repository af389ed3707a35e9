use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, ForwardCache, Layer, LayerGrad, MlpParams};
use crate::error::{LabError, Result};
use crate::linalg::{norm, Matrix};
use crate::scalar::Real;

/// Pre-normalization norms below this signal a collapsed embedding.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    #[default]
    Linear,
    Mlp,
}

impl std::str::FromStr for ProjectorKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            other => Err(LabError::Input(format!("unknown projector '{other}' (expected linear|mlp)"))),
        }
    }
}

/// Head applied after the encoder: `g(h) = Wᵀh` or a zero-bias MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Projector<T> {
    Linear(Matrix<T>),
    Mlp(MlpParams<T>),
}

impl<T: Real> Projector<T> {
    pub fn linear(w: Matrix<T>) -> Result<Self> {
        if w.rows() == 0 || w.cols() == 0 {
            return Err(LabError::Input("empty projector weight".into()));
        }
        if !w.all_finite() {
            return Err(LabError::NonFinite("projector weight".into()));
        }
        Ok(Projector::Linear(w))
    }

    pub fn mlp(params: MlpParams<T>) -> Result<Self> {
        if params.has_bias() {
            return Err(LabError::Input("MLP projector must be bias-free".into()));
        }
        Ok(Projector::Mlp(params))
    }

    /// Glorot-initialized projector, `d_enc → d_proj` (linear) or
    /// `d_enc → d_enc → d_proj` with ReLU (MLP).
    pub fn init<R: Rng + ?Sized>(kind: ProjectorKind, d_enc: usize, d_proj: usize, rng: &mut R) -> Result<Self> {
        match kind {
            ProjectorKind::Linear => {
                let m = MlpParams::glorot(&[d_enc, d_proj], Activation::Relu, false, rng)?;
                Self::linear(m.layers()[0].weight.clone())
            }
            ProjectorKind::Mlp => Self::mlp(MlpParams::glorot(&[d_enc, d_enc, d_proj], Activation::Relu, false, rng)?),
        }
    }

    pub fn kind(&self) -> ProjectorKind {
        match self {
            Projector::Linear(_) => ProjectorKind::Linear,
            Projector::Mlp(_) => ProjectorKind::Mlp,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Projector::Linear(w) => w.rows(),
            Projector::Mlp(m) => m.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Projector::Linear(w) => w.cols(),
            Projector::Mlp(m) => m.out_dim(),
        }
    }

    /// Linear weight, if this is the linear variant.
    pub fn weight(&self) -> Option<&Matrix<T>> {
        match self {
            Projector::Linear(w) => Some(w),
            Projector::Mlp(_) => None,
        }
    }

    /// All weight matrices, first layer first.
    pub fn weights(&self) -> Vec<&Matrix<T>> {
        match self {
            Projector::Linear(w) => vec![w],
            Projector::Mlp(m) => m.layers().iter().map(|l| &l.weight).collect(),
        }
    }

    pub(crate) fn weights_mut(&mut self) -> Vec<&mut Matrix<T>> {
        match self {
            Projector::Linear(w) => vec![w],
            Projector::Mlp(m) => m.layers_mut().iter_mut().map(|l| &mut l.weight).collect(),
        }
    }

    /// Output before normalization.
    pub fn raw(&self, h: &[T]) -> Result<Vec<T>> {
        match self {
            Projector::Linear(w) => {
                if h.len() != w.rows() {
                    return Err(LabError::Input(format!(
                        "encoder vector of length {} for projector expecting {}",
                        h.len(),
                        w.rows()
                    )));
                }
                w.t_matvec(h)
            }
            Projector::Mlp(m) => m.forward(h),
        }
    }

    pub(crate) fn forward_batch(&self, h: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.as_mlp().forward_batch(h)
    }

    pub(crate) fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_out: &Matrix<T>,
    ) -> Result<(Vec<LayerGrad<T>>, Matrix<T>)> {
        self.as_mlp().backward(cache, d_out)
    }

    fn as_mlp(&self) -> std::borrow::Cow<'_, MlpParams<T>> {
        match self {
            Projector::Linear(w) => std::borrow::Cow::Owned(
                MlpParams::new(vec![Layer { weight: w.clone(), bias: None }], Activation::Relu)
                    .expect("validated weight"),
            ),
            Projector::Mlp(m) => std::borrow::Cow::Borrowed(m),
        }
    }
}

/// Unit-normalize, surfacing collapse as an error.
pub fn normalize<T: Real>(z: &[T]) -> Result<Vec<T>> {
    let n = norm(z);
    if !(n.as_f64() >= NORM_FLOOR) {
        return Err(LabError::DegenerateEmbedding { norm: n.as_f64(), floor: NORM_FLOOR });
    }
    Ok(z.iter().map(|&v| v / n).collect())
}

/// Projector output normalized to the unit sphere.
pub fn project<T: Real>(p: &Projector<T>, h: &[T]) -> Result<Vec<T>> {
    normalize(&p.raw(h)?)
}

/// Activation pattern of an MLP projector's hidden units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionCode {
    pub masks: Vec<Vec<bool>>,
}

impl RegionCode {
    pub fn all_active(widths: &[usize]) -> Self {
        Self { masks: widths.iter().map(|&w| vec![true; w]).collect() }
    }

    pub fn all_inactive(widths: &[usize]) -> Self {
        Self { masks: widths.iter().map(|&w| vec![false; w]).collect() }
    }

    pub fn n_active(&self) -> usize {
        self.masks.iter().flatten().filter(|&&b| b).count()
    }
}

fn mlp_of<T: Real>(p: &Projector<T>) -> Result<&MlpParams<T>> {
    match p {
        Projector::Mlp(m) => Ok(m),
        Projector::Linear(_) => Err(LabError::UnsupportedVariant("region analysis needs the MLP projector")),
    }
}

pub fn region_code<T: Real>(p: &Projector<T>, h: &[T]) -> Result<RegionCode> {
    let m = mlp_of(p)?;
    if h.len() != m.in_dim() {
        return Err(LabError::Input(format!(
            "encoder vector of length {} for projector expecting {}",
            h.len(),
            m.in_dim()
        )));
    }
    let n_hidden = m.layers().len() - 1;
    let mut masks = Vec::with_capacity(n_hidden);
    let mut a = h.to_vec();
    for l in &m.layers()[..n_hidden] {
        let z = l.weight.t_matvec(&a)?;
        masks.push(z.iter().map(|&v| Activation::is_active(v)).collect());
        a = z.into_iter().map(|v| m.activation().apply(v)).collect();
    }
    Ok(RegionCode { masks })
}

/// `W_ω = W₁ D₁ W₂ D₂ ⋯ W_L`, so that inside region `ω` the un-normalized
/// projector output is `W_ωᵀ h`.
pub fn local_matrix<T: Real>(p: &Projector<T>, code: &RegionCode) -> Result<Matrix<T>> {
    let m = mlp_of(p)?;
    let widths = m.hidden_widths();
    if code.masks.len() != widths.len() || code.masks.iter().zip(&widths).any(|(mask, &w)| mask.len() != w) {
        return Err(LabError::Input(format!(
            "region code with mask lengths {:?} for hidden widths {widths:?}",
            code.masks.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let act = m.activation();
    let mut acc = m.layers()[0].weight.clone();
    for (k, mask) in code.masks.iter().enumerate() {
        for r in 0..acc.rows() {
            for (v, &on) in acc.row_mut(r).iter_mut().zip(mask) {
                *v *= act.slope::<T>(on);
            }
        }
        acc = acc.matmul(&m.layers()[k + 1].weight)?;
    }
    Ok(acc)
}
