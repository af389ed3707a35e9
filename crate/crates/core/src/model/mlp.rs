use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Hidden-layer nonlinearity. The last layer of every MLP is affine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "slope")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    /// A pre-activation counts as active when it is `>= 0`.
    #[inline]
    pub fn is_active<T: Real>(z: T) -> bool {
        z >= T::zero()
    }

    /// Slope of the activation on the given side.
    #[inline]
    pub fn slope<T: Real>(self, active: bool) -> T {
        match (self, active) {
            (_, true) => T::one(),
            (Activation::Relu, false) => T::zero(),
            (Activation::LeakyRelu(s), false) => T::lit(s),
        }
    }

    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        z * self.slope(Self::is_active(z))
    }
}

/// One affine layer, `y = Wᵀx + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub weight: Matrix<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Real> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams<T> {
    layers: Vec<Layer<T>>,
    activation: Activation,
}

/// Per-layer inputs and pre-activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub inputs: Vec<Matrix<T>>,
    pub preacts: Vec<Matrix<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Matrix<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Real> MlpParams<T> {
    pub fn new(layers: Vec<Layer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(LabError::Input("an MLP needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(LabError::Dimension(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (k, l) in layers.iter().enumerate() {
            if !l.weight.all_finite() {
                return Err(LabError::NonFinite(format!("weight of layer {k}")));
            }
            if let Some(b) = &l.bias {
                if b.len() != l.out_dim() {
                    return Err(LabError::Dimension(format!(
                        "bias of layer {k} has length {} for width {}",
                        b.len(),
                        l.out_dim()
                    )));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(LabError::NonFinite(format!("bias of layer {k}")));
                }
            }
        }
        if let Activation::LeakyRelu(s) = activation {
            if !s.is_finite() {
                return Err(LabError::Input(format!("leaky slope {s}")));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(6 / (fan_in + fan_out))`;
    /// biases start at zero.
    pub fn glorot<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(LabError::Input(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weight: Matrix::from_fn(w[0], w[1], |_, _| T::lit(rng.random_range(-a..=a))),
                    bias: with_bias.then(|| vec![T::zero(); w[1]]),
                }
            })
            .collect();
        Self::new(layers, activation)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn has_bias(&self) -> bool {
        self.layers.iter().any(|l| l.bias.is_some())
    }

    /// Widths of the hidden layers, i.e. every layer output except the last.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Layer::out_dim).collect()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.in_dim() {
            return Err(LabError::Input(format!("input of length {} for an MLP expecting {}", x.len(), self.in_dim())));
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.weight.t_matvec(&a)?;
            if let Some(b) = &l.bias {
                z.iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward, one sample per row.
    pub fn forward_batch(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if x.cols() != self.in_dim() {
            return Err(LabError::Input(format!("batch of width {} for an MLP expecting {}", x.cols(), self.in_dim())));
        }
        let last = self.layers.len() - 1;
        let mut cache = ForwardCache { inputs: Vec::new(), preacts: Vec::new() };
        let mut a = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = a.matmul(&l.weight)?;
            if let Some(b) = &l.bias {
                for r in 0..z.rows() {
                    z.row_mut(r).iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
                }
            }
            cache.inputs.push(a);
            let out = if k < last { z.map(|v| self.activation.apply(v)) } else { z.clone() };
            cache.preacts.push(z);
            a = out;
        }
        Ok((a, cache))
    }

    /// Reverse pass: given `dL/dY`, returns per-layer gradients and `dL/dX`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Matrix<T>) -> Result<(Vec<LayerGrad<T>>, Matrix<T>)> {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            if k < last {
                let z = &cache.preacts[k];
                for (dv, &zv) in d.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    *dv *= self.activation.slope(Activation::is_active(zv));
                }
            }
            let weight = cache.inputs[k].t_matmul(&d)?;
            let bias = l.bias.as_ref().map(|_| {
                let mut s = vec![T::zero(); d.cols()];
                for row in d.row_iter() {
                    s.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                }
                s
            });
            grads.push(LayerGrad { weight, bias });
            d = d.matmul(&l.weight.transpose())?;
        }
        grads.reverse();
        Ok((grads, d))
    }
}

/// Encoder forward pass for a single input.
pub fn encode<T: Real>(enc: &MlpParams<T>, x: &[T]) -> Result<Vec<T>> {
    enc.forward(x)
}
