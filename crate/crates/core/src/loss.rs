//! InfoNCE, its entropy form, and the invariance/repulsion upper bound.
//!
//! Notation: `f1`, `f2` hold the unit-norm projector outputs of the two
//! views (one row per sample), `h1`, `h2` the matching encoder outputs.
//! For anchor `i` the negative set holds both views of every other sample,
//! enumerated in `(sample, view)` lexicographic order.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{cosine_sim, dot, norm, Matrix};
use crate::scalar::Real;

/// Default inverse temperature.
pub const DEFAULT_BETA: f64 = 2.0;

fn unit_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(128.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    First,
    Second,
}

/// One element of the negative set: a sample index and which of its views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NegativeRef {
    pub sample: usize,
    pub view: View,
}

/// Embeddings of one batch of paired views.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    f1: Matrix<T>,
    f2: Matrix<T>,
    h1: Matrix<T>,
    h2: Matrix<T>,
    beta: T,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(f1: Matrix<T>, f2: Matrix<T>, h1: Matrix<T>, h2: Matrix<T>, beta: T) -> Result<Self> {
        let n = f1.rows();
        if n < 2 {
            return Err(LabError::EmptyNegatives(n));
        }
        if f2.shape() != f1.shape() {
            return Err(LabError::Dimension(format!("view embeddings {:?} vs {:?}", f1.shape(), f2.shape())));
        }
        if h1.shape() != h2.shape() || h1.rows() != n {
            return Err(LabError::Dimension(format!(
                "encoder embeddings {:?} / {:?} for {n} samples",
                h1.shape(),
                h2.shape()
            )));
        }
        if !(beta >= T::zero()) || !beta.is_finite() {
            return Err(LabError::Input(format!("beta must be finite and >= 0, got {beta}")));
        }
        let tol = unit_tol::<T>();
        for (name, m) in [("f1", &f1), ("f2", &f2)] {
            if let Some(i) = m.row_iter().position(|r| (norm(r) - T::one()).abs() > tol) {
                return Err(LabError::Input(format!("row {i} of {name} is not unit-norm")));
            }
        }
        Ok(Self { f1, f2, h1, h2, beta })
    }

    /// Uses the projector outputs as stand-in encoder embeddings.
    pub fn from_projections(f1: Matrix<T>, f2: Matrix<T>, beta: T) -> Result<Self> {
        let (h1, h2) = (f1.clone(), f2.clone());
        Self::new(f1, f2, h1, h2, beta)
    }

    pub fn len(&self) -> usize {
        self.f1.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.rows() == 0
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn with_beta(&self, beta: T) -> Result<Self> {
        Self::new(self.f1.clone(), self.f2.clone(), self.h1.clone(), self.h2.clone(), beta)
    }

    pub fn f1(&self) -> &Matrix<T> {
        &self.f1
    }

    pub fn f2(&self) -> &Matrix<T> {
        &self.f2
    }

    pub fn h1(&self) -> &Matrix<T> {
        &self.h1
    }

    pub fn h2(&self) -> &Matrix<T> {
        &self.h2
    }

    fn f(&self, r: NegativeRef) -> &[T] {
        match r.view {
            View::First => self.f1.row(r.sample),
            View::Second => self.f2.row(r.sample),
        }
    }

    fn h(&self, r: NegativeRef) -> &[T] {
        match r.view {
            View::First => self.h1.row(r.sample),
            View::Second => self.h2.row(r.sample),
        }
    }

    /// The `2(N-1)` negatives of anchor `i` in lexicographic order.
    pub fn negatives(&self, i: usize) -> impl Iterator<Item = NegativeRef> + '_ {
        (0..self.len())
            .filter(move |&j| j != i)
            .flat_map(|j| [View::First, View::Second].into_iter().map(move |view| NegativeRef { sample: j, view }))
    }

    /// `log(2(N-1))`.
    pub fn log_negatives(&self) -> T {
        T::from_usize(2 * (self.len() - 1)).unwrap().ln()
    }
}

fn mean<T: Real>(values: impl Iterator<Item = T>, n: usize) -> T {
    values.fold(T::zero(), |a, b| a + b) / T::from_usize(n).unwrap()
}

fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    m + logits.iter().map(|&s| (s - m).exp()).sum::<T>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    /// Anchor is always view 1.
    #[default]
    Unsymmetrized,
    /// Average of the view-1-anchored and view-2-anchored losses.
    Symmetrized,
}

fn anchor_term<T: Real>(e: &EmbeddingSet<T>, i: usize, anchor: &[T], positive: &[T]) -> T {
    let logits: Vec<T> = e.negatives(i).map(|l| e.beta * dot(anchor, e.f(l))).collect();
    log_sum_exp(&logits) - e.beta * dot(anchor, positive)
}

/// Unsymmetrized InfoNCE.
pub fn info_nce<T: Real>(e: &EmbeddingSet<T>) -> T {
    info_nce_with(e, Symmetry::Unsymmetrized)
}

pub fn info_nce_with<T: Real>(e: &EmbeddingSet<T>, symmetry: Symmetry) -> T {
    let n = e.len();
    let first = mean((0..n).map(|i| anchor_term(e, i, e.f1.row(i), e.f2.row(i))), n);
    match symmetry {
        Symmetry::Unsymmetrized => first,
        Symmetry::Symmetrized => {
            let second = mean((0..n).map(|i| anchor_term(e, i, e.f2.row(i), e.f1.row(i))), n);
            (first + second) / T::lit(2.0)
        }
    }
}

/// Hardest negative of every anchor: the element of its negative set with
/// the largest cosine similarity to `f1[i]`; ties go to the smallest
/// `(sample, view)`.
pub fn star_indices<T: Real>(e: &EmbeddingSet<T>) -> Vec<NegativeRef> {
    (0..e.len())
        .map(|i| {
            let anchor = e.f1.row(i);
            let mut best: Option<(NegativeRef, T)> = None;
            for l in e.negatives(i) {
                let s = cosine_sim(anchor, e.f(l)).expect("unit rows");
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((l, s));
                }
            }
            best.expect("negative set is non-empty").0
        })
        .collect()
}

/// The upper bound together with its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub infonce: T,
    pub invariance: T,
    pub repulsion: T,
    pub constant: T,
    pub upper: T,
    pub star_indices: Vec<NegativeRef>,
}

pub fn upper_bound<T: Real>(e: &EmbeddingSet<T>) -> LossBreakdown<T> {
    let n = e.len();
    let stars = star_indices(e);
    let invariance = -mean((0..n).map(|i| cosine_sim(e.f1.row(i), e.f2.row(i)).expect("unit rows")), n);
    let repulsion = mean((0..n).map(|i| cosine_sim(e.f1.row(i), e.f(stars[i])).expect("unit rows")), n);
    let constant = e.log_negatives();
    LossBreakdown {
        infonce: info_nce(e),
        invariance,
        repulsion,
        constant,
        upper: e.beta * invariance + e.beta * repulsion + constant,
        star_indices: stars,
    }
}

/// Softmax over the negatives of one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativesDistribution<T> {
    pub negatives: Vec<NegativeRef>,
    pub probs: Vec<T>,
    pub entropy: T,
    pub expectation: Vec<T>,
}

pub fn negatives_distribution<T: Real>(e: &EmbeddingSet<T>, i: usize) -> Result<NegativesDistribution<T>> {
    if i >= e.len() {
        return Err(LabError::Input(format!("anchor {i} out of range for {} samples", e.len())));
    }
    let anchor = e.f1.row(i);
    let negatives: Vec<NegativeRef> = e.negatives(i).collect();
    let logits: Vec<T> = negatives.iter().map(|&l| e.beta * dot(anchor, e.f(l))).collect();
    let lse = log_sum_exp(&logits);
    let probs: Vec<T> = logits.iter().map(|&s| (s - lse).exp()).collect();
    let entropy = -logits.iter().zip(&probs).filter(|(_, &p)| p > T::zero()).map(|(&s, &p)| p * (s - lse)).sum::<T>();
    let mut expectation = vec![T::zero(); e.f1.cols()];
    for (&l, &p) in negatives.iter().zip(&probs) {
        for (x, &v) in expectation.iter_mut().zip(e.f(l)) {
            *x += p * v;
        }
    }
    Ok(NegativesDistribution { negatives, probs, entropy, expectation })
}

/// InfoNCE rewritten as `−β f1ᵀ(f2 − E[f̃]) + H` averaged over anchors.
pub fn info_nce_entropy_form<T: Real>(e: &EmbeddingSet<T>) -> T {
    let n = e.len();
    mean(
        (0..n).map(|i| {
            let d = negatives_distribution(e, i).expect("anchor in range");
            let diff: Vec<T> = e.f2.row(i).iter().zip(&d.expectation).map(|(&a, &b)| a - b).collect();
            -e.beta * dot(e.f1.row(i), &diff) + d.entropy
        }),
        n,
    )
}

/// Encoder-space displacements `h2[i] − h̃*_i`.
pub fn delta_h<T: Real>(e: &EmbeddingSet<T>) -> Matrix<T> {
    let stars = star_indices(e);
    delta_h_with(e, &stars)
}

pub fn delta_h_with<T: Real>(e: &EmbeddingSet<T>, stars: &[NegativeRef]) -> Matrix<T> {
    let d = e.h1.cols();
    let mut out = Matrix::zeros(e.len(), d);
    for (i, &s) in stars.iter().enumerate() {
        for ((o, &a), &b) in out.row_mut(i).iter_mut().zip(e.h2.row(i)).zip(e.h(s)) {
            *o = a - b;
        }
    }
    out
}

/// Hardest-negative encoder embeddings, one row per anchor.
pub fn star_embeddings<T: Real>(e: &EmbeddingSet<T>, stars: &[NegativeRef]) -> Matrix<T> {
    let rows: Vec<T> = stars.iter().flat_map(|&s| e.h(s).to_vec()).collect();
    Matrix::new(stars.len(), e.h1.cols(), rows).expect("finite embeddings")
}

/// `(1/N) Σ −β δh_iᵀ W Wᵀ h1[i] + log(2(N−1))` on unit-normalized encoder
/// rows.
///
/// Encoder rows are normalized before use; with that normalization the
/// form coincides with the upper bound whenever `‖Wᵀh‖ = 1` for every
/// embedding involved.
pub fn upper_bound_projection_form<T: Real>(e: &EmbeddingSet<T>, w: &Matrix<T>) -> Result<T> {
    if w.rows() != e.h1.cols() {
        return Err(LabError::Dimension(format!(
            "projector weight has {} rows for encoder dimension {}",
            w.rows(),
            e.h1.cols()
        )));
    }
    let unit = |v: &[T]| -> Result<Vec<T>> {
        let n = norm(v);
        if n == T::zero() {
            return Err(LabError::Degenerate("zero encoder embedding".into()));
        }
        Ok(v.iter().map(|&x| x / n).collect())
    };
    let stars = star_indices(e);
    let n = e.len();
    let mut acc = T::zero();
    for (i, &s) in stars.iter().enumerate() {
        let h1 = unit(e.h1.row(i))?;
        let h2 = unit(e.h2.row(i))?;
        let hs = unit(e.h(s))?;
        let delta: Vec<T> = h2.iter().zip(&hs).map(|(&a, &b)| a - b).collect();
        let proj = w.matvec(&w.t_matvec(&h1)?)?;
        acc += -e.beta * dot(&delta, &proj);
    }
    Ok(acc / T::from_usize(n).unwrap() + e.log_negatives())
}

/// Which scalar objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    #[default]
    Infonce,
    UpperBound,
    InvarianceOnly,
    RepulsionOnly,
}

impl LossSpec {
    pub const ALL: [LossSpec; 4] =
        [LossSpec::Infonce, LossSpec::UpperBound, LossSpec::InvarianceOnly, LossSpec::RepulsionOnly];

    /// Forward value, identical to the corresponding loss-module function.
    pub fn value<T: Real>(self, e: &EmbeddingSet<T>) -> T {
        match self {
            LossSpec::Infonce => info_nce(e),
            LossSpec::UpperBound => upper_bound(e).upper,
            LossSpec::InvarianceOnly => upper_bound(e).invariance,
            LossSpec::RepulsionOnly => upper_bound(e).repulsion,
        }
    }
}

/// Loss value and its gradient with respect to the unit projector outputs
/// `f1`, `f2`. The hardest-negative index is held fixed.
pub fn loss_and_grad_f<T: Real>(e: &EmbeddingSet<T>, spec: LossSpec) -> (T, Matrix<T>, Matrix<T>) {
    let n = e.len();
    let p = e.f1.cols();
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut g1 = Matrix::zeros(n, p);
    let mut g2 = Matrix::zeros(n, p);
    let beta = e.beta;

    fn add_scaled<T: Real>(dst: &mut [T], src: &[T], s: T) {
        dst.iter_mut().zip(src).for_each(|(d, &x)| *d += s * x);
    }
    fn grad_row<'a, T: Real>(g1: &'a mut Matrix<T>, g2: &'a mut Matrix<T>, r: NegativeRef) -> &'a mut [T] {
        match r.view {
            View::First => g1.row_mut(r.sample),
            View::Second => g2.row_mut(r.sample),
        }
    }
    let value = spec.value(e);
    match spec {
        LossSpec::Infonce => {
            for i in 0..n {
                let dist = negatives_distribution(e, i).expect("anchor in range");
                let anchor = e.f1.row(i);
                // d/d f1[i] = β (E[f̃] − f2[i]) / N
                add_scaled(g1.row_mut(i), &dist.expectation, beta * inv_n);
                add_scaled(g1.row_mut(i), e.f2.row(i), -beta * inv_n);
                add_scaled(g2.row_mut(i), anchor, -beta * inv_n);
                for (&l, &prob) in dist.negatives.iter().zip(&dist.probs) {
                    add_scaled(grad_row(&mut g1, &mut g2, l), anchor, beta * prob * inv_n);
                }
            }
        }
        LossSpec::UpperBound | LossSpec::InvarianceOnly | LossSpec::RepulsionOnly => {
            let (inv_w, rep_w) = match spec {
                LossSpec::UpperBound => (beta, beta),
                LossSpec::InvarianceOnly => (T::one(), T::zero()),
                _ => (T::zero(), T::one()),
            };
            let stars = if rep_w != T::zero() { star_indices(e) } else { Vec::new() };
            for i in 0..n {
                let anchor = e.f1.row(i);
                if inv_w != T::zero() {
                    add_scaled(g1.row_mut(i), e.f2.row(i), -inv_w * inv_n);
                    add_scaled(g2.row_mut(i), anchor, -inv_w * inv_n);
                }
                if rep_w != T::zero() {
                    let s = stars[i];
                    add_scaled(g1.row_mut(i), e.f(s), rep_w * inv_n);
                    add_scaled(grad_row(&mut g1, &mut g2, s), anchor, rep_w * inv_n);
                }
            }
        }
    }
    (value, g1, g2)
}
