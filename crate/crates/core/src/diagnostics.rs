//! Measurements taken on trained models and embeddings.

use serde::{Deserialize, Serialize};

use crate::data::one_hot_image_set;
use crate::error::{LabError, Result};
use crate::linalg::{norm, rank_with, svd, LeastSquares, Matrix, RankThreshold};
use crate::loss::NegativeRef;
use crate::model::Projector;
use crate::scalar::Real;

/// Stand-in for `log10(0)` in spectra.
pub const LOG_SENTINEL: f64 = -30.0;

/// One row of the per-epoch diagnostics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub epoch: usize,
    pub infonce: f64,
    pub upper: f64,
    pub invariance: f64,
    pub repulsion: f64,
    pub rank_w_abs: usize,
    pub rank_w_rel: usize,
    pub var_unexplained: f64,
    pub label_match_fine: f64,
    pub label_match_coarse: f64,
    pub kernel_alignment: f64,
    pub generator_alignment: f64,
    pub mean_pair_star_distance: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "epoch,infonce,upper,invariance,repulsion,rank_w_abs,rank_w_rel,\
var_unexplained,label_match_fine,label_match_coarse,kernel_alignment,generator_alignment,mean_pair_star_distance";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.infonce,
            self.upper,
            self.invariance,
            self.repulsion,
            self.rank_w_abs,
            self.rank_w_rel,
            self.var_unexplained,
            self.label_match_fine,
            self.label_match_coarse,
            self.kernel_alignment,
            self.generator_alignment,
            self.mean_pair_star_distance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// The distance that was mapped to 1.
    pub scale: f64,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Numerical rank of every projector weight matrix, first layer first.
pub fn projector_layer_ranks<T: Real>(p: &Projector<T>, threshold: RankThreshold) -> Result<Vec<usize>> {
    threshold.validate()?;
    p.weights().into_iter().map(|w| rank_with(w, threshold)).collect()
}

/// Rank of the linear projector; for the MLP variant, the smallest layer
/// rank, which bounds the rank of every local matrix.
pub fn projector_rank<T: Real>(p: &Projector<T>, threshold: RankThreshold) -> Result<usize> {
    Ok(projector_layer_ranks(p, threshold)?.into_iter().min().unwrap_or(0))
}

/// Descending `log10` singular values of the row-centered embeddings.
///
/// Values at the rounding-noise level of the input (below
/// `max(N, d)·eps·max|h|`) are reported as [`LOG_SENTINEL`].
pub fn encoder_spectrum<T: Real>(h: &Matrix<T>) -> Result<Vec<f64>> {
    if h.rows() == 0 {
        return Err(LabError::Input("empty embedding matrix".into()));
    }
    let scale = h.as_slice().iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let floor = T::epsilon() * T::from_usize(h.rows().max(h.cols())).unwrap() * scale;
    let s = svd(&h.center_rows())?;
    Ok(s.singular_values.iter().map(|&v| if v <= floor { LOG_SENTINEL } else { v.as_f64().log10() }).collect())
}

/// `Σ min_t ‖δ_i − W t‖² / Σ ‖δ_i‖²`.
pub fn unexplained_variance<T: Real>(w: &Matrix<T>, deltas: &Matrix<T>) -> Result<T> {
    if deltas.cols() != w.rows() {
        return Err(LabError::Dimension(format!(
            "displacements of width {} for W with {} rows",
            deltas.cols(),
            w.rows()
        )));
    }
    let ls = LeastSquares::new(w)?;
    ratio_unexplained(deltas, |_, d| ls.residual_norm2(d))
}

/// Region-wise variant for the MLP projector: each `δ_i` is projected onto
/// the column space of the local matrix at `anchors[i]`.
pub fn unexplained_variance_local<T: Real>(p: &Projector<T>, anchors: &Matrix<T>, deltas: &Matrix<T>) -> Result<T> {
    match p {
        Projector::Linear(w) => unexplained_variance(w, deltas),
        Projector::Mlp(_) => {
            if anchors.shape() != deltas.shape() {
                return Err(LabError::Dimension("anchors and displacements differ in shape".into()));
            }
            ratio_unexplained(deltas, |i, d| {
                let code = crate::model::region_code(p, anchors.row(i))?;
                LeastSquares::new(&crate::model::local_matrix(p, &code)?)?.residual_norm2(d)
            })
        }
    }
}

fn ratio_unexplained<T: Real>(deltas: &Matrix<T>, mut residual: impl FnMut(usize, &[T]) -> Result<T>) -> Result<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, d) in deltas.row_iter().enumerate() {
        den += d.iter().map(|&v| v * v).sum::<T>();
        num += residual(i, d)?;
    }
    if den == T::zero() {
        return Err(LabError::Degenerate("all displacement vectors are zero".into()));
    }
    Ok((num / den).max(T::zero()).min(T::one()))
}

/// Fraction of anchors whose hardest negative carries the anchor's label.
pub fn label_match_rate(stars: &[NegativeRef], labels: &[usize]) -> Result<f64> {
    if stars.is_empty() {
        return Err(LabError::Input("no anchors".into()));
    }
    if let Some(s) = stars.iter().find(|s| s.sample >= labels.len()) {
        return Err(LabError::Input(format!("negative sample {} has no label", s.sample)));
    }
    if stars.len() > labels.len() {
        return Err(LabError::Input("more anchors than labels".into()));
    }
    let hits = stars.iter().enumerate().filter(|(i, s)| labels[s.sample] == labels[*i]).count();
    Ok(hits as f64 / stars.len() as f64)
}

fn row_distances<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(LabError::Dimension(format!("shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a.row_iter()
        .zip(b.row_iter())
        .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>().sqrt().as_f64())
        .collect())
}

pub fn mean_pair_star_distance<T: Real>(h1: &Matrix<T>, h_star: &Matrix<T>) -> Result<f64> {
    let d = row_distances(h1, h_star)?;
    Ok(d.iter().sum::<f64>() / d.len().max(1) as f64)
}

/// Histogram of `‖h1_i − h*_i‖ / max_j ‖h1_j − h*_j‖` over uniform bins on
/// `[0, 1]`. When every distance is zero a single bin holds all the mass.
pub fn pair_star_distance_hist<T: Real>(h1: &Matrix<T>, h_star: &Matrix<T>, n_bins: usize) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(LabError::Input("n_bins must be at least 1".into()));
    }
    let d = row_distances(h1, h_star)?;
    let scale = d.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Histogram { edges: vec![0.0, 1.0], counts: vec![d.len()], scale });
    }
    let edges: Vec<f64> = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
    let mut counts = vec![0usize; n_bins];
    for v in d {
        let bin = ((v / scale) * n_bins as f64).floor() as usize;
        counts[bin.min(n_bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts, scale })
}

/// Mean of `‖Wᵀ v_i‖ / ‖v_i‖` over non-zero rows, with the number of zero
/// rows skipped.
pub fn kernel_alignment<T: Real>(w: &Matrix<T>, v: &Matrix<T>) -> Result<(T, usize)> {
    if v.cols() != w.rows() {
        return Err(LabError::Dimension(format!("directions of width {} for W with {} rows", v.cols(), w.rows())));
    }
    let mut acc = T::zero();
    let mut used = 0usize;
    for row in v.row_iter() {
        let n = norm(row);
        if n == T::zero() {
            continue;
        }
        acc += norm(&w.t_matvec(row)?) / n;
        used += 1;
    }
    let skipped = v.rows() - used;
    if skipped > 0 {
        log::warn!("kernel_alignment skipped {skipped} zero direction(s)");
    }
    if used == 0 {
        return Err(LabError::Degenerate("all directions are zero".into()));
    }
    Ok((acc / T::from_usize(used).unwrap(), skipped))
}

/// `‖Wᵀ G‖_F / ‖G‖_F`.
pub fn generator_alignment<T: Real>(w: &Matrix<T>, g: &Matrix<T>) -> Result<T> {
    if !g.is_square() || g.rows() != w.rows() {
        return Err(LabError::Dimension(format!("generator {:?} for W with {} rows", g.shape(), w.rows())));
    }
    let gn = g.frobenius_norm();
    if gn == T::zero() {
        return Err(LabError::Degenerate("zero generator".into()));
    }
    Ok(w.t_matmul(g)?.frobenius_norm() / gn)
}

/// Least-squares generator with `h2_i − h1_i ≈ ε_i Ĝ h1_i`. Without
/// strengths every `ε_i` is taken as 1.
pub fn estimate_generator<T: Real>(h1: &Matrix<T>, h2: &Matrix<T>, strengths: Option<&[T]>) -> Result<Matrix<T>> {
    if h1.shape() != h2.shape() {
        return Err(LabError::Dimension("view embeddings differ in shape".into()));
    }
    let (n, d) = h1.shape();
    let eps: Vec<T> = match strengths {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => return Err(LabError::Dimension(format!("{} strengths for {n} samples", s.len()))),
        None => vec![T::one(); n],
    };
    // rows ε_i h1_iᵀ, one least-squares problem per output coordinate
    let design = Matrix::from_fn(n, d, |r, c| eps[r] * h1[(r, c)]);
    let ls = LeastSquares::new(&design)?;
    let mut g = Matrix::zeros(d, d);
    for out in 0..d {
        let target: Vec<T> = (0..n).map(|r| h2[(r, out)] - h1[(r, out)]).collect();
        let row = ls.solve(&target)?;
        g.row_mut(out).copy_from_slice(&row);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRankRow {
    pub theta_max: f64,
    pub mean_rank: f64,
    pub std_rank: f64,
    pub ranks: Vec<usize>,
}

/// Numerical rank of the covariance of rotated one-hot images.
///
/// Pixels that are zero in every image contribute zero rows and columns to
/// the covariance, so the rank is computed on the covariance restricted to
/// the touched pixels.
pub fn covariance_rank(images: &Matrix<f64>, threshold: RankThreshold) -> Result<usize> {
    threshold.validate()?;
    let n = images.rows();
    if n < 2 {
        return Err(LabError::Input("need at least 2 images".into()));
    }
    let touched: Vec<usize> = (0..images.cols()).filter(|&c| (0..n).any(|r| images[(r, c)] != 0.0)).collect();
    if touched.is_empty() {
        return Ok(0);
    }
    let xc = images.select_cols(&touched).center_rows();
    let cov = xc.t_matmul(&xc)?.scale(1.0 / (n - 1) as f64);
    rank_with(&cov, threshold)
}

/// Mean and standard deviation (over seeds `base_seed..base_seed+n_seeds`)
/// of the covariance rank for each `θ_max` of the grid.
pub fn covariance_rank_experiment(
    theta_grid: &[f64],
    n_images: usize,
    n_seeds: usize,
    threshold: RankThreshold,
    base_seed: u64,
) -> Result<Vec<CovarianceRankRow>> {
    if n_seeds == 0 {
        return Err(LabError::Input("n_seeds must be positive".into()));
    }
    if theta_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::Input("theta grid must be ascending".into()));
    }
    theta_grid
        .iter()
        .map(|&theta| {
            let ranks = (0..n_seeds as u64)
                .map(|s| covariance_rank(&one_hot_image_set(n_images, theta, base_seed + s)?, threshold))
                .collect::<Result<Vec<_>>>()?;
            let mean = ranks.iter().sum::<usize>() as f64 / n_seeds as f64;
            let var = ranks.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n_seeds as f64;
            Ok(CovarianceRankRow { theta_max: theta, mean_rank: mean, std_rank: var.sqrt(), ranks })
        })
        .collect()
}
