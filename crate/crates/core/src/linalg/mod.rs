//! Dense real linear algebra used throughout the lab.

mod expm;
mod matrix;
mod svd;

pub use expm::{matrix_exp, SCALED_NORM_BOUND, TAYLOR_DEGREE};
pub use matrix::{dot, norm, Matrix};
pub use svd::{rank_tau, rank_with, svd, RankThreshold, SvdResult, SVD_MAX_SWEEPS};

use crate::error::{LabError, Result};
use crate::scalar::Real;

/// Cosine similarity `xᵀy / (‖x‖‖y‖)`, clamped into `[-1, 1]`.
pub fn cosine_sim<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(LabError::Dimension(format!("cosine similarity of lengths {} and {}", x.len(), y.len())));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == T::zero() || ny == T::zero() {
        return Err(LabError::Degenerate("cosine similarity of a zero-norm vector".into()));
    }
    let s = dot(x, y) / (nx * ny);
    Ok(s.max(-T::one()).min(T::one()))
}

/// Minimum-norm least squares through the SVD pseudoinverse of `w`.
///
/// Factorizes once; `solve` can then be called for many right-hand sides.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    svd: SvdResult<T>,
    rank: usize,
}

impl<T: Real> LeastSquares<T> {
    pub fn new(w: &Matrix<T>) -> Result<Self> {
        let svd = svd(w)?;
        let top = svd.singular_values[0];
        let cutoff = top * T::epsilon() * T::from_usize(w.rows().max(w.cols())).unwrap();
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff && s > T::zero()).count();
        Ok(Self { svd, rank })
    }

    pub fn rows(&self) -> usize {
        self.svd.u.rows()
    }

    /// Numerical rank used by the pseudoinverse.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if b.len() != self.rows() {
            return Err(LabError::Dimension(format!(
                "least squares with {} rows but rhs of length {}",
                self.rows(),
                b.len()
            )));
        }
        let cols = self.svd.vt.cols();
        let mut t = vec![T::zero(); cols];
        for j in 0..self.rank {
            let coeff = (0..b.len()).map(|r| self.svd.u[(r, j)] * b[r]).sum::<T>() / self.svd.singular_values[j];
            for (ti, &v) in t.iter_mut().zip(self.svd.vt.row(j)) {
                *ti += coeff * v;
            }
        }
        Ok(t)
    }

    /// Squared residual `‖b − w t*‖²` computed from the orthogonal
    /// complement of the column space.
    pub fn residual_norm2(&self, b: &[T]) -> Result<T> {
        if b.len() != self.rows() {
            return Err(LabError::Dimension(format!(
                "least squares with {} rows but rhs of length {}",
                self.rows(),
                b.len()
            )));
        }
        let mut r = b.to_vec();
        for j in 0..self.rank {
            let c = (0..b.len()).map(|i| self.svd.u[(i, j)] * b[i]).sum::<T>();
            for (i, ri) in r.iter_mut().enumerate() {
                *ri -= c * self.svd.u[(i, j)];
            }
        }
        Ok(dot(&r, &r))
    }
}

/// Minimum-norm minimizer of `‖b − w t‖₂`.
pub fn least_squares<T: Real>(w: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if w.rows() != b.len() {
        return Err(LabError::Dimension(format!("least squares with {} rows but rhs of length {}", w.rows(), b.len())));
    }
    LeastSquares::new(w)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_examples() {
        let x = [0.3f64, -1.2, 2.0];
        assert!((cosine_sim(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((cosine_sim(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let s = cosine_sim(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(matches!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]), Err(LabError::Degenerate(_))));
        assert!(matches!(cosine_sim(&[1.0], &[1.0, 1.0]), Err(LabError::Dimension(_))));
    }

    #[test]
    fn least_squares_identity_and_column() {
        let b = [1.5, -2.0, 0.25];
        assert_eq!(least_squares(&Matrix::identity(3), &b).unwrap(), b.to_vec());
        let w = Matrix::column_vector(&[1.0f64, 0.0]);
        let t = least_squares(&w, &[2.0, 3.0]).unwrap();
        assert_eq!(t, vec![2.0]);
        let ls = LeastSquares::new(&w).unwrap();
        assert!((ls.residual_norm2(&[2.0, 3.0]).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_residual_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = Matrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = least_squares(&w, &b).unwrap();
        let wt = w.matvec(&t).unwrap();
        let r: Vec<f64> = b.iter().zip(&wt).map(|(a, c)| a - c).collect();
        let g = w.t_matvec(&r).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn least_squares_dimension_mismatch() {
        assert!(matches!(least_squares(&Matrix::<f64>::identity(3), &[1.0, 2.0]), Err(LabError::Dimension(_))));
    }

    #[test]
    fn rank_deficient_least_squares_gives_minimum_norm() {
        // duplicate columns: minimum-norm solution splits evenly
        let w = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![0.0, 0.0]]).unwrap();
        let t = least_squares(&w, &[2.0, 0.0]).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[1] - 1.0).abs() < 1e-12);
    }
}
