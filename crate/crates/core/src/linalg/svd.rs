//! One-sided (Hestenes) Jacobi singular value decomposition.

use crate::error::{LabError, Result};
use crate::linalg::matrix::{dot, Matrix};
use crate::scalar::Real;

/// Maximum number of Jacobi sweeps before giving up.
pub const SVD_MAX_SWEEPS: usize = 60;

/// Economy SVD `m = u · diag(singular_values) · vt`.
///
/// For an `r × c` input with `k = min(r, c)`: `u` is `r × k` with
/// orthonormal columns, `vt` is `k × c` with orthonormal rows, and the
/// singular values are sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let k = self.singular_values.len();
        let us = Matrix::from_fn(self.u.rows(), k, |r, c| self.u[(r, c)] * self.singular_values[c]);
        us.matmul(&self.vt).expect("svd factors chain")
    }
}

fn convergence_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(16.0))
}

pub fn svd<T: Real>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LabError::Input(format!("svd of empty {}x{} matrix", m.rows(), m.cols())));
    }
    if !m.all_finite() {
        return Err(LabError::NonFinite("svd input".into()));
    }
    if m.rows() >= m.cols() {
        tall_svd(m)
    } else {
        let t = tall_svd(&m.transpose())?;
        Ok(SvdResult { u: t.vt.transpose(), singular_values: t.singular_values, vt: t.u.transpose() })
    }
}

/// Jacobi on the columns of a matrix with `rows >= cols`.
fn tall_svd<T: Real>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    let (rows, n) = m.shape();
    let mut cols: Vec<Vec<T>> = (0..n).map(|c| m.column(c)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|c| {
            let mut e = vec![T::zero(); n];
            e[c] = T::one();
            e
        })
        .collect();

    let fro2 = m.as_slice().iter().map(|&x| x * x).sum::<T>();
    let tol = convergence_tol::<T>() * fro2;
    let eps = T::epsilon();
    let two = T::lit(2.0);

    let mut converged = fro2 == T::zero() || n == 1;
    let mut sweep = 0;
    while !converged {
        if sweep == SVD_MAX_SWEEPS {
            return Err(LabError::NoConvergence { routine: "jacobi svd", cap: SVD_MAX_SWEEPS });
        }
        sweep += 1;
        let mut off2 = T::zero();
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                off2 += two * gamma * gamma;
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = off2.sqrt() <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigmas: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    order.sort_by(|&a, &b| sigmas[b].partial_cmp(&sigmas[a]).expect("finite singular values"));

    let sigma_max = sigmas[order[0]];
    let floor = sigma_max * eps * T::from_usize(rows.max(n)).unwrap();
    let mut u_cols: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    for &j in &order {
        let s = sigmas[j];
        singular_values.push(s);
        if s > floor && s > T::zero() {
            u_cols.push(Some(cols[j].iter().map(|&x| x / s).collect()));
        } else {
            u_cols.push(None);
        }
    }
    let u_cols = complete_orthonormal(rows, u_cols);

    let u = Matrix::from_fn(rows, n, |r, c| u_cols[c][r]);
    let vt = Matrix::from_fn(n, n, |r, c| v[order[r]][c]);
    Ok(SvdResult { u, singular_values, vt })
}

fn rotate<T: Real>(vecs: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = vecs.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the missing columns (null singular directions) with unit vectors
/// orthogonal to every column already present.
fn complete_orthonormal<T: Real>(dim: usize, cols: Vec<Option<Vec<T>>>) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = cols.iter().flatten().cloned().collect();
    let mut candidate = 0;
    let mut out = Vec::with_capacity(cols.len());
    for col in cols {
        match col {
            Some(c) => out.push(c),
            None => loop {
                assert!(candidate < dim, "ran out of completion candidates");
                let mut e = vec![T::zero(); dim];
                e[candidate] = T::one();
                candidate += 1;
                // two passes of Gram-Schmidt
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(b, &e);
                        for (x, &y) in e.iter_mut().zip(b) {
                            *x -= proj * y;
                        }
                    }
                }
                let n = dot(&e, &e).sqrt();
                if n > T::lit(0.5) {
                    e.iter_mut().for_each(|x| *x /= n);
                    basis.push(e.clone());
                    out.push(e);
                    break;
                }
            },
        }
    }
    out
}

/// Threshold used for numerical rank.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum RankThreshold {
    /// Count singular values `>= tau`.
    Absolute(f64),
    /// Count singular values `>= rho * sigma_max`.
    Relative(f64),
}

impl Default for RankThreshold {
    fn default() -> Self {
        RankThreshold::Relative(0.01)
    }
}

impl RankThreshold {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            RankThreshold::Absolute(v) | RankThreshold::Relative(v) => v,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(LabError::Input(format!("rank threshold must be positive, got {v}")))
        }
    }

    /// Counts singular values (descending) passing this threshold.
    pub fn count<T: Real>(&self, singular_values: &[T]) -> Result<usize> {
        self.validate()?;
        let tau = match *self {
            RankThreshold::Absolute(tau) => T::lit(tau),
            RankThreshold::Relative(rho) => {
                let top = singular_values.first().copied().unwrap_or_else(T::zero);
                if top == T::zero() {
                    return Ok(0);
                }
                T::lit(rho) * top
            }
        };
        Ok(singular_values.iter().filter(|&&s| s >= tau).count())
    }
}

/// Number of singular values at or above the absolute threshold `tau`.
pub fn rank_tau<T: Real>(m: &Matrix<T>, tau: T) -> Result<usize> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(LabError::Input(format!("rank threshold tau must be positive, got {tau}")));
    }
    let s = svd(m)?;
    Ok(s.singular_values.iter().filter(|&&x| x >= tau).count())
}

/// Numerical rank under either threshold mode.
pub fn rank_with<T: Real>(m: &Matrix<T>, threshold: RankThreshold) -> Result<usize> {
    threshold.validate()?;
    let s = svd(m)?;
    threshold.count(&s.singular_values)
}
