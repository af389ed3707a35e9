//! Matrix exponential by scaling and squaring.

use crate::error::{LabError, Result};
use crate::linalg::matrix::Matrix;
use crate::scalar::Real;

/// Degree of the truncated Taylor series.
pub const TAYLOR_DEGREE: usize = 12;
/// The scaled argument satisfies `‖A / 2^s‖₁ <= SCALED_NORM_BOUND`.
pub const SCALED_NORM_BOUND: f64 = 0.5;

/// `exp(scale · g)`.
///
/// `scale == 0` (or a zero generator) returns the identity exactly.
pub fn matrix_exp<T: Real>(g: &Matrix<T>, scale: T) -> Result<Matrix<T>> {
    if !g.is_square() {
        return Err(LabError::Input(format!("matrix exponential of non-square {}x{} matrix", g.rows(), g.cols())));
    }
    if !scale.is_finite() || !g.all_finite() {
        return Err(LabError::NonFinite("matrix exponential argument".into()));
    }
    let n = g.rows();
    let a = g.scale(scale);
    let norm = a.norm_1();
    if norm == T::zero() {
        return Ok(Matrix::identity(n));
    }

    let bound = T::lit(SCALED_NORM_BOUND);
    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > bound {
        scaled_norm /= T::lit(2.0);
        squarings += 1;
    }
    let b = a.scale(T::lit(0.5).powi(squarings as i32));

    // Horner: I + B(I + B/2(I + B/3(...)))
    let eye = Matrix::identity(n);
    let mut p = eye.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        let bp = b.matmul(&p)?;
        p = eye.add(&bp.scale(T::one() / T::from_usize(k).unwrap()))?;
    }
    for _ in 0..squarings {
        p = p.matmul(&p)?;
    }
    Ok(p)
}
