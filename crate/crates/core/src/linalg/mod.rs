//! Dense linear algebra, leverage scores and `l_p` loss helpers.

mod matrix;
mod qr;

pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use qr::{solve_square, Qr, RANK_RTOL};

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{check_len, Error, Result};

/// Statistical leverage scores `a_i^T (A^T A)^+ a_i` of every row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LeverageScores {
    pub scores: Vec<f64>,
    pub rank: usize,
}

impl LeverageScores {
    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// Leverage scores through a column-pivoted Householder QR. Columns whose
/// `R` diagonal falls below [`RANK_RTOL`] of the largest are dropped, so
/// rank-deficient inputs are handled through the pseudoinverse.
pub fn leverage_scores(a: &DenseMatrix) -> Result<LeverageScores> {
    if a.rows() == 0 || a.cols() == 0 || a.is_zero() {
        return Err(Error::Degenerate("all-zero matrix has no leverage"));
    }
    let qr = Qr::factor(a, true);
    let scores = qr
        .row_leverage()
        .into_iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    Ok(LeverageScores {
        scores,
        rank: qr.rank(),
    })
}

/// `|x|^p`, with the common exponents special-cased.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    let ax = x.abs();
    if p == 1.0 {
        ax
    } else if p == 2.0 {
        ax * ax
    } else if ax == 0.0 {
        0.0
    } else {
        ax.powf(p)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if (1.0..=2.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain { name: "p", value: p })
    }
}

/// `(sum |v_i|^p)^(1/p)` for `p` in `[1, 2]`.
pub fn lp_norm(v: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = v.iter().map(|x| abs_pow(x / scale, p)).sum();
    Ok(scale * s.powf(1.0 / p))
}

/// `sum_i |v_i|^p` (the `p`-th power of the norm, no root taken).
pub fn lp_energy(v: &[f64], p: f64) -> f64 {
    v.iter().map(|&x| abs_pow(x, p)).sum()
}

/// `sum_i s_i |a_i^T beta - y_i|^p`. With `s = 1` this is the full loss.
pub fn weighted_lp_loss(a: &DenseMatrix, y: &[f64], beta: &[f64], s: &[f64], p: f64) -> Result<f64> {
    check_len(a.rows(), y.len())?;
    check_len(a.cols(), beta.len())?;
    check_len(a.rows(), s.len())?;
    if s.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain {
            name: "s",
            value: s.iter().copied().find(|w| !(*w >= 0.0) || !w.is_finite()).unwrap_or(f64::NAN),
        });
    }
    Ok(a
        .row_iter()
        .zip(y)
        .zip(s)
        .filter(|(_, &w)| w != 0.0)
        .map(|((r, &yi), &w)| w * abs_pow(dot(r, beta) - yi, p))
        .sum())
}

/// Unweighted loss `||A beta - y||_p^p`.
pub fn lp_loss(a: &DenseMatrix, y: &[f64], beta: &[f64], p: f64) -> Result<f64> {
    check_len(a.rows(), y.len())?;
    check_len(a.cols(), beta.len())?;
    Ok(a
        .row_iter()
        .zip(y)
        .map(|(r, &yi)| abs_pow(dot(r, beta) - yi, p))
        .sum())
}

/// Residual vector `A beta - y`.
pub fn residuals(a: &DenseMatrix, y: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    check_len(a.rows(), y.len())?;
    let mut r = a.mul_vec(beta)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri -= yi;
    }
    Ok(r)
}
