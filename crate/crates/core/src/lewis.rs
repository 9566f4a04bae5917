//! `l_p` Lewis weights, a brute-force importance-weight oracle and the
//! row-splitting utilities.
//!
//! The Lewis weights of `A` solve `a_i^T (A^T W^(1-2/p) A)^(-1) a_i =
//! w_i^(2/p)`. The map `w_i <- (a_i^T (A^T W^(1-2/p) A)^(-1) a_i)^(p/2)` is
//! monotone and homogeneous of degree `1 - p/2` in `w`, hence a contraction
//! with factor `|1 - p/2|` in the metric `max_i |ln w_i - ln w'_i|`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::linalg::{abs_pow, check_p, dot, norm2, DenseMatrix, Qr};
use crate::rng::{substream_seed, SplitMix64};
use crate::solvers::{solve_weighted, SolveStatus, SolverOptions};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 500;

const ASCENT_STEPS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LewisStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LewisWeights {
    pub p: f64,
    pub w: Vec<f64>,
    /// Certified approximation factor: every `w_i` is within a factor
    /// `gamma` of the exact Lewis weight. `1 / (1 - residual)`.
    pub gamma: f64,
    /// `max_i |a_i^T (A^T W^(1-2/p) A)^(-1) a_i / w_i^(2/p) - 1|` over
    /// nonzero rows, evaluated at the returned `w`.
    pub residual: f64,
    pub iterations: usize,
    pub status: LewisStatus,
}

impl LewisWeights {
    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn converged(&self) -> bool {
        self.status == LewisStatus::Converged
    }
}

// tau_i(w) = a_i^T (A^T W^(1-2/p) A)^(-1) a_i on the nonzero rows `idx`,
// via leverage scores of diag(c) A with c_i = w_i^(1/2 - 1/p).
fn fixed_point_map(a: &DenseMatrix, idx: &[usize], w: &[f64], p: f64) -> Result<Vec<f64>> {
    let d = a.cols();
    let expo = 0.5 - 1.0 / p;
    let c: Vec<f64> = w.iter().map(|&wi| wi.powf(expo)).collect();
    let mut data = Vec::with_capacity(idx.len() * d);
    for (&i, &ci) in idx.iter().zip(&c) {
        data.extend(a.row(i).iter().map(|x| x * ci));
    }
    let scaled = DenseMatrix::new(idx.len(), d, data)?;
    let qr = Qr::factor(&scaled, true);
    if !qr.is_full_column_rank() {
        return Err(Error::Degenerate("rank-deficient matrix has no Lewis weights"));
    }
    Ok(qr
        .row_leverage()
        .into_iter()
        .zip(&c)
        .map(|(lev, ci)| lev / (ci * ci))
        .collect())
}

fn fixed_point_residual(tau: &[f64], w: &[f64], p: f64) -> f64 {
    tau.iter()
        .zip(w)
        .map(|(t, wi)| (t / wi.powf(2.0 / p) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Lewis weights by the contraction iteration started at `w_i = d/n`.
/// All-zero rows get weight 0 and take no part in the fixed point.
pub fn lewis_weights(a: &DenseMatrix, p: f64, tol: f64, max_iter: usize) -> Result<LewisWeights> {
    check_p(p)?;
    if !(tol > 0.0) {
        return Err(Error::Domain { name: "tol", value: tol });
    }
    let (n, d) = (a.rows(), a.cols());
    let idx: Vec<usize> = (0..n).filter(|&i| !a.row_is_zero(i)).collect();
    if d == 0 || idx.len() < d {
        return Err(Error::Degenerate("fewer nonzero rows than columns"));
    }
    let mut w = vec![d as f64 / n as f64; idx.len()];
    let mut iterations = 0;
    let (residual, status) = loop {
        let tau = fixed_point_map(a, &idx, &w, p)?;
        let residual = fixed_point_residual(&tau, &w, p);
        if residual <= tol {
            break (residual, LewisStatus::Converged);
        }
        if iterations == max_iter {
            break (residual, LewisStatus::MaxIter);
        }
        for (wi, t) in w.iter_mut().zip(&tau) {
            *wi = t.powf(p / 2.0);
        }
        iterations += 1;
    };
    let mut full = vec![0.0; n];
    for (&i, wi) in idx.iter().zip(w) {
        full[i] = wi;
    }
    let gamma = if residual < 1.0 {
        1.0 / (1.0 - residual)
    } else {
        f64::INFINITY
    };
    Ok(LewisWeights {
        p,
        w: full,
        gamma,
        residual,
        iterations,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ImportanceMethod {
    ClosedForm1d,
    MultistartAscent,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ImportanceWeights {
    pub p: f64,
    pub u: Vec<f64>,
    pub method: ImportanceMethod,
    pub starts: usize,
}

// |a_i^T beta|^p / ||A beta||_p^p, scale free in beta.
fn ratio(a: &DenseMatrix, row: usize, beta: &[f64], p: f64) -> f64 {
    let num = abs_pow(dot(a.row(row), beta), p);
    if num == 0.0 {
        return 0.0;
    }
    let den: f64 = a.row_iter().map(|r| abs_pow(dot(r, beta), p)).sum();
    (num / den).min(1.0)
}

// Projected ascent of ln ratio on the unit sphere with a backtracking step.
fn ascend(a: &DenseMatrix, row: usize, start: &[f64], p: f64) -> f64 {
    let d = a.cols();
    let nrm = norm2(start);
    if nrm == 0.0 {
        return 0.0;
    }
    let mut beta: Vec<f64> = start.iter().map(|x| x / nrm).collect();
    let mut best = ratio(a, row, &beta, p);
    if best == 0.0 {
        return 0.0;
    }
    let mut step = 0.1;
    for _ in 0..ASCENT_STEPS {
        let t = dot(a.row(row), &beta);
        let mut energy = 0.0;
        let mut g = vec![0.0; d];
        for r in a.row_iter() {
            let z = dot(r, &beta);
            energy += abs_pow(z, p);
            let slope = z.signum() * abs_pow(z, p - 1.0);
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj -= slope * rj;
            }
        }
        for (gj, aj) in g.iter_mut().zip(a.row(row)) {
            *gj = p * (*gj / energy + aj / t);
        }
        let radial = dot(&g, &beta);
        for (gj, bj) in g.iter_mut().zip(&beta) {
            *gj -= radial * bj;
        }
        let gnorm = norm2(&g);
        if gnorm < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let mut cand: Vec<f64> = beta.iter().zip(&g).map(|(b, gj)| b + step * gj / gnorm).collect();
            let cn = norm2(&cand);
            cand.iter_mut().for_each(|x| *x /= cn);
            let val = ratio(a, row, &cand, p);
            if val > best {
                best = val;
                beta = cand;
                step = (2.0 * step).min(1.0);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

// Minimizer of ||A beta||_p^p subject to c^T beta = 1, a convex problem.
// Parameterize beta = c/|c|^2 + N z with N an orthonormal basis of the
// complement of c and hand the unconstrained problem in z to the regression
// solver. With c = a_i the minimizer maximizes the importance ratio of row i.
pub(crate) fn min_energy_on_hyperplane(a: &DenseMatrix, c: &[f64], p: f64) -> Option<Vec<f64>> {
    let d = a.cols();
    let nrm = norm2(c);
    if d < 2 || nrm == 0.0 {
        return None;
    }
    let v: Vec<f64> = c.iter().map(|x| x / nrm).collect();
    // Householder reflector sending v to a multiple of e_0; its other columns span v's complement
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut h = v.clone();
    h[0] += sign;
    let hh = dot(&h, &h);
    let basis = |i: usize, j: usize| -> f64 {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 2.0 * h[i] * h[j] / hh
    };
    let b = DenseMatrix::from_fn(a.rows(), d - 1, |r, k| {
        let row = a.row(r);
        (0..d).map(|i| row[i] * basis(i, k + 1)).sum()
    })
    .ok()?;
    let beta0: Vec<f64> = c.iter().map(|x| x / (nrm * nrm)).collect();
    let y: Vec<f64> = a.row_iter().map(|r| -dot(r, &beta0)).collect();
    let s = vec![1.0; a.rows()];
    let fit = solve_weighted(&b, &y, &s, p, SolverOptions { tol: 1e-10, max_iter: 200 }).ok()?;
    if fit.status == SolveStatus::Degenerate {
        return None;
    }
    let mut beta = beta0;
    for (k, zk) in fit.beta.iter().enumerate() {
        for (i, bi) in beta.iter_mut().enumerate() {
            *bi += zk * basis(i, k + 1);
        }
    }
    Some(beta)
}

/// Lower bound on `sup_beta |a_i^T beta|^p / ||A beta||_p^p`, exact for
/// `d = 1`. For `d >= 2` the best of projected ascent runs started from
/// `a_i`, from the solution of the equivalent constrained minimization and
/// from `starts` random unit vectors.
pub fn importance_weight_oracle(a: &DenseMatrix, p: f64, row: usize, starts: usize, seed: u64) -> Result<f64> {
    check_p(p)?;
    if row >= a.rows() {
        return Err(Error::IndexOutOfRange { index: row, len: a.rows() });
    }
    if a.row_is_zero(row) {
        return Ok(0.0);
    }
    let d = a.cols();
    if d == 1 {
        let total: f64 = a.row_iter().map(|r| abs_pow(r[0], p)).sum();
        return Ok(abs_pow(a.get(row, 0), p) / total);
    }
    let mut best = ascend(a, row, a.row(row), p);
    if let Some(beta) = min_energy_on_hyperplane(a, a.row(row), p) {
        best = best.max(ascend(a, row, &beta, p));
    }
    let mut rng = SplitMix64::new(seed);
    for _ in 0..starts {
        let start = rng.unit_vector(d);
        best = best.max(ascend(a, row, &start, p));
    }
    Ok(best)
}

/// [`importance_weight_oracle`] on every row; row `i` uses the substream
/// `i` of `seed`.
pub fn importance_weights(a: &DenseMatrix, p: f64, starts: usize, seed: u64) -> Result<ImportanceWeights> {
    let u = (0..a.rows())
        .map(|i| importance_weight_oracle(a, p, i, starts, substream_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceWeights {
        p,
        u,
        method: if a.cols() == 1 {
            ImportanceMethod::ClosedForm1d
        } else {
            ImportanceMethod::MultistartAscent
        },
        starts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SandwichViolation {
    pub row: usize,
    pub bound: Bound,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SandwichReport {
    /// `d^-(1 - p/2)`.
    pub lower_factor: f64,
    /// Smallest `u_i / w_i` over nonzero rows.
    pub min_ratio: f64,
    /// Largest `u_i / w_i` over nonzero rows.
    pub max_ratio: f64,
    pub violations: Vec<SandwichViolation>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `d^-(1 - p/2) w_i (1 - slack) <= u_i <= w_i (1 + slack)` on
/// every row.
pub fn sandwich_check(
    a: &DenseMatrix,
    p: f64,
    lw: &LewisWeights,
    iw: &ImportanceWeights,
    slack: f64,
) -> Result<SandwichReport> {
    check_len(a.rows(), lw.w.len())?;
    check_len(a.rows(), iw.u.len())?;
    if !lw.converged() {
        return Err(Error::Precondition("Lewis weights did not converge"));
    }
    let lower_factor = (a.cols() as f64).powf(-(1.0 - p / 2.0));
    let mut report = SandwichReport {
        lower_factor,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        violations: Vec::new(),
    };
    for (row, (&w, &u)) in lw.w.iter().zip(&iw.u).enumerate() {
        if w > 0.0 {
            report.min_ratio = report.min_ratio.min(u / w);
            report.max_ratio = report.max_ratio.max(u / w);
        }
        let lo = lower_factor * w * (1.0 - slack);
        let hi = w * (1.0 + slack);
        if u < lo {
            report.violations.push(SandwichViolation { row, bound: Bound::Lower, value: u, limit: lo });
        }
        if u > hi {
            report.violations.push(SandwichViolation { row, bound: Bound::Upper, value: u, limit: hi });
        }
    }
    Ok(report)
}

/// Replaces row `row` by `k` consecutive copies of `a_row / k^(1/p)`. The
/// `l_p` energy `||A beta||_p^p` is unchanged for every `beta`.
pub fn split_row(a: &DenseMatrix, row: usize, k: usize, p: f64) -> Result<DenseMatrix> {
    check_p(p)?;
    if row >= a.rows() {
        return Err(Error::IndexOutOfRange { index: row, len: a.rows() });
    }
    if k == 0 {
        return Err(Error::Domain { name: "k", value: 0.0 });
    }
    let scale = (k as f64).powf(-1.0 / p);
    let piece: Vec<f64> = a.row(row).iter().map(|x| x * scale).collect();
    let mut data = Vec::with_capacity((a.rows() + k - 1) * a.cols());
    for i in 0..a.rows() {
        if i == row {
            for _ in 0..k {
                data.extend_from_slice(&piece);
            }
        } else {
            data.extend_from_slice(a.row(i));
        }
    }
    DenseMatrix::new(a.rows() + k - 1, a.cols(), data)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct UniformityReport {
    /// `max_i max(w_i / (d/n), (d/n) / w_i)`.
    pub alpha: f64,
    /// The same quantity for the leverage scores.
    pub leverage_alpha: f64,
    /// `4/p - 1`.
    pub c_p: f64,
    /// `alpha^c_p`.
    pub bound: f64,
    pub holds: bool,
}

fn uniformity(v: &[f64], target: f64) -> f64 {
    v.iter()
        .map(|&x| if x > 0.0 { (x / target).max(target / x) } else { f64::INFINITY })
        .fold(1.0, f64::max)
}

/// How far the Lewis weights and the leverage scores are from uniform.
/// Rows that are identically zero are left out, so `n` counts nonzero rows.
pub fn uniformity_report(a: &DenseMatrix, p: f64, lw: &LewisWeights) -> Result<UniformityReport> {
    check_len(a.rows(), lw.w.len())?;
    if !lw.converged() {
        return Err(Error::Precondition("Lewis weights did not converge"));
    }
    let idx: Vec<usize> = (0..a.rows()).filter(|&i| !a.row_is_zero(i)).collect();
    let target = a.cols() as f64 / idx.len() as f64;
    let w: Vec<f64> = idx.iter().map(|&i| lw.w[i]).collect();
    let lev = crate::linalg::leverage_scores(&a.select_rows(&idx)?)?;
    let alpha = uniformity(&w, target);
    let leverage_alpha = uniformity(&lev.scores, target);
    let c_p = 4.0 / p - 1.0;
    let bound = alpha.powf(c_p);
    Ok(UniformityReport {
        alpha,
        leverage_alpha,
        c_p,
        bound,
        holds: leverage_alpha <= bound * (1.0 + 1e-6),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::leverage_scores;
    use core::f64::consts::FRAC_1_SQRT_2;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = SplitMix64::new(seed);
        DenseMatrix::from_fn(n, d, |_, _| rng.normal()).unwrap()
    }

    fn hypercube() -> DenseMatrix {
        let h = FRAC_1_SQRT_2;
        DenseMatrix::from_rows(&[[h, h], [h, -h], [-h, h], [-h, -h]]).unwrap()
    }

    #[test]
    fn identity_weights_are_one() {
        for p in [1.0, 1.5, 2.0] {
            let lw = lewis_weights(&DenseMatrix::identity(4), p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert!(lw.w.iter().all(|&w| (w - 1.0).abs() < 1e-15));
            assert!(lw.residual < 1e-14);
            assert_eq!(lw.iterations, 0);
        }
    }

    #[test]
    fn single_column_is_uniform() {
        let lw = lewis_weights(&DenseMatrix::filled(7, 1, 1.0), 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(lw.w.iter().all(|&w| (w - 1.0 / 7.0).abs() < 1e-12));
    }

    #[test]
    fn p2_matches_gram_leverage() {
        let a = random_matrix(50, 5, 3);
        let lw = lewis_weights(&a, 2.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        // oracle: a_i^T (A^T A)^-1 a_i by Gauss-Jordan
        let g = a.weighted_gram(&[1.0; 50]).unwrap();
        let d = 5;
        let mut m = vec![0.0; d * 2 * d];
        for i in 0..d {
            for j in 0..d {
                m[i * 2 * d + j] = g.get(i, j);
            }
            m[i * 2 * d + d + i] = 1.0;
        }
        for c in 0..d {
            let piv = m[c * 2 * d + c];
            for j in 0..2 * d {
                m[c * 2 * d + j] /= piv;
            }
            for r in 0..d {
                if r != c {
                    let f = m[r * 2 * d + c];
                    for j in 0..2 * d {
                        m[r * 2 * d + j] -= f * m[c * 2 * d + j];
                    }
                }
            }
        }
        for i in 0..50 {
            let ai = a.row(i);
            let mut q = 0.0;
            for r in 0..d {
                for c in 0..d {
                    q += ai[r] * m[r * 2 * d + d + c] * ai[c];
                }
            }
            assert!((lw.w[i] - q).abs() < 1e-8);
        }
    }

    #[test]
    fn converges_and_sums_to_d() {
        for (k, p) in [1.0, 1.25, 1.5, 2.0].into_iter().enumerate() {
            let a = random_matrix(120, 6, 10 + k as u64);
            let lw = lewis_weights(&a, p, 1e-10, DEFAULT_MAX_ITER).unwrap();
            assert!(lw.converged());
            assert!((lw.sum() - 6.0).abs() < 1e-6);
            assert!(lw.gamma >= 1.0 && lw.gamma < 1.0 + 1e-9);
        }
    }

    #[test]
    fn zero_rows_and_degenerate_input() {
        let a = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 2.0]]).unwrap();
        let lw = lewis_weights(&a, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(lw.w[1], 0.0);
        assert!((lw.w[0] - 1.0).abs() < 1e-7);
        let dup = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(lewis_weights(&dup, 1.0, 1e-8, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn max_iter_reports_residual() {
        let a = random_matrix(40, 3, 1);
        let lw = lewis_weights(&a, 1.0, 1e-14, 2).unwrap();
        assert_eq!(lw.status, LewisStatus::MaxIter);
        assert_eq!(lw.iterations, 2);
        assert!(lw.residual > 1e-14);
    }

    #[test]
    fn oracle_examples() {
        let i3 = DenseMatrix::identity(3);
        assert!((importance_weight_oracle(&i3, 1.0, 0, 4, 1).unwrap() - 1.0).abs() < 1e-12);
        let col = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!((importance_weight_oracle(&col, 1.0, 1, 0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let zero = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(importance_weight_oracle(&zero, 1.0, 1, 2, 0).unwrap(), 0.0);
    }

    #[test]
    fn hypercube_matches_angle_grid() {
        let a = hypercube();
        for row in 0..4 {
            // oracle: exhaustive grid over beta = (cos t, sin t)
            let mut grid: f64 = 0.0;
            for k in 0..200_000 {
                let t = core::f64::consts::PI * k as f64 / 200_000.0;
                grid = grid.max(ratio(&a, row, &[t.cos(), t.sin()], 1.0));
            }
            let u = importance_weight_oracle(&a, 1.0, row, 3, 9).unwrap();
            assert!((grid - 0.5).abs() < 1e-9);
            assert!((u - grid).abs() < 1e-9, "{u} vs {grid}");
        }
    }

    #[test]
    fn sandwich_examples() {
        let a = hypercube();
        let lw = lewis_weights(&a, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(lw.w.iter().all(|&w| (w - 0.5).abs() < 1e-9));
        let iw = importance_weights(&a, 1.0, 3, 0).unwrap();
        let rep = sandwich_check(&a, 1.0, &lw, &iw, 1e-3).unwrap();
        assert!(rep.passed());
        assert!((rep.lower_factor * 0.5 - 0.3536).abs() < 1e-4);

        let ones = DenseMatrix::filled(4, 1, 1.0);
        let lw = lewis_weights(&ones, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let iw = importance_weights(&ones, 1.0, 0, 0).unwrap();
        assert_eq!(iw.method, ImportanceMethod::ClosedForm1d);
        assert!(sandwich_check(&ones, 1.0, &lw, &iw, 1e-3).unwrap().passed());
    }

    #[test]
    fn sandwich_flags_violations() {
        let a = DenseMatrix::identity(2);
        let lw = lewis_weights(&a, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let iw = ImportanceWeights { p: 1.0, u: vec![0.1, 1.5], method: ImportanceMethod::MultistartAscent, starts: 0 };
        let rep = sandwich_check(&a, 1.0, &lw, &iw, 1e-3).unwrap();
        assert_eq!(rep.violations.len(), 2);
        assert_eq!(rep.violations[0].bound, Bound::Lower);
        assert_eq!(rep.violations[1].bound, Bound::Upper);
    }

    #[test]
    fn sandwich_random_small() {
        for seed in 0..6 {
            for p in [1.0, 1.25, 1.5, 2.0] {
                let a = random_matrix(12, 3, 100 + seed);
                let lw = lewis_weights(&a, p, 1e-10, DEFAULT_MAX_ITER).unwrap();
                let iw = importance_weights(&a, p, 4, seed).unwrap();
                let rep = sandwich_check(&a, p, &lw, &iw, 1e-3).unwrap();
                assert!(rep.passed(), "p={p} seed={seed}: {:?}", rep.violations);
            }
        }
    }

    #[test]
    fn p2_importance_is_leverage() {
        let a = random_matrix(15, 3, 77);
        let lev = leverage_scores(&a).unwrap();
        for i in 0..15 {
            let u = importance_weight_oracle(&a, 2.0, i, 2, 5).unwrap();
            assert!((u - lev.scores[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn split_examples() {
        let a = DenseMatrix::filled(2, 1, 1.0);
        assert_eq!(split_row(&a, 0, 1, 1.0).unwrap(), a);
        let s = split_row(&a, 1, 2, 1.0).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.5, 0.5]);
        let lw = lewis_weights(&s, 1.0, 1e-12, DEFAULT_MAX_ITER).unwrap();
        for (w, e) in lw.w.iter().zip([0.5, 0.25, 0.25]) {
            assert!((w - e).abs() < 1e-9);
        }
        let iw = importance_weights(&s, 1.0, 0, 0).unwrap();
        for (u, e) in iw.u.iter().zip([0.5, 0.25, 0.25]) {
            assert!((u - e).abs() < 1e-15);
        }
        assert!(matches!(split_row(&a, 2, 2, 1.0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn uniformity_examples() {
        let lw = lewis_weights(&DenseMatrix::identity(3), 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let rep = uniformity_report(&DenseMatrix::identity(3), 1.0, &lw).unwrap();
        assert_eq!(rep.alpha, 1.0);
        assert_eq!(rep.c_p, 3.0);

        let a = random_matrix(200, 4, 8);
        let lw = lewis_weights(&a, 1.0, 1e-10, DEFAULT_MAX_ITER).unwrap();
        let rep = uniformity_report(&a, 1.0, &lw).unwrap();
        assert!(rep.alpha.is_finite() && rep.holds);
    }
}
