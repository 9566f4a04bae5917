//! Minimizers of the weighted losses `sum_i s_i |a_i^T beta - y_i|^p`.
//!
//! Both solvers start from the weighted least-squares fit and run IRLS on a
//! Huber-type smoothing of `|r|^p`: below the floor `mu` the loss is replaced
//! by the quadratic that matches value and slope at `|r| = mu`. IRLS is then
//! a majorize-minimize scheme for the smoothed loss, so its objective never
//! increases. `mu` is annealed by 10x per stage. For `p = 1` the IRLS point
//! is finished by an exact vertex descent (each step a weighted-median line
//! search), which lands on an optimal basic solution.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::linalg::{abs_pow, dot, norm2, solve_square, DenseMatrix, Qr};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

const MU_START: f64 = 1e-2;
const MU_END: f64 = 1e-10;
// relative change in a loss value that is indistinguishable from rounding
const ROUNDING_SLACK: f64 = 1e-13;
// residuals below this fraction of the largest count as zero in certificates
const ZERO_RESIDUAL_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SolveResult {
    pub beta: Vec<f64>,
    /// Weighted loss at `beta`.
    pub objective: f64,
    /// IRLS solves plus vertex pivots.
    pub iterations: usize,
    pub status: SolveStatus,
    /// Normalized first-order optimality gap; see [`kkt_residual`].
    pub kkt_residual: f64,
    /// Smoothed objective after every IRLS iteration.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Worst-case loss ratio `1 + eps / (1 - eps)` implied by an
/// `eps`-accurate robust uniform convergence guarantee.
pub fn approx_transfer_bound(eps: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Domain {
            name: "eps",
            value: eps,
        });
    }
    Ok(1.0 + eps / (1.0 - eps))
}

/// Lowest value whose cumulative weight reaches half the total weight.
/// Entries with zero weight are ignored; `None` if no weight is positive.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Option<f64> {
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&v, &w)| (v, w))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let half = 0.5 * pairs.iter().map(|p| p.1).sum::<f64>();
    let mut acc = 0.0;
    for &(v, w) in &pairs {
        acc += w;
        if acc >= half {
            return Some(v);
        }
    }
    pairs.last().map(|p| p.0)
}

/// Minimize `sum_i s_i |a_i^T beta - y_i|`.
pub fn solve_weighted_l1(a: &DenseMatrix, y: &[f64], s: &[f64], tol: f64) -> Result<SolveResult> {
    solve_weighted(
        a,
        y,
        s,
        1.0,
        SolverOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Minimize `sum_i s_i |a_i^T beta - y_i|^p` for `p` in `(1, 2]`.
pub fn solve_weighted_lp(a: &DenseMatrix, y: &[f64], s: &[f64], p: f64, tol: f64) -> Result<SolveResult> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Domain { name: "p", value: p });
    }
    solve_weighted(
        a,
        y,
        s,
        p,
        SolverOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Shared entry point for any `p` in `[1, 2]`.
pub fn solve_weighted(a: &DenseMatrix, y: &[f64], s: &[f64], p: f64, opts: SolverOptions) -> Result<SolveResult> {
    crate::linalg::check_p(p)?;
    check_len(a.rows(), y.len())?;
    check_len(a.rows(), s.len())?;
    if s.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let d = a.cols();
    let support: Vec<usize> = (0..a.rows()).filter(|&i| s[i] > 0.0).collect();
    let degenerate = |beta: Vec<f64>| -> Result<SolveResult> {
        let objective = crate::linalg::weighted_lp_loss(a, y, &beta, s, p)?;
        Ok(SolveResult {
            beta,
            objective,
            iterations: 0,
            status: SolveStatus::Degenerate,
            kkt_residual: f64::INFINITY,
            trace: Vec::new(),
        })
    };
    if support.len() < d || d == 0 {
        return degenerate(vec![0.0; d]);
    }
    let sub_a = a.select_rows(&support)?;
    let sub_y: Vec<f64> = support.iter().map(|&i| y[i]).collect();
    let sub_s: Vec<f64> = support.iter().map(|&i| s[i]).collect();
    if !Qr::factor(&sub_a, true).is_full_column_rank() {
        return degenerate(vec![0.0; d]);
    }
    let mut res = Problem {
        a: &sub_a,
        y: &sub_y,
        s: &sub_s,
        p,
    }
    .solve(opts)?;
    res.objective = crate::linalg::weighted_lp_loss(a, y, &res.beta, s, p)?;
    Ok(res)
}

/// First-order optimality gap of `beta` for the weighted `l_p` loss.
///
/// The gradient is divided by its total mass `sum_i s_i p |r_i|^(p-1) ||a_i||`,
/// so the value is dimensionless and invariant to rescaling `A` or `y`. Rows
/// whose residual is numerically zero (below `1e-10` of the largest) enter
/// with a free multiplier: in `[-1, 1]` for `p = 1` (the subdifferential),
/// and in `[-p t^(p-1), p t^(p-1)]` at threshold `t` for `p > 1`, where the
/// derivative is too steep to resolve in floating point when `p` is near 1.
pub fn kkt_residual(a: &DenseMatrix, y: &[f64], s: &[f64], beta: &[f64], p: f64) -> Result<f64> {
    check_len(a.rows(), y.len())?;
    check_len(a.rows(), s.len())?;
    let r = crate::linalg::residuals(a, y, beta)?;
    Ok(kkt_from_residuals(a, s, &r, p))
}

fn kkt_from_residuals(a: &DenseMatrix, s: &[f64], r: &[f64], p: f64) -> f64 {
    let d = a.cols();
    let rmax = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    // Residuals this small are unresolved; their derivative may take any
    // value in [-bound, bound] (the subdifferential when p = 1).
    let ztol = ZERO_RESIDUAL_RTOL * rmax;
    let bound = if p == 1.0 { 1.0 } else { p * abs_pow(ztol, p - 1.0) };
    let mut g = vec![0.0; d];
    let mut mass = 0.0;
    let mut free: Vec<Vec<f64>> = Vec::new();
    for ((row, &ri), &si) in a.row_iter().zip(r).zip(s) {
        if si == 0.0 {
            continue;
        }
        if ri.abs() <= ztol {
            if bound > 0.0 {
                free.push(row.iter().map(|x| si * bound * x).collect());
                mass += si * bound * norm2(row);
            }
        } else {
            let c = si * p * abs_pow(ri, p - 1.0) * ri.signum();
            for (gj, aj) in g.iter_mut().zip(row) {
                *gj += c * aj;
            }
            mass += c.abs() * norm2(row);
        }
    }
    if mass == 0.0 {
        return 0.0;
    }
    if free.is_empty() {
        return norm2(&g) / mass;
    }
    // min_{c in [-1,1]^k} || g + sum_k c_k z_k ||: try the unconstrained
    // least-squares multipliers first (exact at a nondegenerate vertex), then
    // refine inside the box by cyclic coordinate descent
    let k = free.len();
    let mut c = vec![0.0; k];
    if k <= d {
        let zt = DenseMatrix::from_fn(d, k, |i, j| free[j][i]);
        if let Ok(zt) = zt {
            let qr = Qr::factor(&zt, true);
            if qr.is_full_column_rank() {
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                if let Ok(sol) = qr.solve_least_squares(&neg) {
                    c = sol.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect();
                }
            }
        }
    }
    for (ck, z) in c.iter().zip(&free) {
        for (gj, zj) in g.iter_mut().zip(z) {
            *gj += ck * zj;
        }
    }
    let norms: Vec<f64> = free.iter().map(|z| dot(z, z)).collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for (k, z) in free.iter().enumerate() {
            if norms[k] == 0.0 {
                continue;
            }
            let step = -dot(&g, z) / norms[k];
            let new = (c[k] + step).clamp(-1.0, 1.0);
            let delta = new - c[k];
            if delta != 0.0 {
                for (gj, zj) in g.iter_mut().zip(z) {
                    *gj += delta * zj;
                }
                c[k] = new;
                moved = moved.max(delta.abs());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    norm2(&g) / mass
}

struct Problem<'a> {
    a: &'a DenseMatrix,
    y: &'a [f64],
    s: &'a [f64],
    p: f64,
}

impl Problem<'_> {
    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        self.a
            .row_iter()
            .zip(self.y)
            .map(|(r, &yi)| dot(r, beta) - yi)
            .collect()
    }

    fn loss(&self, beta: &[f64]) -> f64 {
        self.a
            .row_iter()
            .zip(self.y)
            .zip(self.s)
            .map(|((r, &yi), &w)| w * abs_pow(dot(r, beta) - yi, self.p))
            .sum()
    }

    /// Smoothed loss: `|r|^p` above `mu`, matched quadratic below.
    fn smoothed(&self, beta: &[f64], mu: f64) -> f64 {
        let p = self.p;
        let mu_p = abs_pow(mu, p);
        let quad = 0.5 * p * abs_pow(mu, p - 2.0);
        self.a
            .row_iter()
            .zip(self.y)
            .zip(self.s)
            .map(|((row, &yi), &w)| {
                let r = (dot(row, beta) - yi).abs();
                if r >= mu {
                    w * abs_pow(r, p)
                } else {
                    w * (quad * r * r + (1.0 - 0.5 * p) * mu_p)
                }
            })
            .sum()
    }

    fn weighted_ls(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let root: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let sa = self.a.scale_rows(&root)?;
        let sy: Vec<f64> = self.y.iter().zip(&root).map(|(y, r)| y * r).collect();
        Qr::factor(&sa, false).solve_least_squares(&sy)
    }

    /// `argmin_delta sum_i curv_i (a_i^T delta + grad_i / curv_i)^2`.
    fn quadratic_step(&self, curv: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        let root: Vec<f64> = curv.iter().map(|c| c.sqrt()).collect();
        let sa = self.a.scale_rows(&root)?;
        let rhs: Vec<f64> = grad.iter().zip(&root).map(|(g, r)| -g / r).collect();
        Qr::factor(&sa, false).solve_least_squares(&rhs)
    }

    fn solve(&self, opts: SolverOptions) -> Result<SolveResult> {
        let (n, d, p) = (self.a.rows(), self.a.cols(), self.p);
        let beta_ls = self.weighted_ls(self.s)?;
        let total_s: f64 = self.s.iter().sum();
        let base = self.loss(&beta_ls);
        let finish = |beta: Vec<f64>, iterations: usize, trace: Vec<f64>| -> SolveResult {
            let r = self.residuals(&beta);
            let kkt = kkt_from_residuals(self.a, self.s, &r, p);
            let status = if kkt <= opts.tol {
                SolveStatus::Converged
            } else {
                SolveStatus::MaxIter
            };
            SolveResult {
                objective: self.loss(&beta),
                beta,
                iterations,
                status,
                kkt_residual: kkt,
                trace,
            }
        };

        let y_mass: f64 = self
            .y
            .iter()
            .zip(self.s)
            .map(|(y, w)| w * abs_pow(*y, p))
            .sum();
        // consistent system: the LS fit already interpolates up to rounding
        if base <= abs_pow(1e-14, p) * y_mass || p == 2.0 {
            return Ok(finish(beta_ls, 1, vec![base]));
        }
        if d == 1 && p == 1.0 {
            // exact: minimize sum s_i |a_i| |beta - y_i / a_i|
            let (vals, wts): (Vec<f64>, Vec<f64>) = self
                .a
                .row_iter()
                .zip(self.y)
                .zip(self.s)
                .filter(|((r, _), _)| r[0] != 0.0)
                .map(|((r, &yi), &w)| (yi / r[0], w * r[0].abs()))
                .unzip();
            let beta = vec![weighted_median(&vals, &wts).unwrap_or(0.0)];
            return Ok(finish(beta, 1, Vec::new()));
        }

        // residual scale: the p-th root of the mean weighted loss at the LS fit
        let rscale = (base / total_s).powf(1.0 / p);
        let mut beta = beta_ls;
        let mut trace = Vec::new();
        let mut iterations = 0usize;
        let mut mu = MU_START * rscale;
        let mu_end = MU_END * rscale;
        let last_stage_budget = opts.max_iter / 2;

        loop {
            let final_stage = mu <= mu_end * 1.000001;
            let stage_cap = if final_stage {
                opts.max_iter.saturating_sub(iterations)
            } else {
                ((opts.max_iter - last_stage_budget) / 9).max(1)
            };
            let mut current = self.smoothed(&beta, mu);
            for _ in 0..stage_cap {
                if iterations >= opts.max_iter {
                    break;
                }
                let r = self.residuals(&beta);
                let mut grad = Vec::with_capacity(r.len());
                let mut major = Vec::with_capacity(r.len());
                let mut newton = Vec::with_capacity(r.len());
                for (&ri, &si) in r.iter().zip(self.s) {
                    let ar = ri.abs();
                    if ar >= mu {
                        let c = si * p * abs_pow(ar, p - 2.0);
                        grad.push(c * ri);
                        major.push(c);
                        newton.push(c * (p - 1.0));
                    } else {
                        let c = si * p * abs_pow(mu, p - 2.0);
                        grad.push(c * ri);
                        major.push(c);
                        newton.push(c);
                    }
                }
                iterations += 1;
                // majorize-minimize (plain IRLS) step: always a descent step
                let dm = self.quadratic_step(&major, &grad)?;
                let mm: Vec<f64> = beta.iter().zip(&dm).map(|(b, x)| b + x).collect();
                let mut best_val = self.smoothed(&mm, mu);
                let mut best = mm;
                if p > 1.0 {
                    // damped Newton on the smoothed loss
                    let dn = self.quadratic_step(&newton, &grad)?;
                    let full: Vec<f64> = beta.iter().zip(&dn).map(|(b, x)| b + x).collect();
                    let full_val = self.smoothed(&full, mu);
                    let mut t = 1.0;
                    for _ in 0..30 {
                        let cand: Vec<f64> = beta.iter().zip(&dn).map(|(b, x)| b + t * x).collect();
                        let val = self.smoothed(&cand, mu);
                        if val < best_val {
                            best = cand;
                            best_val = val;
                            break;
                        }
                        if val <= current {
                            break;
                        }
                        t *= 0.5;
                    }
                    // Once the loss is flat to rounding, steer by the gradient
                    // instead: for p near 1 the loss stops resolving progress
                    // long before first-order optimality is reached.
                    if final_stage && current - best_val <= ROUNDING_SLACK * current && full_val <= current * (1.0 + ROUNDING_SLACK) {
                        let here = kkt_from_residuals(self.a, self.s, &r, p);
                        let there = kkt_from_residuals(self.a, self.s, &self.residuals(&full), p);
                        if there < here {
                            best = full;
                            best_val = full_val;
                        }
                    }
                }
                let step: Vec<f64> = best.iter().zip(&beta).map(|(x, y)| x - y).collect();
                let small_step = norm2(&step) <= 1e-13 * (1.0 + norm2(&beta));
                if best_val <= current * (1.0 + ROUNDING_SLACK) {
                    beta = best;
                    current = best_val;
                }
                trace.push(current);
                if small_step {
                    break;
                }
                if final_stage && p > 1.0 {
                    let kkt = kkt_from_residuals(self.a, self.s, &self.residuals(&beta), p);
                    if kkt <= 0.1 * opts.tol {
                        break;
                    }
                }
            }
            if final_stage || iterations >= opts.max_iter {
                break;
            }
            mu = (mu * 0.1).max(mu_end);
        }

        if p == 1.0 {
            let (vertex, pivots) = self.vertex_descent(&beta, 20 * n + 100)?;
            iterations += pivots;
            // the vertex is exact; IRLS can only tie it up to rounding
            if self.loss(&vertex) <= self.loss(&beta) * (1.0 + 1e-12) {
                beta = vertex;
            }
        }
        let _ = n;
        Ok(finish(beta, iterations, trace))
    }

    /// Choose `d` linearly independent rows, preferring small `|r_i| / ||a_i||`.
    fn initial_basis(&self, beta: &[f64]) -> Option<Vec<usize>> {
        let d = self.a.cols();
        let r = self.residuals(beta);
        let mut order: Vec<(f64, usize)> = r
            .iter()
            .enumerate()
            .filter_map(|(i, ri)| {
                let nrm = norm2(self.a.row(i));
                (nrm > 0.0).then(|| (ri.abs() / nrm, i))
            })
            .collect();
        order.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        let mut basis = Vec::with_capacity(d);
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
        for &(_, i) in &order {
            let row = self.a.row(i);
            let mut v = row.to_vec();
            for _ in 0..2 {
                for q in &ortho {
                    let c = dot(q, &v);
                    for (vj, qj) in v.iter_mut().zip(q) {
                        *vj -= c * qj;
                    }
                }
            }
            let nv = norm2(&v);
            if nv > 1e-8 * norm2(row) {
                ortho.push(v.into_iter().map(|x| x / nv).collect());
                basis.push(i);
                if basis.len() == d {
                    return Some(basis);
                }
            }
        }
        None
    }

    /// Descent over vertices of the `l1` objective. Each pivot moves along an
    /// edge direction that keeps `d - 1` basic residuals at zero, with an
    /// exact line search (a weighted median of the breakpoints).
    fn vertex_descent(&self, start: &[f64], max_pivots: usize) -> Result<(Vec<f64>, usize)> {
        let d = self.a.cols();
        let Some(mut basis) = self.initial_basis(start) else {
            return Ok((start.to_vec(), 0));
        };
        let solve_basis = |basis: &[usize]| -> Result<Vec<f64>> {
            let ab = self.a.select_rows(basis)?;
            let yb: Vec<f64> = basis.iter().map(|&i| self.y[i]).collect();
            solve_square(&ab, &yb)
        };
        let mut beta = solve_basis(&basis)?;
        let mut obj = self.loss(&beta);
        let mut pivots = 0;
        let mut in_basis = vec![false; self.a.rows()];
        for &b in &basis {
            in_basis[b] = true;
        }

        while pivots < max_pivots {
            let r = self.residuals(&beta);
            let rmax = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let ztol = 1e-12 * rmax;
            // A_B^T v = -sum_{nonbasic} s_i sign(r_i) a_i
            let mut rhs = vec![0.0; d];
            for (i, row) in self.a.row_iter().enumerate() {
                if in_basis[i] || r[i].abs() <= ztol {
                    continue;
                }
                let c = -self.s[i] * r[i].signum();
                for (x, aj) in rhs.iter_mut().zip(row) {
                    *x += c * aj;
                }
            }
            let ab = self.a.select_rows(&basis)?;
            let v = solve_square(&ab.transpose(), &rhs)?;
            let mut cands: Vec<(f64, usize)> = v
                .iter()
                .enumerate()
                .map(|(k, vk)| (vk / self.s[basis[k]], k))
                .filter(|(c, _)| c.abs() > 1.0 + 1e-11)
                .collect();
            cands.sort_by(|x, y| y.0.abs().partial_cmp(&x.0.abs()).unwrap_or(Ordering::Equal));

            let mut moved = false;
            for (c, k) in cands {
                let mut e = vec![0.0; d];
                e[k] = c.signum();
                let delta = solve_square(&ab, &e)?;
                let z: Vec<f64> = self.a.row_iter().map(|row| dot(row, &delta)).collect();
                let (mut bps, mut wts, mut rows) = (Vec::new(), Vec::new(), Vec::new());
                for i in 0..z.len() {
                    if z[i].abs() > 1e-14 * norm2(&delta) * norm2(self.a.row(i)) {
                        bps.push(-r[i] / z[i]);
                        wts.push(self.s[i] * z[i].abs());
                        rows.push(i);
                    }
                }
                let Some(alpha) = weighted_median(&bps, &wts) else {
                    continue;
                };
                if alpha <= 0.0 {
                    continue;
                }
                let entering = rows
                    .iter()
                    .zip(&bps)
                    .filter(|(&i, &b)| b == alpha && !in_basis[i])
                    .map(|(&i, _)| i)
                    .next();
                let Some(entering) = entering else {
                    continue;
                };
                let mut trial_basis = basis.clone();
                trial_basis[k] = entering;
                let Ok(trial) = solve_basis(&trial_basis) else {
                    continue;
                };
                let trial_obj = self.loss(&trial);
                if trial_obj < obj {
                    in_basis[basis[k]] = false;
                    in_basis[entering] = true;
                    basis = trial_basis;
                    beta = trial;
                    obj = trial_obj;
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
            pivots += 1;
        }
        Ok((beta, pivots))
    }
}
