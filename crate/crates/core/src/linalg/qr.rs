//! Householder QR with optional column pivoting.
//!
//! Tall-skinny use is the norm here (n up to ~1e5, d up to ~20), so the
//! factorization keeps a column-major working copy and applies reflectors
//! column by column.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::DenseMatrix;
use crate::error::{check_len, Error, Result};

/// Diagonal entries of `R` at or below this fraction of the largest are
/// treated as zero when determining the numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Qr {
    n: usize,
    d: usize,
    // column-major; R on and above the diagonal, reflector tails below (v_0 = 1 implicit)
    a: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl Qr {
    /// Factor `A P = Q R`. Without pivoting `P = I`.
    pub fn factor(m: &DenseMatrix, pivot: bool) -> Qr {
        let (n, d) = (m.rows(), m.cols());
        let mut a = vec![0.0; n * d];
        for i in 0..n {
            for (j, &x) in m.row(i).iter().enumerate() {
                a[j * n + i] = x;
            }
        }
        let steps = n.min(d);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..d).collect();

        for k in 0..steps {
            if pivot {
                let mut best = k;
                let mut best_norm = -1.0;
                for j in k..d {
                    let nrm: f64 = a[j * n + k..(j + 1) * n].iter().map(|x| x * x).sum();
                    if nrm > best_norm {
                        best_norm = nrm;
                        best = j;
                    }
                }
                if best != k {
                    for i in 0..n {
                        a.swap(k * n + i, best * n + i);
                    }
                    perm.swap(k, best);
                }
            }

            let col = &mut a[k * n + k..(k + 1) * n];
            let x0 = col[0];
            let tail_sq: f64 = col[1..].iter().map(|x| x * x).sum();
            if tail_sq == 0.0 {
                // already triangular in this column; H = I
                tau[k] = 0.0;
                continue;
            }
            let norm = (x0 * x0 + tail_sq).sqrt();
            let beta = if x0 >= 0.0 { -norm } else { norm };
            tau[k] = (beta - x0) / beta;
            let scale = 1.0 / (x0 - beta);
            for v in &mut col[1..] {
                *v *= scale;
            }
            col[0] = beta;

            // apply H_k to the trailing columns
            let (head, rest) = a.split_at_mut((k + 1) * n);
            let v = &head[k * n + k..(k + 1) * n];
            for j in 0..d - k - 1 {
                let c = &mut rest[j * n + k..(j + 1) * n];
                let mut s = c[0];
                for (ci, vi) in c[1..].iter().zip(&v[1..]) {
                    s += ci * vi;
                }
                s *= tau[k];
                c[0] -= s;
                for (ci, vi) in c[1..].iter_mut().zip(&v[1..]) {
                    *ci -= s * vi;
                }
            }
        }

        let rmax = (0..steps).map(|k| a[k * n + k].abs()).fold(0.0, f64::max);
        let rank = if rmax == 0.0 {
            0
        } else if pivot {
            (0..steps)
                .take_while(|&k| a[k * n + k].abs() > RANK_RTOL * rmax)
                .count()
        } else {
            (0..steps)
                .filter(|&k| a[k * n + k].abs() > RANK_RTOL * rmax)
                .count()
        };

        Qr {
            n,
            d,
            a,
            tau,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_column_rank(&self) -> bool {
        self.rank == self.d
    }

    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.n.min(self.d))
            .map(|k| self.a[k * self.n + k])
            .collect()
    }

    /// Column permutation: column `k` of `A P` is column `perm()[k]` of `A`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    fn apply_h(&self, k: usize, x: &mut [f64]) {
        let n = self.n;
        let t = self.tau[k];
        if t == 0.0 {
            return;
        }
        let v = &self.a[k * n + k..(k + 1) * n];
        let seg = &mut x[k..];
        let mut s = seg[0];
        for (xi, vi) in seg[1..].iter().zip(&v[1..]) {
            s += xi * vi;
        }
        s *= t;
        seg[0] -= s;
        for (xi, vi) in seg[1..].iter_mut().zip(&v[1..]) {
            *xi -= s * vi;
        }
    }

    /// `Q^T b` in place.
    pub fn apply_qt(&self, b: &mut [f64]) {
        for k in 0..self.tau.len() {
            self.apply_h(k, b);
        }
    }

    /// First `r` columns of `Q`, column-major (`r * n` entries).
    pub fn thin_q(&self, r: usize) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; r * n];
        for j in 0..r {
            let col = &mut q[j * n..(j + 1) * n];
            col[j] = 1.0;
            for k in (0..self.tau.len().min(j + 1)).rev() {
                self.apply_h(k, col);
            }
        }
        q
    }

    /// Squared row norms of the first `rank` columns of `Q`: the leverage
    /// scores of the factored matrix.
    pub fn row_leverage(&self) -> Vec<f64> {
        let n = self.n;
        let q = self.thin_q(self.rank);
        let mut out = vec![0.0; n];
        for col in q.chunks_exact(n.max(1)).take(self.rank) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += x * x;
            }
        }
        out
    }

    /// Least-squares solution of `min ||A x - b||_2`; requires full column rank.
    pub fn solve_least_squares(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, b.len())?;
        if !self.is_full_column_rank() {
            return Err(Error::Degenerate("rank-deficient least-squares system"));
        }
        let mut c = b.to_vec();
        self.apply_qt(&mut c);
        let n = self.n;
        let d = self.d;
        let mut z = vec![0.0; d];
        for k in (0..d).rev() {
            let mut s = c[k];
            for j in k + 1..d {
                s -= self.a[j * n + k] * z[j];
            }
            z[k] = s / self.a[k * n + k];
        }
        let mut x = vec![0.0; d];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        Ok(x)
    }
}

/// Solve the square system `M x = b` via pivoted QR.
pub fn solve_square(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    check_len(m.rows(), m.cols())?;
    Qr::factor(m, true).solve_least_squares(b)
}
