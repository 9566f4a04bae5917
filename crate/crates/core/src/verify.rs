//! Empirical checks of the sampling guarantees: subspace embedding, robust
//! uniform convergence with the `Delta` correction, the sampled cross term
//! and the first-order Taylor remainder bound.
//!
//! Every supremum over `beta` is estimated from below by structured
//! sampling followed by a local pattern search, so a reported violation is
//! never larger than the true one.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::lewis::min_energy_on_hyperplane;
use crate::linalg::{abs_pow, dot, lp_energy, norm2, DenseMatrix};
use crate::rng::SplitMix64;
use crate::sampling::Sketch;
use crate::solvers::kkt_residual;

/// Region of `beta` by the energy `||A (beta - beta*)||_p^p` relative to
/// `L(beta*)`: below 3, between 3 and `25 / (eps delta)`, or beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Regime {
    Near,
    Intermediate,
    Far,
}

/// How the `beta` sample of [`ruc_check`] is laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BetaSample {
    /// Random directions around `beta*`.
    pub directions: usize,
    /// Log-spaced radii per direction.
    pub radii: usize,
    /// Smallest and largest `||A (beta - beta*)||_p^p / L(beta*)` as a
    /// multiple of the far-regime threshold `25 / (eps delta)`.
    pub span: (f64, f64),
    /// Pattern-search iterations started from the worst sampled point.
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for BetaSample {
    fn default() -> Self {
        Self {
            directions: 40,
            radii: 25,
            span: (1e-6, 10.0),
            ascent_steps: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RucReport {
    pub eps_target: f64,
    pub trials: usize,
    pub betas_per_trial: usize,
    /// `Delta = L(beta*) - L~(beta*)` per trial.
    pub delta_value: Vec<f64>,
    /// `sup |[L~(beta) - L~(beta*)] - [L(beta) - L(beta*)]| / L(beta)` per trial.
    pub max_rel_violation: Vec<f64>,
    /// `sup |L~(beta) - L(beta)| / L(beta)` per trial, without the correction.
    pub max_uncorrected: Vec<f64>,
    pub worst_regime: Vec<Regime>,
    /// Largest relative gap between the two sides of the `Delta` identity.
    pub identity_error: f64,
    /// Fraction of trials with corrected violation `<= eps`.
    pub pass_fraction: f64,
    /// Fraction of trials with uncorrected error `> eps`.
    pub uncorrected_exceed_fraction: f64,
}

/// Seed-independent part of a robust-uniform-convergence check: the
/// `beta` sample and the full-data losses on it.
#[derive(Debug, Clone)]
pub struct RucProbe<'a> {
    a: &'a DenseMatrix,
    y: &'a [f64],
    p: f64,
    beta_star: Vec<f64>,
    l_star: f64,
    far: f64,
    betas: Vec<Vec<f64>>,
    regimes: Vec<Regime>,
    full: Vec<f64>,
    ascent_steps: usize,
}

impl<'a> RucProbe<'a> {
    /// `y` is the full label vector; `beta_star` the full-data minimizer.
    pub fn new(
        a: &'a DenseMatrix,
        y: &'a [f64],
        beta_star: &[f64],
        p: f64,
        eps: f64,
        delta: f64,
        sample: BetaSample,
    ) -> Result<Self> {
        check_len(a.rows(), y.len())?;
        check_len(a.cols(), beta_star.len())?;
        crate::linalg::check_p(p)?;
        let d = a.cols();
        let base = a.mul_vec(beta_star)?;
        let r_star: Vec<f64> = base.iter().zip(y).map(|(f, v)| f - v).collect();
        let l_star = lp_energy(&r_star, p);
        if !(l_star > 0.0) {
            return Err(Error::Degenerate("relative error is undefined when L(beta*) = 0"));
        }
        let far = 25.0 / (eps * delta);
        let (lo, hi) = sample.span;
        let mut rng = SplitMix64::new(sample.seed);
        let mut betas = Vec::with_capacity(sample.directions * sample.radii + 1);
        let mut regimes = Vec::with_capacity(betas.capacity());
        betas.push(beta_star.to_vec());
        regimes.push(Regime::Near);
        for _ in 0..sample.directions {
            let u = rng.unit_vector(d);
            let energy = lp_energy(&a.mul_vec(&u)?, p);
            if energy == 0.0 {
                continue;
            }
            for k in 0..sample.radii {
                let frac = if sample.radii == 1 { 0.0 } else { k as f64 / (sample.radii - 1) as f64 };
                // target energy ratio, log-spaced over [lo, hi] * far
                let ratio = far * lo * (hi / lo).powf(frac);
                let r = (ratio * l_star / energy).powf(1.0 / p);
                betas.push(beta_star.iter().zip(&u).map(|(b, ui)| b + r * ui).collect());
                regimes.push(regime(ratio, far));
            }
        }
        let full = betas
            .iter()
            .map(|b| full_loss(a, y, b, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            a,
            y,
            p,
            beta_star: beta_star.to_vec(),
            l_star,
            far,
            betas,
            regimes,
            full,
            ascent_steps: sample.ascent_steps,
        })
    }

    pub fn l_star(&self) -> f64 {
        self.l_star
    }

    pub fn betas(&self) -> usize {
        self.betas.len()
    }

    fn sketched(&self, sketch: &Sketch, beta: &[f64]) -> f64 {
        sketch
            .entries
            .iter()
            .map(|&(i, s)| s * abs_pow(dot(self.a.row(i), beta) - self.y[i], self.p))
            .sum()
    }

    /// Corrected and uncorrected errors of one sketch.
    pub fn evaluate(&self, sketch: &Sketch) -> Result<RucTrial> {
        if let Some(&(i, _)) = sketch.entries.last() {
            if i >= self.a.rows() {
                return Err(Error::IndexOutOfRange { index: i, len: self.a.rows() });
            }
        }
        let lt_star = self.sketched(sketch, &self.beta_star);
        let delta = self.l_star - lt_star;
        let mut trial = RucTrial {
            delta,
            max_violation: 0.0,
            max_uncorrected: 0.0,
            worst_regime: Regime::Near,
            identity_error: 0.0,
        };
        let mut worst = 0;
        for (k, (beta, &l)) in self.betas.iter().zip(&self.full).enumerate() {
            let lt = self.sketched(sketch, beta);
            let lhs = (lt - lt_star) - (l - self.l_star);
            let rhs = (lt - l) + delta;
            let scale = l.max(lt.abs()).max(self.l_star).max(lt_star);
            trial.identity_error = trial.identity_error.max((lhs - rhs).abs() / scale);
            let v = lhs.abs() / l;
            if v > trial.max_violation {
                trial.max_violation = v;
                trial.worst_regime = self.regimes[k];
                worst = k;
            }
            trial.max_uncorrected = trial.max_uncorrected.max((lt - l).abs() / l);
        }
        if self.ascent_steps > 0 && worst > 0 {
            let start = self.betas[worst].clone();
            let violation = |b: &[f64]| -> f64 {
                let l = full_loss(self.a, self.y, b, self.p).unwrap_or(f64::INFINITY);
                let lt = self.sketched(sketch, b);
                ((lt - lt_star) - (l - self.l_star)).abs() / l
            };
            let (beta, v) = pattern_search(start, trial.max_violation, self.ascent_steps, violation);
            if v > trial.max_violation {
                trial.max_violation = v;
                let diff: Vec<f64> = beta.iter().zip(&self.beta_star).map(|(b, s)| b - s).collect();
                let e = lp_energy(&self.a.mul_vec(&diff)?, self.p);
                trial.worst_regime = regime(e / self.l_star, self.far);
            }
        }
        Ok(trial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RucTrial {
    pub delta: f64,
    pub max_violation: f64,
    pub max_uncorrected: f64,
    pub worst_regime: Regime,
    pub identity_error: f64,
}

fn regime(ratio: f64, far: f64) -> Regime {
    if ratio < 3.0 {
        Regime::Near
    } else if ratio < far {
        Regime::Intermediate
    } else {
        Regime::Far
    }
}

fn full_loss(a: &DenseMatrix, y: &[f64], beta: &[f64], p: f64) -> Result<f64> {
    Ok(a.row_iter().zip(y).map(|(r, v)| abs_pow(dot(r, beta) - v, p)).sum())
}

// Coordinate pattern search maximizing `f`, starting at `x` with value `fx`.
fn pattern_search(mut x: Vec<f64>, mut fx: f64, steps: usize, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut h = 0.1 * norm2(&x).max(1e-12);
    for _ in 0..steps {
        let mut moved = false;
        for j in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[j] += sign * h;
                let v = f(&cand);
                if v > fx {
                    x = cand;
                    fx = v;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (x, fx)
}

/// Robust uniform convergence over a batch of sketches of the same
/// instance. `y` holds every label (harness side only) and `beta_star`
/// the full-data minimizer.
#[allow(clippy::too_many_arguments)]
pub fn ruc_check(
    a: &DenseMatrix,
    y: &[f64],
    p: f64,
    sketches: &[Sketch],
    beta_star: &[f64],
    sample: BetaSample,
    eps: f64,
    delta: f64,
) -> Result<RucReport> {
    let probe = RucProbe::new(a, y, beta_star, p, eps, delta, sample)?;
    let trials = sketches
        .iter()
        .map(|s| probe.evaluate(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_ruc(eps, probe.betas(), &trials))
}

/// Aggregates per-trial results into a [`RucReport`].
pub fn summarize_ruc(eps: f64, betas_per_trial: usize, trials: &[RucTrial]) -> RucReport {
    let n = trials.len();
    let frac = |k: usize| if n == 0 { 1.0 } else { k as f64 / n as f64 };
    RucReport {
        eps_target: eps,
        trials: n,
        betas_per_trial,
        delta_value: trials.iter().map(|t| t.delta).collect(),
        max_rel_violation: trials.iter().map(|t| t.max_violation).collect(),
        max_uncorrected: trials.iter().map(|t| t.max_uncorrected).collect(),
        worst_regime: trials.iter().map(|t| t.worst_regime).collect(),
        identity_error: trials.iter().map(|t| t.identity_error).fold(0.0, f64::max),
        pass_fraction: frac(trials.iter().filter(|t| t.max_violation <= eps).count()),
        uncorrected_exceed_fraction: frac(trials.iter().filter(|t| t.max_uncorrected > eps).count()),
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EmbedReport {
    pub p: f64,
    pub directions: usize,
    /// `max |‖SA beta‖_p^p / ‖A beta‖_p^p - 1|` found.
    pub max_ratio_dev: f64,
    pub pass: bool,
}

/// Searches for the unit `beta` that distorts `‖A beta‖_p^p` most under
/// the sketch: random directions, the coordinate axes, then a pattern
/// search from the three worst.
pub fn embedding_check(a: &DenseMatrix, sketch: &Sketch, p: f64, eps: f64, directions: usize, seed: u64) -> Result<EmbedReport> {
    crate::linalg::check_p(p)?;
    let d = a.cols();
    let s = sketch.dense_weights(a.rows())?;
    let dev = |beta: &[f64]| -> f64 {
        let mut full = 0.0;
        let mut sk = 0.0;
        for (r, &si) in a.row_iter().zip(&s) {
            let e = abs_pow(dot(r, beta), p);
            full += e;
            sk += si * e;
        }
        if full == 0.0 {
            0.0
        } else {
            (sk / full - 1.0).abs()
        }
    };
    let mut rng = SplitMix64::new(seed);
    let mut probes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(directions + d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        probes.push((dev(&e), e));
    }
    for _ in 0..directions {
        let u = rng.unit_vector(d);
        probes.push((dev(&u), u));
    }
    probes.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = probes.first().map_or(0.0, |p| p.0);
    for (v, u) in probes.into_iter().take(3) {
        best = best.max(pattern_search(u, v, 40, dev).1);
    }
    Ok(EmbedReport {
        p,
        directions,
        max_ratio_dev: best,
        pass: best <= eps,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CrossTermReport {
    pub p: f64,
    /// First-order optimality gap of `y_centered` at `beta = 0`.
    pub optimality_gap: f64,
    /// `sup_beta g^T beta / (‖A beta‖_p ‖y‖_p^(p-1))` with
    /// `g = sum_i s_i p |y_i|^(p-1) sign(y_i) a_i`.
    pub max_ratio: f64,
    /// The same supremum restricted to the random `beta` sample.
    pub sampled_max: f64,
    pub betas: usize,
}

impl CrossTermReport {
    /// `max_ratio / sqrt(gamma d^(2/p) / (delta m))`: the constant implied
    /// by this sketch.
    pub fn implied_constant(&self, d: usize, gamma: f64, delta: f64, m: f64) -> f64 {
        self.max_ratio / (gamma * (d as f64).powf(2.0 / self.p) / (delta * m)).sqrt()
    }
}

/// The sampled first-order term at the full-data optimum. The supremum is
/// taken exactly as `1 / min{‖A beta‖_p : g^T beta = 1}`; `betas` random
/// directions are also reported as a sanity check.
pub fn cross_term_check(
    a: &DenseMatrix,
    y_centered: &[f64],
    sketch: &Sketch,
    p: f64,
    betas: usize,
    seed: u64,
) -> Result<CrossTermReport> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Domain { name: "p", value: p });
    }
    check_len(a.rows(), y_centered.len())?;
    let zero = vec![0.0; a.cols()];
    let ones = vec![1.0; a.rows()];
    let optimality_gap = kkt_residual(a, y_centered, &ones, &zero, p)?;
    if !(optimality_gap <= 1e-6) {
        return Err(Error::Precondition("y_centered is not optimal at beta = 0"));
    }
    let s = sketch.dense_weights(a.rows())?;
    let mut g = vec![0.0; a.cols()];
    for ((r, &yi), &si) in a.row_iter().zip(y_centered).zip(&s) {
        if si > 0.0 && yi != 0.0 {
            let c = si * p * yi.signum() * abs_pow(yi, p - 1.0);
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj += c * rj;
            }
        }
    }
    let y_norm = lp_energy(y_centered, p).powf(1.0 / p);
    let denom_y = y_norm.powf(p - 1.0);
    let ratio = |beta: &[f64]| -> f64 {
        let e = lp_energy(&a.mul_vec(beta).unwrap_or_default(), p).powf(1.0 / p);
        if e == 0.0 {
            0.0
        } else {
            dot(&g, beta).abs() / (e * denom_y)
        }
    };
    let mut rng = SplitMix64::new(seed);
    let mut sampled_max: f64 = 0.0;
    for _ in 0..betas {
        sampled_max = sampled_max.max(ratio(&rng.unit_vector(a.cols())));
    }
    let exact = if norm2(&g) == 0.0 {
        0.0
    } else if a.cols() == 1 {
        ratio(&[1.0])
    } else {
        min_energy_on_hyperplane(a, &g, p).map_or(0.0, |b| ratio(&b))
    };
    Ok(CrossTermReport {
        p,
        optimality_gap,
        max_ratio: exact.max(sampled_max),
        sampled_max,
        betas,
    })
}

/// `|a - b|^p - |a|^p + p |a|^(p-1) sign(a) b`, accurate when `|b| << |a|`.
pub fn taylor_remainder(a: f64, b: f64, p: f64) -> f64 {
    if a == 0.0 {
        return abs_pow(b, p);
    }
    // f(a, b) = |a|^p g(b/a) with g(t) = |1 - t|^p - 1 + p t
    let t = b / a;
    abs_pow(a, p) * taylor_g(t, p)
}

fn taylor_g(t: f64, p: f64) -> f64 {
    if t.abs() < 0.125 {
        // sum_{k>=2} binom(p, k) (-t)^k
        let mut coef = p;
        let mut pow = -t;
        let mut sum = 0.0;
        for k in 2..40 {
            coef *= (p - (k - 1) as f64) / k as f64;
            pow *= -t;
            let term = coef * pow;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        abs_pow(1.0 - t, p) - 1.0 + p * t
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TaylorReport {
    pub p: f64,
    pub samples: usize,
    /// `sup |remainder| / |b|^p` over all pairs.
    pub sup_ratio: f64,
    /// The supremum within `|b| < |a|/2`, `|a|/2 <= |b| <= 2|a|`, `|b| > 2|a|`.
    pub regime_sup: [f64; 3],
    pub argmax: (f64, f64),
    pub finite: bool,
}

/// Random pairs with `log10 |a|, log10 |b|` uniform on `[-6, 6]` and random
/// signs, so all three size regimes are well populated.
pub fn taylor_claim_check(p: f64, samples: usize, seed: u64) -> Result<TaylorReport> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Domain { name: "p", value: p });
    }
    let mut rng = SplitMix64::new(seed);
    let draw = |rng: &mut SplitMix64| {
        let mag = 10f64.powf(12.0 * rng.next_f64() - 6.0);
        if rng.bernoulli(0.5) { mag } else { -mag }
    };
    let mut report = TaylorReport {
        p,
        samples,
        sup_ratio: 0.0,
        regime_sup: [0.0; 3],
        argmax: (0.0, 0.0),
        finite: true,
    };
    for _ in 0..samples {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let ratio = taylor_g(b / a, p).abs() / abs_pow(b / a, p);
        if !ratio.is_finite() {
            report.finite = false;
            continue;
        }
        let k = if b.abs() < a.abs() / 2.0 {
            0
        } else if b.abs() <= 2.0 * a.abs() {
            1
        } else {
            2
        };
        report.regime_sup[k] = report.regime_sup[k].max(ratio);
        if ratio > report.sup_ratio {
            report.sup_ratio = ratio;
            report.argmax = (a, b);
        }
    }
    Ok(report)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_len(xs.len(), ys.len())?;
    if xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Precondition("need two or more positive points"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("x values are all equal"));
    }
    Ok(sxy / sxx)
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) })
}
