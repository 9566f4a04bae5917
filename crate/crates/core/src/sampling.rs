//! Label-oblivious sampling plans and their realization into sparse row
//! reweightings `s`.
//!
//! No function here accepts labels: a plan is a function of the design
//! weights and the accuracy parameters only.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::linalg::{abs_pow, dot, DenseMatrix};
use crate::rng::{mix64, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Scheme {
    BernoulliL1,
    PoissonLp,
    Uniform,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BernoulliL1 => "bernoulli-l1",
            Scheme::PoissonLp => "poisson-lp",
            Scheme::Uniform => "uniform",
        }
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli-l1" => Ok(Scheme::BernoulliL1),
            "poisson-lp" => Ok(Scheme::PoissonLp),
            "uniform" => Ok(Scheme::Uniform),
            _ => Err(Error::Precondition("unknown sampling scheme")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplePlan {
    pub scheme: Scheme,
    pub n: usize,
    /// Inclusion probability `p_i` (bernoulli, uniform) or Poisson rate
    /// `lambda_i` (poisson).
    pub params: Vec<f64>,
    /// Oversampling threshold (bernoulli only).
    pub u: Option<f64>,
    /// Target budget (poisson, uniform).
    pub m: Option<f64>,
    pub gamma: f64,
}

impl SamplePlan {
    /// Expected number of distinct sampled rows.
    pub fn expected_support(&self) -> f64 {
        match self.scheme {
            Scheme::BernoulliL1 | Scheme::Uniform => self.params.iter().sum(),
            Scheme::PoissonLp => self.params.iter().map(|&l| -(-l).exp_m1()).sum(),
        }
    }

    /// `Pr[s_i > 0]`.
    pub fn inclusion_probability(&self, i: usize) -> f64 {
        let x = self.params[i];
        match self.scheme {
            Scheme::PoissonLp => -(-x).exp_m1(),
            _ => x,
        }
    }

    /// 64-bit FNV-1a digest of the plan contents.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::new();
        h.bytes(self.scheme.name().as_bytes());
        h.u64(self.n as u64);
        for x in &self.params {
            h.u64(x.to_bits());
        }
        h.u64(self.u.map_or(u64::MAX, f64::to_bits));
        h.u64(self.m.map_or(u64::MAX, f64::to_bits));
        h.u64(self.gamma.to_bits());
        h.0
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn bytes(&mut self, b: &[u8]) {
        for &x in b {
            self.0 ^= x as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn u64(&mut self, x: u64) {
        self.bytes(&x.to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sketch {
    /// `(row, s_i)` with strictly increasing rows and `s_i > 0`.
    pub entries: Vec<(usize, f64)>,
    pub seed: u64,
    pub plan_hash: u64,
}

impl Sketch {
    /// The trivial sketch `s = 1` on all `n` rows.
    pub fn identity(n: usize) -> Self {
        Sketch {
            entries: (0..n).map(|i| (i, 1.0)).collect(),
            seed: 0,
            plan_hash: 0,
        }
    }

    /// Builds a sketch from explicit entries, validating the invariants.
    pub fn from_entries(entries: Vec<(usize, f64)>, seed: u64, plan_hash: u64) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Precondition("sketch rows must be strictly increasing"));
            }
        }
        if entries.iter().any(|&(_, s)| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Precondition("sketch weights must be positive and finite"));
        }
        Ok(Sketch { entries, seed, plan_hash })
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn indices(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    /// Dense weight vector of length `n` (zero off the support).
    pub fn dense_weights(&self, n: usize) -> Result<Vec<f64>> {
        let mut s = vec![0.0; n];
        for &(i, w) in &self.entries {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            s[i] = w;
        }
        Ok(s)
    }
}

fn check_unit_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { name, value })
    }
}

fn check_weights(w_prime: &[f64], gamma: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Domain { name: "gamma", value: gamma });
    }
    if let Some(&bad) = w_prime.iter().find(|&&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain { name: "w_prime", value: bad });
    }
    Ok(())
}

/// Threshold `u = c_u eps^2 / ln(gamma d / (delta eps))` of the `l1` scheme.
pub fn default_u(gamma: f64, eps: f64, delta: f64, d: usize, c_u: f64) -> f64 {
    c_u * eps * eps / (gamma * d as f64 / (delta * eps)).ln()
}

/// Budget `c_m (gamma d^2 ln(d/(eps delta)) / eps^2 + gamma d^(2/p) / (eps^2 delta))`
/// of the `l_p` scheme.
pub fn default_m(gamma: f64, eps: f64, delta: f64, d: usize, p: f64, c_m: f64) -> f64 {
    let d = d as f64;
    let e2 = eps * eps;
    c_m * (gamma * d * d * (d / (eps * delta)).ln() / e2 + gamma * d.powf(2.0 / p) / (e2 * delta))
}

/// Bernoulli plan for `l1`: row `i` is kept with probability
/// `p_i = min(gamma w'_i / u, 1)` and reweighted by `1 / p_i`.
pub fn plan_l1(
    w_prime: &[f64],
    gamma: f64,
    eps: f64,
    delta: f64,
    d: usize,
    u_override: Option<f64>,
    c_u: f64,
) -> Result<SamplePlan> {
    check_weights(w_prime, gamma)?;
    check_unit_open("eps", eps)?;
    check_unit_open("delta", delta)?;
    let u = match u_override {
        Some(u) => u,
        None => default_u(gamma, eps, delta, d, c_u),
    };
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::Domain { name: "u", value: u });
    }
    let params = w_prime.iter().map(|&w| (gamma * w / u).min(1.0)).collect();
    Ok(SamplePlan {
        scheme: Scheme::BernoulliL1,
        n: w_prime.len(),
        params,
        u: Some(u),
        m: None,
        gamma,
    })
}

/// Poisson plan for `l_p`: `k_i ~ Poisson(lambda_i)` with
/// `lambda_i = m w'_i / d`, and `s_i = k_i / lambda_i`.
#[allow(clippy::too_many_arguments)]
pub fn plan_lp(
    w_prime: &[f64],
    gamma: f64,
    eps: f64,
    delta: f64,
    d: usize,
    p: f64,
    m_override: Option<f64>,
    c_m: f64,
) -> Result<SamplePlan> {
    check_weights(w_prime, gamma)?;
    check_unit_open("eps", eps)?;
    check_unit_open("delta", delta)?;
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::Domain { name: "p", value: p });
    }
    let m = match m_override {
        Some(m) => m,
        None => default_m(gamma, eps, delta, d, p, c_m),
    };
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Domain { name: "m", value: m });
    }
    let params = w_prime.iter().map(|&w| m * w / d as f64).collect();
    Ok(SamplePlan {
        scheme: Scheme::PoissonLp,
        n: w_prime.len(),
        params,
        u: None,
        m: Some(m),
        gamma,
    })
}

/// Uniform baseline: `m` rows without replacement, each reweighted by `n / m`.
pub fn plan_uniform(n: usize, m: usize) -> Result<SamplePlan> {
    if m == 0 || m > n {
        return Err(Error::Domain { name: "m", value: m as f64 });
    }
    Ok(SamplePlan {
        scheme: Scheme::Uniform,
        n,
        params: vec![m as f64 / n as f64; n],
        u: None,
        m: Some(m as f64),
        gamma: 1.0,
    })
}

/// Draws `s` from the plan. Row `i` consumes only the substream `i` of
/// `seed`, so the result does not depend on evaluation order.
pub fn realize(plan: &SamplePlan, seed: u64) -> Sketch {
    let mut entries = Vec::new();
    match plan.scheme {
        Scheme::BernoulliL1 => {
            for (i, &pi) in plan.params.iter().enumerate() {
                if pi >= 1.0 {
                    entries.push((i, 1.0));
                } else if pi > 0.0 && SplitMix64::substream(seed, i as u64).next_f64() < pi {
                    entries.push((i, 1.0 / pi));
                }
            }
        }
        Scheme::PoissonLp => {
            for (i, &lambda) in plan.params.iter().enumerate() {
                if lambda > 0.0 {
                    let k = SplitMix64::substream(seed, i as u64).poisson(lambda);
                    if k > 0 {
                        entries.push((i, k as f64 / lambda));
                    }
                }
            }
        }
        Scheme::Uniform => {
            // the m rows with the smallest per-row keys form a uniform m-subset
            let m = plan.m.unwrap_or(0.0) as usize;
            let mut keys: Vec<(u64, usize)> = (0..plan.n)
                .map(|i| (SplitMix64::substream(seed, i as u64).next_u64(), i))
                .collect();
            if m < keys.len() {
                keys.select_nth_unstable(m);
                keys.truncate(m);
            }
            let mut rows: Vec<usize> = keys.into_iter().map(|k| k.1).collect();
            rows.sort_unstable();
            let s = plan.n as f64 / m as f64;
            entries = rows.into_iter().map(|i| (i, s)).collect();
        }
    }
    Sketch {
        entries,
        seed,
        plan_hash: plan.digest(),
    }
}

/// `mu + sqrt(2 mu ln(2/delta)) + ln(2/delta)` rounded up, with `mu` the
/// expected support. The realized support exceeds it with probability at
/// most `delta`.
pub fn support_size_bound(plan: &SamplePlan, delta: f64) -> Result<usize> {
    check_unit_open("delta", delta)?;
    Ok(support_tail(plan.expected_support(), delta).ceil() as usize)
}

pub(crate) fn support_tail(mu: f64, delta: f64) -> f64 {
    let l = (2.0 / delta).ln();
    mu + (2.0 * mu * l).sqrt() + l
}

/// `sum_i s_i |a_i^T beta - y_i|^p` over the sketch support. `y` is read
/// only on the support.
pub fn sketched_loss(a: &DenseMatrix, y: &[f64], beta: &[f64], sketch: &Sketch, p: f64) -> Result<f64> {
    check_len(a.rows(), y.len())?;
    check_len(a.cols(), beta.len())?;
    let mut total = 0.0;
    for &(i, s) in &sketch.entries {
        if i >= a.rows() {
            return Err(Error::IndexOutOfRange { index: i, len: a.rows() });
        }
        total += s * abs_pow(dot(a.row(i), beta) - y[i], p);
    }
    Ok(total)
}

/// Seed of trial `t` in a batch keyed by `seed`.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    mix64(seed.wrapping_add(mix64(t ^ 0x7472_6961_6c00_0000)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_plan_arithmetic() {
        let w = vec![0.02; 100];
        let plan = plan_l1(&w, 1.0, 0.25, 0.1, 2, Some(1.0), 1.0).unwrap();
        assert!(plan.params.iter().all(|&p| (p - 0.02).abs() < 1e-15));

        let plan = plan_l1(&w, 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        assert!(plan.params.iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert!((plan.expected_support() - 20.0).abs() < 1e-12);
        assert!(plan.expected_support() <= plan.gamma * plan.gamma * 2.0 / 0.1 + 1e-12);

        let mut w2 = w.clone();
        w2[5] = 0.5;
        let plan = plan_l1(&w2, 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        assert_eq!(plan.params[5], 1.0);
        for seed in 0..20 {
            let sk = realize(&plan, seed);
            assert!(sk.entries.contains(&(5, 1.0)));
        }
        assert!(plan_l1(&w, 1.0, 0.25, 0.1, 2, Some(0.0), 1.0).is_err());
        assert!(plan_l1(&w, 0.5, 0.25, 0.1, 2, None, 1.0).is_err());
    }

    #[test]
    fn default_u_formula() {
        let u = default_u(1.0, 0.25, 0.1, 5, 2.0);
        let expect = 2.0 * 0.0625 / (5.0f64 / 0.025).ln();
        assert!((u - expect).abs() < 1e-15);
    }

    #[test]
    fn lp_plan_rates() {
        let n = 50;
        let d = 5;
        let w = vec![d as f64 / n as f64; n];
        let plan = plan_lp(&w, 1.0, 0.3, 0.1, d, 1.5, Some(400.0), 1.0).unwrap();
        assert!(plan.params.iter().all(|&l| (l - 8.0).abs() < 1e-12));
        assert!((plan.inclusion_probability(0) - (1.0 - (-8.0f64).exp())).abs() < 1e-15);
        assert!(plan_lp(&w, 1.0, 0.3, 0.1, d, 1.0, Some(1.0), 1.0).is_err());
        assert!(plan_lp(&w, 1.0, 0.3, 0.1, d, 1.5, Some(-1.0), 1.0).is_err());
        let m = default_m(1.0, 0.3, 0.1, 6, 1.5, 1.0);
        let expect = 36.0 * (6.0f64 / 0.03).ln() / 0.09 + 6.0f64.powf(4.0 / 3.0) / 0.009;
        assert!((m - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn full_inclusion_is_identity() {
        let plan = plan_l1(&[0.5; 4], 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        let sk = realize(&plan, 7);
        assert_eq!(sk.entries, Sketch::identity(4).entries);
    }

    #[test]
    fn realize_is_deterministic() {
        let w: Vec<f64> = (0..300).map(|i| 0.001 + (i % 7) as f64 * 0.003).collect();
        for plan in [
            plan_l1(&w, 1.0, 0.25, 0.1, 3, Some(0.05), 1.0).unwrap(),
            plan_lp(&w, 1.0, 0.25, 0.1, 3, 1.5, Some(200.0), 1.0).unwrap(),
            plan_uniform(300, 40).unwrap(),
        ] {
            let a = realize(&plan, 42);
            let b = realize(&plan, 42);
            assert_eq!(a, b);
            assert_ne!(realize(&plan, 43).entries, a.entries);
            assert!(a.entries.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(a.entries.iter().all(|e| e.1 > 0.0));
        }
    }

    #[test]
    fn uniform_picks_exactly_m() {
        let plan = plan_uniform(100, 13).unwrap();
        for seed in 0..10 {
            let sk = realize(&plan, seed);
            assert_eq!(sk.support_size(), 13);
            assert!(sk.entries.iter().all(|e| (e.1 - 100.0 / 13.0).abs() < 1e-12));
        }
        assert!(plan_uniform(10, 11).is_err());
    }

    #[test]
    fn mean_support_size() {
        let plan = plan_l1(&[0.02; 100], 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        let trials = 100_000;
        let total: usize = (0..trials).map(|t| realize(&plan, t).support_size()).sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 20.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn support_bound_arithmetic_and_coverage() {
        let plan = plan_l1(&[0.02; 100], 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        let raw = 20.0 + (40.0 * 20.0f64.ln()).sqrt() + 20.0f64.ln();
        assert!((support_tail(20.0, 0.1) - raw).abs() < 1e-12);
        let bound = support_size_bound(&plan, 0.1).unwrap();
        assert_eq!(bound, raw.ceil() as usize);
        let exceed = (0..10_000).filter(|&t| realize(&plan, t).support_size() > bound).count();
        assert!(exceed <= 1000, "{exceed}");

        let all = plan_l1(&[1.0; 30], 1.0, 0.25, 0.1, 2, Some(0.1), 1.0).unwrap();
        assert!(support_size_bound(&all, 0.1).unwrap() >= 30);
        assert_eq!(realize(&all, 0).support_size(), 30);
    }

    #[test]
    fn unbiased_weights() {
        // E[s_i] = 1 for every row under every scheme
        let w: Vec<f64> = (0..20).map(|i| 0.01 + 0.01 * i as f64).collect();
        let plans = [
            plan_l1(&w, 1.0, 0.25, 0.1, 2, Some(0.4), 1.0).unwrap(),
            plan_lp(&w, 1.0, 0.25, 0.1, 2, 1.5, Some(10.0), 1.0).unwrap(),
            plan_uniform(20, 6).unwrap(),
        ];
        let trials = 40_000;
        for plan in &plans {
            let mut sum = [0.0; 20];
            let mut sq = [0.0; 20];
            for t in 0..trials {
                let s = realize(plan, t).dense_weights(20).unwrap();
                for i in 0..20 {
                    sum[i] += s[i];
                    sq[i] += s[i] * s[i];
                }
            }
            for i in 0..20 {
                let mean = sum[i] / trials as f64;
                let var = sq[i] / trials as f64 - mean * mean;
                let se = (var / trials as f64).sqrt();
                assert!((mean - 1.0).abs() <= 4.0 * se + 1e-12, "{:?} row {i}: {mean}", plan.scheme);
            }
        }
    }

    #[test]
    fn poisson_inclusion_frequency() {
        let plan = plan_lp(&[0.3, 1.0], 1.0, 0.25, 0.1, 1, 2.0, Some(2.0), 1.0).unwrap();
        let trials = 50_000;
        let hits = (0..trials)
            .filter(|&t| realize(&plan, t).indices().any(|i| i == 0))
            .count() as f64;
        let expect = 1.0 - (-0.6f64).exp();
        let se = (expect * (1.0 - expect) / trials as f64).sqrt();
        assert!((hits / trials as f64 - expect).abs() < 4.0 * se);
    }

    #[test]
    fn digest_tracks_contents() {
        let a = plan_uniform(10, 3).unwrap();
        let b = plan_uniform(10, 4).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn sketch_validation() {
        assert!(Sketch::from_entries(vec![(1, 1.0), (1, 2.0)], 0, 0).is_err());
        assert!(Sketch::from_entries(vec![(1, 0.0)], 0, 0).is_err());
        let sk = Sketch::from_entries(vec![(0, 2.0), (3, 1.5)], 0, 0).unwrap();
        assert_eq!(sk.dense_weights(4).unwrap(), vec![2.0, 0.0, 0.0, 1.5]);
        assert!(sk.dense_weights(3).is_err());
    }
}
