//! Benchmark families: Gaussian designs with optional planted outliers, a
//! coherent variant, and the block construction with biased `+-1` labels
//! that exhibits the `eps^-2` query lower bound.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{check_p, DenseMatrix};
use crate::oracle::RegressionInstance;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum Noise {
    None,
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
}

impl Noise {
    /// Reference magnitude for outliers; 1 when there is no noise.
    pub fn scale(self) -> f64 {
        match self {
            Noise::None => 1.0,
            Noise::Gaussian { sigma } => sigma,
            Noise::Laplace { scale } => scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Design {
    /// I.i.d. standard normal entries.
    Gaussian,
    /// Gaussian with row 0 multiplied by `heavy`, which concentrates
    /// leverage on that row.
    Coherent { heavy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomSpec {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub design: Design,
    pub noise: Noise,
    /// Number of labels replaced by `+-outlier_magnitude * noise.scale()`.
    pub outliers: usize,
    pub outlier_magnitude: f64,
}

impl RandomSpec {
    pub fn new(n: usize, d: usize, p: f64) -> Self {
        Self {
            n,
            d,
            p,
            design: Design::Gaussian,
            noise: Noise::Gaussian { sigma: 1.0 },
            outliers: 0,
            outlier_magnitude: 1e4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: RegressionInstance,
    /// Coefficients of the noiseless signal.
    pub beta0: Vec<f64>,
    /// Rows whose labels were replaced, in increasing order.
    pub outlier_rows: Vec<usize>,
}

fn laplace(rng: &mut SplitMix64, scale: f64) -> f64 {
    let u = rng.next_open01() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// `y = A beta0 + noise` on a Gaussian (or coherent) design, then
/// `spec.outliers` labels are overwritten by `+-M * scale`.
pub fn gen_random(spec: &RandomSpec, seed: u64) -> Result<GeneratedInstance> {
    let RandomSpec { n, d, p, design, noise, outliers, outlier_magnitude } = *spec;
    check_p(p)?;
    if d == 0 || n < d {
        return Err(Error::Degenerate("need n >= d >= 1"));
    }
    if outliers > n {
        return Err(Error::Domain { name: "outliers", value: outliers as f64 });
    }
    let mut rng = SplitMix64::substream(seed, 0);
    let mut a = DenseMatrix::from_fn(n, d, |_, _| rng.normal())?;
    if let Design::Coherent { heavy } = design {
        let mut scale = vec![1.0; n];
        scale[0] = heavy;
        a = a.scale_rows(&scale)?;
    }
    let mut rng = SplitMix64::substream(seed, 1);
    let beta0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut y = a.mul_vec(&beta0)?;
    for v in &mut y {
        *v += match noise {
            Noise::None => 0.0,
            Noise::Gaussian { sigma } => sigma * rng.normal(),
            Noise::Laplace { scale } => laplace(&mut rng, scale),
        };
    }
    // partial Fisher-Yates for the outlier rows
    let mut rng = SplitMix64::substream(seed, 2);
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..outliers {
        let j = k + rng.below((n - k) as u64) as usize;
        order.swap(k, j);
    }
    let mut outlier_rows = order[..outliers].to_vec();
    outlier_rows.sort_unstable();
    let magnitude = outlier_magnitude * noise.scale();
    for &i in &outlier_rows {
        y[i] = if rng.bernoulli(0.5) { magnitude } else { -magnitude };
    }
    Ok(GeneratedInstance {
        instance: RegressionInstance::new(a, y, p)?,
        beta0,
        outlier_rows,
    })
}

/// `d` blocks of `n/d` copies of `e_j`; block `j` has labels in `{+1, -1}`
/// with `Pr[+1] = 1/2 + b_j eps`.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    /// Hidden signs `b_j` in `{+1, -1}`.
    pub b: Vec<f64>,
    pub instance: RegressionInstance,
}

impl LowerBoundInstance {
    pub fn block_len(&self) -> usize {
        self.n / self.d
    }
}

pub fn gen_lower_bound(n: usize, d: usize, eps: f64, b: Option<Vec<f64>>, seed: u64) -> Result<LowerBoundInstance> {
    if d == 0 || n == 0 || n % d != 0 {
        return Err(Error::Precondition("n must be a positive multiple of d"));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Domain { name: "eps", value: eps });
    }
    let b = match b {
        Some(b) => {
            if b.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: b.len() });
            }
            if b.iter().any(|&x| x != 1.0 && x != -1.0) {
                return Err(Error::Precondition("signs must be +1 or -1"));
            }
            b
        }
        None => {
            let mut rng = SplitMix64::substream(seed, 0);
            (0..d).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect()
        }
    };
    let k = n / d;
    let a = DenseMatrix::from_fn(n, d, |i, j| if i / k == j { 1.0 } else { 0.0 })?;
    let mut rng = SplitMix64::substream(seed, 1);
    let y = (0..n)
        .map(|i| {
            let bj = b[i / k];
            if rng.bernoulli(0.5 + bj * eps) { 1.0 } else { -1.0 }
        })
        .collect();
    Ok(LowerBoundInstance {
        n,
        d,
        eps,
        b,
        instance: RegressionInstance::new(a, y, 1.0)?,
    })
}

/// Win rate of the majority vote over `m_queries` labels in the one-block
/// game: the bias sign `alpha` is drawn uniformly, labels are `+1` with
/// probability `1/2 + alpha eps`, and the player guesses `alpha`. Ties (and
/// `m_queries = 0`) are broken by a fair coin.
pub fn sign_recovery_experiment(n_prime: usize, eps: f64, m_queries: usize, trials: usize, seed: u64) -> Result<f64> {
    if m_queries > n_prime {
        return Err(Error::Precondition("cannot query more labels than rows"));
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Domain { name: "eps", value: eps });
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let mut wins = 0usize;
    for t in 0..trials {
        let mut rng = SplitMix64::substream(seed, t as u64);
        let alpha = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        // labels are i.i.d., so the m queried rows are m independent draws
        let q = 0.5 + alpha * eps;
        let mut vote: i64 = 0;
        for _ in 0..m_queries {
            vote += if rng.bernoulli(q) { 1 } else { -1 };
        }
        let guess = match vote.signum() {
            1 => 1.0,
            -1 => -1.0,
            _ => {
                if rng.bernoulli(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        if guess == alpha {
            wins += 1;
        }
    }
    Ok(wins as f64 / trials as f64)
}
