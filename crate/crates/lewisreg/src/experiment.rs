//! Seeded end-to-end experiments: generate an instance, plan from its Lewis
//! weights, and run `active_solve` once per trial.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lewisreg_core::instances::{gen_lower_bound, gen_random, Design, Noise, RandomSpec};
use lewisreg_core::lewis::lewis_weights;
use lewisreg_core::linalg::lp_loss;
use lewisreg_core::oracle::{active_solve, RegressionInstance};
use lewisreg_core::sampling::{plan_l1, plan_lp, plan_uniform, support_size_bound, trial_seed, SamplePlan, Scheme};
use lewisreg_core::solvers::{approx_transfer_bound, solve_weighted, SolveStatus, SolverOptions};
use lewisreg_core::verify::median;

use crate::{Error, TOOL_VERSION};

pub const REPORT_SCHEMA: &str = "lewisreg.experiment/1";

/// Failure probability used for the default query budget.
const BUDGET_DELTA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Gaussian design, Gaussian noise.
    Gaussian,
    /// Gaussian design and noise, one label replaced by a large outlier.
    Outlier,
    /// Gaussian design with one heavy row.
    Coherent,
    /// Blocks of basis rows with biased +-1 labels.
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub c_u: f64,
    #[serde(default = "one")]
    pub c_m: f64,
    /// Overrides the threshold `u` of the bernoulli scheme.
    #[serde(default)]
    pub u: Option<f64>,
    /// Overrides the budget `m` of the poisson and uniform schemes.
    #[serde(default)]
    pub m: Option<f64>,
    /// Query budget per trial; defaults to the support bound at `1e-6`.
    #[serde(default)]
    pub budget: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_magnitude")]
    pub outlier_magnitude: f64,
    /// Label bias of the lower-bound family.
    #[serde(default = "default_bias")]
    pub bias: f64,
    /// Fraction of trials that must meet the loss-ratio bound.
    #[serde(default = "default_required")]
    pub required_pass_fraction: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_magnitude() -> f64 {
    1e4
}
fn default_bias() -> f64 {
    0.1
}
fn default_required() -> f64 {
    0.9
}

impl ExperimentConfig {
    pub fn new(family: Family, n: usize, d: usize, p: f64, scheme: Scheme) -> Self {
        Self {
            family,
            n,
            d,
            p,
            eps: 0.25,
            delta: 0.1,
            scheme,
            c_u: 1.0,
            c_m: 1.0,
            u: None,
            m: None,
            budget: None,
            trials: 10,
            seed: 0,
            noise_sigma: default_sigma(),
            outlier_magnitude: default_magnitude(),
            bias: default_bias(),
            required_pass_fraction: default_required(),
            output: None,
        }
    }

    /// Named configurations; `l1-accept` and `lp-accept` are the end-to-end
    /// acceptance experiments, `smoke` a seconds-long sanity run.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "l1-accept" => Some(Self {
                trials: 100,
                seed: 20_240_001,
                ..Self::new(Family::Outlier, 20_000, 10, 1.0, Scheme::BernoulliL1)
            }),
            "lp-accept" => Some(Self {
                eps: 0.3,
                c_m: 0.1,
                trials: 100,
                seed: 20_240_002,
                required_pass_fraction: 0.85,
                ..Self::new(Family::Gaussian, 20_000, 6, 1.5, Scheme::PoissonLp)
            }),
            "smoke" => Some(Self {
                trials: 5,
                seed: 7,
                ..Self::new(Family::Outlier, 2_000, 4, 1.0, Scheme::BernoulliL1)
            }),
            _ => None,
        }
    }

    pub const PRESETS: &'static [&'static str] = &["l1-accept", "lp-accept", "smoke"];

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Config(msg));
        let open01 = |x: f64| x > 0.0 && x < 1.0;
        if self.d == 0 || self.n < self.d {
            return bad(format!("need n >= d >= 1, got n = {}, d = {}", self.n, self.d));
        }
        if !(1.0..=2.0).contains(&self.p) {
            return bad(format!("p = {} outside [1, 2]", self.p));
        }
        if !open01(self.eps) || !open01(self.delta) {
            return bad("eps and delta must lie in (0, 1)".into());
        }
        if !(self.c_u > 0.0 && self.c_u.is_finite() && self.c_m > 0.0 && self.c_m.is_finite()) {
            return bad("c_u and c_m must be positive".into());
        }
        if self.u.is_some_and(|u| !(u > 0.0 && u.is_finite())) || self.m.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
            return bad("u and m overrides must be positive".into());
        }
        match self.scheme {
            Scheme::BernoulliL1 if self.p != 1.0 => return bad("bernoulli-l1 requires p = 1".into()),
            Scheme::PoissonLp if self.p == 1.0 => return bad("poisson-lp requires p in (1, 2]".into()),
            Scheme::Uniform if self.m.is_some_and(|m| m as usize > self.n || m < 1.0) => {
                return bad("uniform m must lie in [1, n]".into())
            }
            _ => {}
        }
        if self.family == Family::LowerBound {
            if self.n % self.d != 0 {
                return bad("lower-bound family needs d to divide n".into());
            }
            if !(self.bias > 0.0 && self.bias <= 0.5) {
                return bad("bias must lie in (0, 0.5]".into());
            }
        }
        if !(0.0..=1.0).contains(&self.required_pass_fraction) {
            return bad("required_pass_fraction must lie in [0, 1]".into());
        }
        if !(self.noise_sigma >= 0.0 && self.outlier_magnitude.is_finite()) {
            return bad("noise_sigma must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub queries: usize,
    pub support: usize,
    /// `L(beta~) / L(beta*)`.
    pub ratio: f64,
    pub pass: bool,
    pub status: String,
    /// The ledger listed exactly the sketch support.
    pub ledger_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub l_star: f64,
    pub lewis_residual: Option<f64>,
    pub lewis_iterations: Option<usize>,
    pub expected_support: f64,
    pub budget: usize,
    /// `1 + eps / (1 - eps)`.
    pub ratio_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub pass_fraction: f64,
    pub median_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    /// Minimum, median, 90th percentile and maximum of the queries used.
    pub queries: [usize; 4],
    pub ledger_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub instance: InstanceSummary,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    pub passed: bool,
    pub wall_time_s: f64,
}

/// The instance an experiment runs on; depends on the family, shape,
/// noise settings and `seed`.
pub fn generate(cfg: &ExperimentConfig) -> Result<RegressionInstance, Error> {
    let noise = if cfg.noise_sigma == 0.0 {
        Noise::None
    } else {
        Noise::Gaussian { sigma: cfg.noise_sigma }
    };
    let mut spec = RandomSpec {
        noise,
        outlier_magnitude: cfg.outlier_magnitude,
        ..RandomSpec::new(cfg.n, cfg.d, cfg.p)
    };
    Ok(match cfg.family {
        Family::Gaussian => gen_random(&spec, cfg.seed)?.instance,
        Family::Outlier => {
            spec.outliers = 1;
            gen_random(&spec, cfg.seed)?.instance
        }
        Family::Coherent => {
            spec.design = Design::Coherent { heavy: (cfg.n as f64).sqrt() };
            gen_random(&spec, cfg.seed)?.instance
        }
        Family::LowerBound => gen_lower_bound(cfg.n, cfg.d, cfg.bias, None, cfg.seed)?.instance.with_p(cfg.p)?,
    })
}

/// Plan for the configured scheme, built from the design only.
pub fn build_plan(cfg: &ExperimentConfig, a: &lewisreg_core::DenseMatrix) -> Result<(SamplePlan, Option<(f64, usize)>), Error> {
    let d = a.cols();
    match cfg.scheme {
        Scheme::Uniform => {
            let m = match cfg.m {
                Some(m) => m.round() as usize,
                None => {
                    let w = vec![d as f64 / a.rows() as f64; a.rows()];
                    plan_l1(&w, 1.0, cfg.eps, cfg.delta, d, cfg.u, cfg.c_u)?.expected_support().round() as usize
                }
            };
            Ok((plan_uniform(a.rows(), m.clamp(1, a.rows()))?, None))
        }
        Scheme::BernoulliL1 | Scheme::PoissonLp => {
            let lewis_p = if cfg.scheme == Scheme::BernoulliL1 { 1.0 } else { cfg.p };
            let lw = lewis_weights(a, lewis_p, 1e-8, 500)?;
            let plan = if cfg.scheme == Scheme::BernoulliL1 {
                plan_l1(&lw.w, lw.gamma, cfg.eps, cfg.delta, d, cfg.u, cfg.c_u)?
            } else {
                plan_lp(&lw.w, lw.gamma, cfg.eps, cfg.delta, d, cfg.p, cfg.m, cfg.c_m)?
            };
            Ok((plan, Some((lw.residual, lw.iterations))))
        }
    }
}

fn quantile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[k]
}

/// Runs the configured experiment. Deterministic given the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, Error> {
    cfg.validate()?;
    let start = Instant::now();
    let instance = generate(cfg)?;
    let a = instance.a();
    let full_fit = solve_weighted(
        a,
        instance.reveal(),
        &vec![1.0; cfg.n],
        cfg.p,
        SolverOptions { tol: 1e-10, max_iter: 200 },
    )?;
    let l_star = full_fit.objective;
    let (plan, lewis) = build_plan(cfg, a)?;
    let budget = match cfg.budget {
        Some(b) => b,
        None => support_size_bound(&plan, BUDGET_DELTA)?,
    };
    let ratio_bound = approx_transfer_bound(cfg.eps)?;

    let trials: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord, Error> {
            let seed = trial_seed(cfg.seed, t as u64);
            match active_solve(&instance, &plan, seed, Some(budget)) {
                Ok((res, ledger, sketch)) => {
                    let ledger_exact = ledger.queried().eq(sketch.indices());
                    let ratio = if res.status == SolveStatus::Degenerate {
                        f64::INFINITY
                    } else {
                        let l = lp_loss(a, instance.reveal(), &res.beta, cfg.p)?;
                        if l_star > 0.0 { l / l_star } else if l == 0.0 { 1.0 } else { f64::INFINITY }
                    };
                    Ok(TrialRecord {
                        trial: t,
                        seed,
                        queries: ledger.len(),
                        support: sketch.support_size(),
                        ratio,
                        pass: ratio <= ratio_bound,
                        status: status_name(res.status).into(),
                        ledger_exact,
                    })
                }
                Err(lewisreg_core::Error::BudgetExceeded { budget }) => Ok(TrialRecord {
                    trial: t,
                    seed,
                    queries: budget,
                    support: lewisreg_core::sampling::realize(&plan, seed).support_size(),
                    ratio: f64::INFINITY,
                    pass: false,
                    status: "budget-exceeded".into(),
                    ledger_exact: true,
                }),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, _>>()?;

    let passes = trials.iter().filter(|r| r.pass).count();
    let pass_fraction = if trials.is_empty() { 1.0 } else { passes as f64 / trials.len() as f64 };
    let ratios: Vec<f64> = trials.iter().map(|r| r.ratio).collect();
    let mut queries: Vec<usize> = trials.iter().map(|r| r.queries).collect();
    queries.sort_unstable();
    let ledger_exact = trials.iter().all(|r| r.ledger_exact);
    let aggregates = Aggregates {
        pass_fraction,
        median_ratio: median(&ratios),
        max_ratio: ratios.iter().cloned().reduce(f64::max),
        queries: [
            quantile(&queries, 0.0),
            quantile(&queries, 0.5),
            quantile(&queries, 0.9),
            quantile(&queries, 1.0),
        ],
        ledger_exact,
    };
    let passed = ledger_exact && pass_fraction >= cfg.required_pass_fraction;
    Ok(ExperimentReport {
        schema: REPORT_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        config: cfg.clone(),
        instance: InstanceSummary {
            l_star,
            lewis_residual: lewis.map(|l| l.0),
            lewis_iterations: lewis.map(|l| l.1),
            expected_support: plan.expected_support(),
            budget,
            ratio_bound,
        },
        trials,
        aggregates,
        passed,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max-iter",
        SolveStatus::Degenerate => "degenerate",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Target number of sampled rows; for the bernoulli scheme `u = d / m`.
    M,
    Eps,
    #[value(name = "c-u")]
    #[serde(rename = "c-u")]
    CU,
}

impl SweepAxis {
    fn apply(self, cfg: &mut ExperimentConfig, v: f64) {
        match self {
            SweepAxis::M => {
                if cfg.scheme == Scheme::BernoulliL1 {
                    cfg.u = Some(cfg.d as f64 / v);
                } else {
                    cfg.m = Some(v);
                }
            }
            SweepAxis::Eps => cfg.eps = v,
            SweepAxis::CU => cfg.c_u = v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::Eps => "eps",
            SweepAxis::CU => "c_u",
        }
    }
}

/// One experiment per axis value, plus an aggregate CSV with columns
/// `value,median_ratio,pass_fraction,median_queries`.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<(Vec<ExperimentReport>, String), Error> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sweep values must be strictly increasing".into()));
    }
    let mut reports = Vec::with_capacity(values.len());
    let mut csv = format!("{},median_ratio,pass_fraction,median_queries\n", axis.name());
    for &v in values {
        let mut c = cfg.clone();
        axis.apply(&mut c, v);
        let rep = run_experiment(&c)?;
        csv.push_str(&format!(
            "{v},{},{},{}\n",
            rep.aggregates.median_ratio.map_or(String::from("nan"), |r| r.to_string()),
            rep.aggregates.pass_fraction,
            rep.aggregates.queries[1]
        ));
        reports.push(rep);
    }
    Ok((reports, csv))
}
