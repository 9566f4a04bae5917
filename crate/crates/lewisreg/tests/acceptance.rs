//! Acceptance suite. Prints one line per criterion and exits nonzero if
//! any criterion fails.

use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use lewisreg::experiment::{generate, run_experiment, ExperimentConfig, Family};
use lewisreg::instances::{gen_random, sign_recovery_experiment, Design, Noise, RandomSpec};
use lewisreg::lewis::{importance_weights, lewis_weights, sandwich_check, split_row, ImportanceMethod};
use lewisreg::linalg::leverage_scores;
use lewisreg::oracle::{active_solve, RegressionInstance};
use lewisreg::rng::SplitMix64;
use lewisreg::sampling::{plan_l1, plan_lp, plan_uniform, realize, sketched_loss, trial_seed, SamplePlan, Sketch};
use lewisreg::solvers::{solve_weighted, SolverOptions};
use lewisreg::verify::{cross_term_check, embedding_check, loglog_slope, median, taylor_claim_check, BetaSample, RucProbe};
use lewisreg::DenseMatrix;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

const SWEEP_M: [f64; 6] = [250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);

/// Ledger comparisons gathered from every active solve in the suite.
static LEDGER: Mutex<(usize, usize)> = Mutex::new((0, 0));

fn record_ledger(exact: bool) {
    let mut g = LEDGER.lock().unwrap();
    g.0 += 1;
    if exact {
        g.1 += 1;
    }
}

fn full_fit(a: &DenseMatrix, y: &[f64], p: f64) -> Vec<f64> {
    solve_weighted(a, y, &vec![1.0; a.rows()], p, SolverOptions { tol: 1e-12, max_iter: 300 })
        .expect("full-data fit")
        .beta
}

/// Seeded matrices with n <= 500, d <= 10: Gaussian, coherent, rows with
/// log-normal scales and matrices with repeated rows.
fn corpus() -> Vec<DenseMatrix> {
    (0..50u64)
        .map(|k| {
            let mut rng = SplitMix64::substream(0xC0_4905, k);
            let d = 1 + rng.below(10) as usize;
            let n = (2 * d + rng.below(500 - 2 * d as u64 + 1) as usize).min(500);
            match k % 4 {
                0 => DenseMatrix::from_fn(n, d, |_, _| rng.normal()).unwrap(),
                1 => {
                    let spec = RandomSpec {
                        design: Design::Coherent { heavy: (n as f64).sqrt() },
                        ..RandomSpec::new(n, d, 1.0)
                    };
                    gen_random(&spec, k).unwrap().instance.a().clone()
                }
                2 => {
                    let scales: Vec<f64> = (0..n).map(|_| (2.0 * rng.normal()).exp()).collect();
                    DenseMatrix::from_fn(n, d, |i, _| scales[i] * rng.normal()).unwrap()
                }
                _ => {
                    let base: Vec<f64> = (0..(n / 3 + d) * d).map(|_| rng.normal()).collect();
                    let picks: Vec<usize> = (0..n).map(|_| rng.below((n / 3 + d) as u64) as usize).collect();
                    DenseMatrix::from_fn(n, d, |i, j| base[picks[i] * d + j]).unwrap()
                }
            }
        })
        .collect()
}

fn lewis_fixed_point() -> Outcome {
    let mut worst_res = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut worst_time = 0.0f64;
    let mut failures = 0;
    for a in corpus() {
        for p in [1.0, 1.25, 1.5, 2.0] {
            let t = Instant::now();
            let lw = lewis_weights(&a, p, 1e-8, 500);
            let el = t.elapsed().as_secs_f64();
            worst_time = worst_time.max(el);
            match lw {
                Ok(lw) => {
                    let dev = (lw.sum() - a.cols() as f64).abs();
                    worst_res = worst_res.max(lw.residual);
                    worst_sum = worst_sum.max(dev);
                    if !(lw.residual <= 1e-6 && lw.iterations <= 500 && dev <= 1e-6 && el < 1.0) {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    (
        failures == 0,
        format!("200 solves, max residual {worst_res:.2e}, max |sum-d| {worst_sum:.2e}, slowest {worst_time:.3}s"),
    )
}

fn p2_leverage() -> Outcome {
    let mut worst = 0.0f64;
    for a in corpus() {
        let lw = lewis_weights(&a, 2.0, 1e-8, 500).unwrap();
        let lev = leverage_scores(&a).unwrap();
        for (w, l) in lw.w.iter().zip(&lev.scores) {
            worst = worst.max((w - l).abs());
        }
    }
    (worst <= 1e-8, format!("max |w - leverage| {worst:.2e} over 50 matrices"))
}

fn sandwich() -> Outcome {
    let mut rows = 0;
    let mut bad = 0;
    let mut lo_margin = f64::INFINITY;
    let mut hi_margin = 0.0f64;
    for k in 0..30u64 {
        let mut rng = SplitMix64::substream(0x5A_4D, k);
        let d = 1 + rng.below(4) as usize;
        let n = d + 2 + rng.below(50 - d as u64 - 1) as usize;
        let p = [1.0, 1.25, 1.5, 1.75, 2.0][(k % 5) as usize];
        let scales: Vec<f64> = (0..n).map(|_| rng.normal().exp()).collect();
        let a = DenseMatrix::from_fn(n, d, |i, _| scales[i] * rng.normal()).unwrap();
        let lw = lewis_weights(&a, p, 1e-12, 2000).unwrap();
        let iw = importance_weights(&a, p, 16, k).unwrap();
        let rep = sandwich_check(&a, p, &lw, &iw, 1e-3).unwrap();
        rows += n;
        bad += rep.violations.len();
        lo_margin = lo_margin.min(rep.min_ratio / rep.lower_factor);
        hi_margin = hi_margin.max(rep.max_ratio);
    }
    (
        bad == 0,
        format!("{rows} rows, {bad} violations, min u/(factor w) {lo_margin:.4}, max u/w {hi_margin:.6}"),
    )
}

fn split_invariance() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let mut rng = SplitMix64::substream(0x5_9117, k);
        let p = [1.0, 1.25, 1.5, 1.75, 2.0][(k % 5) as usize];
        let d = 1 + rng.below(5) as usize;
        let n = d + 3 + rng.below(40) as usize;
        let a = DenseMatrix::from_fn(n, d, |_, _| rng.normal()).unwrap();
        let row = rng.below(n as u64) as usize;
        let copies = 2 + rng.below(5) as usize;
        let split = split_row(&a, row, copies, p).unwrap();
        let before = lewis_weights(&a, p, 1e-12, 5000).unwrap();
        let after = lewis_weights(&split, p, 1e-12, 5000).unwrap();
        let expect = |w: &[f64], i: usize| -> f64 {
            if i < row {
                w[i]
            } else if i < row + copies {
                w[row] / copies as f64
            } else {
                w[i - copies + 1]
            }
        };
        for i in 0..split.rows() {
            worst = worst.max((after.w[i] - expect(&before.w, i)).abs());
        }
        // closed-form importance weights of a single column
        let col = DenseMatrix::from_fn(n, 1, |i, _| a.get(i, 0)).unwrap();
        let col_split = split_row(&col, row, copies, p).unwrap();
        let u0 = importance_weights(&col, p, 1, k).unwrap();
        let u1 = importance_weights(&col_split, p, 1, k).unwrap();
        assert_eq!(u1.method, ImportanceMethod::ClosedForm1d);
        for i in 0..col_split.rows() {
            worst = worst.max((u1.u[i] - expect(&u0.u, i)).abs());
        }
    }
    (worst <= 1e-6, format!("20 splits, max pattern deviation {worst:.2e}"))
}

fn mc_unbiased(a: &DenseMatrix, y: &[f64], beta: &[f64], p: f64, plan: &SamplePlan, seed: u64) -> (f64, bool) {
    const R: u64 = 10_000;
    let exact = sketched_loss(a, y, beta, &Sketch::identity(a.rows()), p).unwrap();
    let vals: Vec<f64> = (0..R)
        .map(|r| sketched_loss(a, y, beta, &realize(plan, trial_seed(seed, r)), p).unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / R as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (R - 1) as f64;
    let se = (var / R as f64).sqrt();
    let z = if se > 0.0 { (mean - exact).abs() / se } else if (mean - exact).abs() <= 1e-9 * exact { 0.0 } else { f64::INFINITY };
    (z, z <= 3.0)
}

fn unbiasedness() -> Outcome {
    let results: Vec<(f64, bool)> = (0..10u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut spec = RandomSpec::new(300, 3, 1.0);
            spec.outliers = (k % 3) as usize;
            let g = gen_random(&spec, 0xB1A5 + k).unwrap();
            let a = g.instance.a();
            let y = g.instance.reveal();
            let mut rng = SplitMix64::new(k);
            let beta: Vec<f64> = g.beta0.iter().map(|b| b + 0.3 * rng.normal()).collect();

            let w1 = lewis_weights(a, 1.0, 1e-8, 500).unwrap();
            let l1 = plan_l1(&w1.w, w1.gamma, 0.25, 0.1, 3, Some(3.0 / 60.0), 1.0).unwrap();
            let wp = lewis_weights(a, 1.5, 1e-8, 500).unwrap();
            let lp = plan_lp(&wp.w, wp.gamma, 0.25, 0.1, 3, 1.5, Some(60.0), 1.0).unwrap();
            [
                mc_unbiased(a, y, &beta, 1.0, &l1, k),
                mc_unbiased(a, y, &beta, 1.5, &lp, k + 100),
            ]
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let ok = results.iter().filter(|r| r.1).count();
    (ok == results.len(), format!("{ok}/{} within 3 SE, max |z| {worst:.2}", results.len()))
}

fn embedding() -> Outcome {
    const C_U: f64 = 0.25;
    let t = Instant::now();
    let spec = RandomSpec::new(10_000, 5, 1.0);
    let g = gen_random(&spec, 0xE_3BED).unwrap();
    let a = g.instance.a();
    let lw = lewis_weights(a, 1.0, 1e-8, 500).unwrap();
    let plan = plan_l1(&lw.w, lw.gamma, 0.25, 0.1, 5, None, C_U).unwrap();
    let support = plan.expected_support();
    let passes = (0..100u64)
        .into_par_iter()
        .filter(|&s| {
            let seed = trial_seed(0xE_3BED, s);
            embedding_check(a, &realize(&plan, seed), 1.0, 0.25, 200, seed).unwrap().pass
        })
        .count();
    let el = t.elapsed().as_secs_f64();
    (
        support <= 4000.0 && passes >= 90 && el < 120.0,
        format!("c_u {C_U}, expected support {support:.0}, {passes}/100 seeds, {el:.1}s"),
    )
}

fn end_to_end(preset: &str, need: usize, limit_s: Option<f64>) -> Outcome {
    let cfg = ExperimentConfig::preset(preset).unwrap();
    let t = Instant::now();
    let rep = run_experiment(&cfg).unwrap();
    let el = t.elapsed().as_secs_f64();
    for r in &rep.trials {
        record_ledger(r.ledger_exact);
    }
    let passes = rep.trials.iter().filter(|r| r.pass).count();
    let within_budget = rep.trials.iter().all(|r| r.queries <= rep.instance.budget && r.status != "budget-exceeded");
    let q = rep.aggregates.queries;
    (
        passes >= need && within_budget && limit_s.map_or(true, |l| el < l),
        format!(
            "{passes}/{} within ratio {:.4}, median ratio {:.4}, queries {}..{} (budget {}), {el:.1}s",
            rep.trials.len(),
            rep.instance.ratio_bound,
            rep.aggregates.median_ratio.unwrap_or(f64::NAN),
            q[0],
            q[3],
            rep.instance.budget,
        ),
    )
}

fn plan_for(cfg: &ExperimentConfig, a: &DenseMatrix) -> SamplePlan {
    lewisreg::experiment::build_plan(cfg, a).unwrap().0
}

fn ruc_vs_uncorrected() -> Outcome {
    let cfg = ExperimentConfig::preset("l1-accept").unwrap();
    let inst = generate(&cfg).unwrap();
    let (a, y) = (inst.a(), inst.reveal());
    let beta_star = full_fit(a, y, 1.0);
    let plan = plan_for(&cfg, a);
    let probe = RucProbe::new(a, y, &beta_star, 1.0, cfg.eps, cfg.delta, BetaSample::default()).unwrap();
    let trials: Vec<_> = (0..100u64)
        .into_par_iter()
        .map(|t| probe.evaluate(&realize(&plan, trial_seed(cfg.seed, t))).unwrap())
        .collect();
    let corrected = trials.iter().filter(|t| t.max_violation <= cfg.eps).count();
    let uncorrected = trials.iter().filter(|t| t.max_uncorrected > cfg.eps).count();
    let med = |f: fn(&lewisreg::verify::RucTrial) -> f64| median(&trials.iter().map(f).collect::<Vec<_>>()).unwrap();
    (
        corrected >= 90 && uncorrected >= 50,
        format!(
            "corrected <= eps in {corrected}/100 (median {:.3}), uncorrected > eps in {uncorrected}/100 (median {:.3})",
            med(|t| t.max_violation),
            med(|t| t.max_uncorrected)
        ),
    )
}

fn slope_line(ms: &[f64], meds: &[f64]) -> Outcome {
    let slope = loglog_slope(ms, meds).unwrap();
    let pts: Vec<String> = ms.iter().zip(meds).map(|(m, v)| format!("{m:.0}:{v:.4}")).collect();
    (
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope),
        format!("slope {slope:.3} [{}]", pts.join(" ")),
    )
}

fn ruc_scaling() -> Outcome {
    const SEEDS: u64 = 20;
    let d = 5;
    let cfg = ExperimentConfig {
        seed: 0x5CA1E,
        ..ExperimentConfig::new(Family::Gaussian, 50_000, d, 1.0, lewisreg::sampling::Scheme::BernoulliL1)
    };
    let inst = generate(&cfg).unwrap();
    let (a, y) = (inst.a(), inst.reveal());
    let beta_star = full_fit(a, y, 1.0);
    let lw = lewis_weights(a, 1.0, 1e-8, 500).unwrap();
    let probe = RucProbe::new(a, y, &beta_star, 1.0, cfg.eps, cfg.delta, BetaSample::default()).unwrap();
    let meds: Vec<f64> = SWEEP_M
        .iter()
        .map(|&m| {
            let plan = plan_l1(&lw.w, lw.gamma, cfg.eps, cfg.delta, d, Some(d as f64 / m), 1.0).unwrap();
            let v: Vec<f64> = (0..SEEDS)
                .into_par_iter()
                .map(|s| probe.evaluate(&realize(&plan, trial_seed(m as u64, s))).unwrap().max_violation)
                .collect();
            median(&v).unwrap()
        })
        .collect();
    slope_line(&SWEEP_M, &meds)
}

fn coin_hardness() -> Outcome {
    let t = Instant::now();
    let eps = 0.02;
    let few = sign_recovery_experiment(25, eps, 25, 2000, 0xC01).unwrap();
    let many_m = (100.0 / (eps * eps)) as usize;
    let many = sign_recovery_experiment(many_m, eps, many_m, 2000, 0xC02).unwrap();
    let el = t.elapsed().as_secs_f64();
    (
        few <= 0.75 && many >= 0.99 && el < 60.0,
        format!("win rate {few:.3} at m=25, {many:.4} at m={many_m}, {el:.1}s"),
    )
}

fn ledger_exactness() -> Outcome {
    // every scheme, with and without a budget
    let spec = RandomSpec { noise: Noise::Laplace { scale: 1.0 }, outliers: 2, ..RandomSpec::new(3000, 4, 1.5) };
    let g = gen_random(&spec, 0x1ED6E5).unwrap();
    let inst: &RegressionInstance = &g.instance;
    let a = inst.a();
    let w1 = lewis_weights(a, 1.0, 1e-8, 500).unwrap();
    let wp = lewis_weights(a, 1.5, 1e-8, 500).unwrap();
    let plans = [
        plan_l1(&w1.w, w1.gamma, 0.25, 0.1, 4, None, 0.5).unwrap(),
        plan_lp(&wp.w, wp.gamma, 0.3, 0.1, 4, 1.5, Some(400.0), 1.0).unwrap(),
        plan_uniform(3000, 300).unwrap(),
    ];
    for (k, plan) in plans.iter().enumerate() {
        let l1 = inst.with_p(if k == 0 { 1.0 } else { 1.5 }).unwrap();
        for s in 0..20u64 {
            let (_, ledger, sketch) = active_solve(&l1, plan, trial_seed(k as u64, s), Some(3000)).unwrap();
            let within = ledger.queried().all(|i| sketch.entries.binary_search_by_key(&i, |e| e.0).is_ok());
            record_ledger(within && ledger.len() == sketch.support_size() && ledger.queried().eq(sketch.indices()));
        }
    }
    let (total, exact) = *LEDGER.lock().unwrap();
    (total > 0 && exact == total, format!("{exact}/{total} active solves with ledger equal to sketch support"))
}

fn cross_term_scaling() -> Outcome {
    const SEEDS: u64 = 20;
    let (p, d) = (1.5, 5);
    let cfg = ExperimentConfig {
        seed: 0xC2055,
        ..ExperimentConfig::new(Family::Gaussian, 20_000, d, p, lewisreg::sampling::Scheme::PoissonLp)
    };
    let inst = generate(&cfg).unwrap();
    let (a, y) = (inst.a(), inst.reveal());
    let beta_star = full_fit(a, y, p);
    let fit = a.mul_vec(&beta_star).unwrap();
    let yc: Vec<f64> = y.iter().zip(&fit).map(|(v, f)| v - f).collect();
    let lw = lewis_weights(a, p, 1e-8, 500).unwrap();
    let meds: Vec<f64> = SWEEP_M
        .iter()
        .map(|&m| {
            let plan = plan_lp(&lw.w, lw.gamma, cfg.eps, cfg.delta, d, p, Some(m), 1.0).unwrap();
            let v: Vec<f64> = (0..SEEDS)
                .into_par_iter()
                .map(|s| {
                    let seed = trial_seed(m as u64, s);
                    cross_term_check(a, &yc, &realize(&plan, seed), p, 50, seed).unwrap().max_ratio
                })
                .collect();
            median(&v).unwrap()
        })
        .collect();
    slope_line(&SWEEP_M, &meds)
}

fn taylor() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [1.25, 1.5, 1.75, 2.0] {
        let sups: Vec<f64> = (0..5u64)
            .into_par_iter()
            .map(|s| {
                let r = taylor_claim_check(p, 1_000_000, 0x7A7 + s).unwrap();
                if r.finite { r.sup_ratio } else { f64::INFINITY }
            })
            .collect();
        let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sups.iter().cloned().fold(0.0, f64::max);
        ok &= hi.is_finite() && hi <= 1.1 * lo;
        parts.push(format!("p={p}: {lo:.4}..{hi:.4}"));
    }
    (ok, parts.join(", "))
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("lewis fixed point", lewis_fixed_point),
        ("p=2 lewis equals leverage", p2_leverage),
        ("importance sandwich", sandwich),
        ("split invariance", split_invariance),
        ("unbiased sketched loss", unbiasedness),
        ("l1 subspace embedding", embedding),
        ("end-to-end l1", || end_to_end("l1-accept", 90, Some(600.0))),
        ("end-to-end lp", || end_to_end("lp-accept", 85, None)),
        ("corrected vs uncorrected convergence", ruc_vs_uncorrected),
        ("violation scaling in m", ruc_scaling),
        ("biased coin hardness", coin_hardness),
        ("query ledger exactness", ledger_exactness),
        ("cross term scaling", cross_term_scaling),
        ("taylor remainder ratio", taylor),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = run();
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
