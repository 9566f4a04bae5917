use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lewisreg::experiment::{build_plan, run_experiment, sweep, ExperimentConfig, Family, SweepAxis};
use lewisreg::instances::{gen_lower_bound, gen_random, Design, Noise, RandomSpec};
use lewisreg::io;
use lewisreg::lewis::{importance_weights, lewis_weights, sandwich_check};
use lewisreg::oracle::{query, QueryLedger, RegressionInstance};
use lewisreg::sampling::{realize, trial_seed, SamplePlan, Scheme};
use lewisreg::solvers::{solve_weighted, SolverOptions};
use lewisreg::verify::{cross_term_check, embedding_check, median, ruc_check, taylor_claim_check, BetaSample};
use lewisreg::{DenseMatrix, Error};

#[derive(Parser)]
#[command(name = "lewisreg", version, about = "Label-budgeted l1/lp regression by Lewis-weight sampling")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance: matrix, labels and a manifest.
    Gen(GenArgs),
    /// Compute Lewis weights of a matrix.
    Lewis(LewisArgs),
    /// Build a sampling plan from a matrix.
    Plan(PlanCmd),
    /// Realize a plan into a sketch.
    Realize(RealizeArgs),
    /// Solve the (optionally sketched) regression problem.
    Solve(SolveArgs),
    /// Run an empirical check and emit a JSON report.
    Verify(VerifyArgs),
    /// Run an end-to-end experiment.
    Run(RunArgs),
    /// Run an experiment for each value along one axis.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Csv,
    Dmat,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Label bias of the lower-bound family.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 1e4)]
    outlier_magnitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes PREFIX.matrix.{csv,dmat}, PREFIX.labels.csv and PREFIX.manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: MatrixFormat,
    /// Include the ground truth (beta0 or signs) in the manifest. Test use only.
    #[arg(long)]
    reveal: bool,
}

#[derive(Args)]
struct LewisArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Weights CSV; the JSON summary goes next to it with a .json extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PlanArgs {
    #[arg(long, value_enum, default_value = "bernoulli-l1")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_u: f64,
    #[arg(long, default_value_t = 1.0)]
    c_m: f64,
    /// Threshold override for bernoulli-l1.
    #[arg(long)]
    u: Option<f64>,
    /// Budget override for poisson-lp and uniform.
    #[arg(long)]
    m: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    BernoulliL1,
    PoissonLp,
    Uniform,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::BernoulliL1 => Scheme::BernoulliL1,
            SchemeArg::PoissonLp => Scheme::PoissonLp,
            SchemeArg::Uniform => Scheme::Uniform,
        }
    }
}

impl PlanArgs {
    fn config(&self, a: &DenseMatrix) -> ExperimentConfig {
        ExperimentConfig {
            eps: self.eps,
            delta: self.delta,
            c_u: self.c_u,
            c_m: self.c_m,
            u: self.u,
            m: self.m,
            ..ExperimentConfig::new(Family::Gaussian, a.rows(), a.cols(), self.p, self.scheme.into())
        }
    }

    fn plan(&self, a: &DenseMatrix) -> Result<SamplePlan, Error> {
        let cfg = self.config(a);
        cfg.validate()?;
        Ok(build_plan(&cfg, a)?.0)
    }
}

#[derive(Args)]
struct PlanCmd {
    #[arg(long)]
    matrix: PathBuf,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    #[serde(flatten)]
    plan: SamplePlan,
    expected_support: f64,
    digest: String,
}

#[derive(Args)]
struct RealizeArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Restrict to a sketch; only its rows' labels are read.
    #[arg(long)]
    sketch: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Ruc,
    Embed,
    Cross,
    Taylor,
    Sandwich,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random pairs (taylor) or directions (embed, ruc, cross).
    #[arg(long)]
    samples: Option<usize>,
    /// Random restarts of the importance-weight oracle (sandwich).
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment config JSON.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named config: l1-accept, lp-accept or smoke.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c_u: Option<f64>,
    #[arg(long)]
    c_m: Option<f64>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => serde_json::from_reader(File::open(path)?)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            (None, Some(name)) => ExperimentConfig::preset(name).ok_or_else(|| {
                Error::Config(format!("unknown preset {name:?}; known: {}", ExperimentConfig::PRESETS.join(", ")))
            })?,
            (None, None) => return Err(Error::Config("pass --config or --preset".into())),
        };
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.c_u {
            cfg.c_u = v;
        }
        if let Some(v) = self.c_m {
            cfg.c_m = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(long, value_enum)]
    axis: SweepAxis,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Directory for per-value reports and sweep.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), Error> {
    match out {
        Some(path) => io::write_json_file(path, value),
        None => io::write_json(std::io::stdout().lock(), value),
    }
}

fn gen(args: &GenArgs) -> Result<bool, Error> {
    let (a, y, truth) = match args.family {
        Family::LowerBound => {
            let lb = gen_lower_bound(args.n, args.d, args.eps, None, args.seed)?;
            (lb.instance.a().clone(), lb.instance.reveal().to_vec(), json!({ "b": lb.b }))
        }
        family => {
            let mut spec = RandomSpec {
                noise: if args.noise_sigma == 0.0 { Noise::None } else { Noise::Gaussian { sigma: args.noise_sigma } },
                outlier_magnitude: args.outlier_magnitude,
                ..RandomSpec::new(args.n, args.d, args.p)
            };
            match family {
                Family::Outlier => spec.outliers = 1,
                Family::Coherent => spec.design = Design::Coherent { heavy: (args.n as f64).sqrt() },
                _ => {}
            }
            let g = gen_random(&spec, args.seed)?;
            let truth = json!({ "beta0": g.beta0, "outlier_rows": g.outlier_rows });
            (g.instance.a().clone(), g.instance.reveal().to_vec(), truth)
        }
    };
    let prefix = args.out.display().to_string();
    let matrix_path = match args.format {
        MatrixFormat::Csv => {
            let p = format!("{prefix}.matrix.csv");
            io::write_matrix_csv(&p, &a)?;
            p
        }
        MatrixFormat::Dmat => {
            let p = format!("{prefix}.matrix.dmat");
            io::write_matrix_bin(&p, &a)?;
            p
        }
    };
    let labels_path = format!("{prefix}.labels.csv");
    io::write_vector(&labels_path, &y)?;
    let mut manifest = json!({
        "family": args.family,
        "n": args.n,
        "d": args.d,
        "p": args.p,
        "eps": args.eps,
        "noise_sigma": args.noise_sigma,
        "outlier_magnitude": args.outlier_magnitude,
        "seed": args.seed,
        "matrix": matrix_path,
        "labels": labels_path,
        "tool_version": lewisreg::TOOL_VERSION,
    });
    if args.reveal {
        manifest["truth"] = truth;
    }
    io::write_json_file(format!("{prefix}.manifest.json"), &manifest)?;
    emit_json(None, &manifest)?;
    Ok(true)
}

fn lewis(args: &LewisArgs) -> Result<bool, Error> {
    let a = io::read_matrix(&args.matrix)?;
    let lw = lewis_weights(&a, args.p, args.tol, args.max_iter)?;
    let summary = json!({
        "p": lw.p,
        "gamma": lw.gamma,
        "residual": lw.residual,
        "iterations": lw.iterations,
        "sum": lw.sum(),
        "status": lw.status,
    });
    match &args.out {
        Some(path) => {
            io::write_vector(path, &lw.w)?;
            io::write_json_file(path.with_extension("json"), &summary)?;
            emit_json(None, &summary)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            for w in &lw.w {
                writeln!(out, "{w:?}")?;
            }
        }
    }
    Ok(lw.converged())
}

fn plan(args: &PlanCmd) -> Result<bool, Error> {
    let a = io::read_matrix(&args.matrix)?;
    let plan = args.plan.plan(&a)?;
    let file = PlanFile {
        expected_support: plan.expected_support(),
        digest: format!("{:016x}", plan.digest()),
        plan,
    };
    emit_json(args.out.as_deref(), &file)?;
    Ok(true)
}

fn realize_cmd(args: &RealizeArgs) -> Result<bool, Error> {
    let file: PlanFile = serde_json::from_reader(File::open(&args.plan)?)?;
    let sketch = realize(&file.plan, args.seed);
    match &args.out {
        Some(path) => io::write_sketch_csv(File::create(path)?, &sketch)?,
        None => io::write_sketch_csv(std::io::stdout().lock(), &sketch)?,
    }
    Ok(true)
}

fn solve(args: &SolveArgs) -> Result<bool, Error> {
    let a = io::read_matrix(&args.matrix)?;
    let y = io::read_vector(&args.labels)?;
    let instance = RegressionInstance::new(a, y, args.p)?;
    let opts = SolverOptions { tol: args.tol, ..Default::default() };
    let mut ledger = QueryLedger::new(args.budget);
    let (rows, s): (Vec<usize>, Vec<f64>) = match &args.sketch {
        Some(path) => io::read_sketch_csv(path)?.entries.into_iter().unzip(),
        None => ((0..instance.n()).collect(), vec![1.0; instance.n()]),
    };
    let y_sub = rows
        .iter()
        .map(|&i| query(&instance, &mut ledger, i))
        .collect::<Result<Vec<_>, _>>()?;
    let sub = instance.a().select_rows(&rows)?;
    let res = solve_weighted(&sub, &y_sub, &s, args.p, opts)?;
    emit_json(
        args.out.as_deref(),
        &json!({ "result": res, "queries": ledger.len(), "budget": args.budget }),
    )?;
    Ok(res.status != lewisreg::solvers::SolveStatus::Degenerate)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, Error> {
    p.as_ref().ok_or_else(|| Error::Config(format!("--{flag} is required for this check")))
}

fn verify(args: &VerifyArgs) -> Result<bool, Error> {
    use rayon::prelude::*;
    let pa = &args.plan;
    let (report, pass) = match args.check {
        Check::Taylor => {
            let rep = taylor_claim_check(pa.p, args.samples.unwrap_or(1_000_000), args.seed)?;
            let pass = rep.finite;
            (serde_json::to_value(rep)?, pass)
        }
        Check::Sandwich => {
            let a = io::read_matrix(need(&args.matrix, "matrix")?)?;
            let lw = lewis_weights(&a, pa.p, 1e-10, 500)?;
            let iw = importance_weights(&a, pa.p, args.starts, args.seed)?;
            let rep = sandwich_check(&a, pa.p, &lw, &iw, 1e-3)?;
            let pass = rep.passed();
            (serde_json::to_value(rep)?, pass)
        }
        Check::Embed => {
            let a = io::read_matrix(need(&args.matrix, "matrix")?)?;
            let plan = pa.plan(&a)?;
            let dirs = args.samples.unwrap_or(500);
            let reps = (0..args.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(args.seed, t as u64);
                    embedding_check(&a, &realize(&plan, seed), pa.p, pa.eps, dirs, seed)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let passed = reps.iter().filter(|r| r.pass).count();
            let frac = if reps.is_empty() { 1.0 } else { passed as f64 / reps.len() as f64 };
            let pass = frac >= 1.0 - pa.delta;
            (json!({ "check": "embed", "pass_fraction": frac, "trials": reps, "pass": pass }), pass)
        }
        Check::Ruc | Check::Cross => {
            let a = io::read_matrix(need(&args.matrix, "matrix")?)?;
            let y = io::read_vector(need(&args.labels, "labels")?)?;
            let full = solve_weighted(&a, &y, &vec![1.0; a.rows()], pa.p, SolverOptions { tol: 1e-10, max_iter: 200 })?;
            let plan = pa.plan(&a)?;
            let sketches: Vec<_> = (0..args.trials)
                .map(|t| realize(&plan, trial_seed(args.seed, t as u64)))
                .collect();
            if let Check::Ruc = args.check {
                let sample = BetaSample {
                    directions: args.samples.unwrap_or(40),
                    seed: args.seed,
                    ..Default::default()
                };
                let rep = ruc_check(&a, &y, pa.p, &sketches, &full.beta, sample, pa.eps, pa.delta)?;
                let pass = rep.pass_fraction >= 1.0 - pa.delta;
                (serde_json::to_value(rep)?, pass)
            } else {
                let fit = a.mul_vec(&full.beta)?;
                let yc: Vec<f64> = y.iter().zip(&fit).map(|(v, f)| v - f).collect();
                let dirs = args.samples.unwrap_or(200);
                let reps = sketches
                    .par_iter()
                    .map(|s| cross_term_check(&a, &yc, s, pa.p, dirs, s.seed))
                    .collect::<Result<Vec<_>, _>>()?;
                let ratios: Vec<f64> = reps.iter().map(|r| r.max_ratio).collect();
                (json!({ "check": "cross", "median_max_ratio": median(&ratios), "trials": reps }), true)
            }
        }
    };
    emit_json(args.out.as_deref(), &report)?;
    Ok(pass)
}

fn run(args: &RunArgs) -> Result<bool, Error> {
    let mut cfg = args.source.load()?;
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    let rep = run_experiment(&cfg)?;
    emit_json(cfg.output.as_deref(), &rep)?;
    Ok(rep.passed)
}

fn sweep_cmd(args: &SweepArgs) -> Result<bool, Error> {
    let cfg = args.source.load()?;
    let (reports, csv) = sweep(&cfg, args.axis, &args.values)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        for (k, rep) in reports.iter().enumerate() {
            io::write_json_file(dir.join(format!("report-{k:03}.json")), rep)?;
        }
        std::fs::write(dir.join("sweep.csv"), &csv)?;
    }
    std::io::stdout().lock().write_all(csv.as_bytes())?;
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Lewis(a) => lewis(a),
        Command::Plan(a) => plan(a),
        Command::Realize(a) => realize_cmd(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
