//! Command-line front end for the `motbounds` library.
//!
//! Subcommands:
//!
//! - `bounds` — identified interval of a quadratic estimand over couplings
//!   of arm-labelled CSV outcome data;
//! - `synth-gaussian` — 1-d Gaussian synthetic experiment with a known
//!   closed-form sharp lower bound to compare against;
//! - `synth-gaussian2d` — canonical three-margin 2-d contrast experiment
//!   with a known analytic value;
//! - `neyman` — design-based variance and confidence-interval sharpening
//!   for a treatment contrast;
//! - `cov` — bounds on the covariance between two treatment-effect
//!   coordinates, singly or as a sweep over all coordinate pairs.
//!
//! Every command writes one deterministic report (JSON, or CSV for
//! `cov --sweep`) to stdout or `--out`: rerunning the same binary on the
//! same inputs reproduces the output byte for byte, and the report embeds
//! a manifest of the effective inputs so it can be reproduced later.
//! Diagnostics go to stderr. Exit status is 0 on success, 2 for invalid
//! input, and 3 for a numerical failure inside an algorithm; failures
//! print a one-line machine-readable JSON object to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use motbounds::bounds::{
    baseline_lower_bound, covariance_bounds_with, endpoint, interval_from_solves,
    neyman_ci_detailed, IdentifiedInterval, NeymanResult, NeymanSolveInfo,
};
use motbounds::cost::{build_cost_tensor, CostKind, CostSpec, Sign};
use motbounds::measures::{load_arm_data, load_marginals};
use motbounds::solver::{solve, Algorithm, SolveResult, SolverConfig};
use motbounds::synth::{
    gaussian_system, two_dim_experiment_analytic, two_dim_experiment_system, DEFAULT_SEED,
    TWO_DIM_CONTRAST,
};
use motbounds::{oracle, Error, MarginalSystem};

#[derive(Parser)]
#[command(
    name = "motbounds",
    version,
    about = "Sharp partial-identification bounds via multi-marginal optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identified interval of an estimand over couplings of CSV arm data.
    #[command(name = "bounds")]
    Bounds(BoundsArgs),
    /// 1-d Gaussian synthetic experiment with a closed-form reference.
    #[command(name = "synth-gaussian")]
    SynthGaussian(SynthGaussianArgs),
    /// Three-margin 2-d contrast experiment with an analytic reference.
    #[command(name = "synth-gaussian2d")]
    SynthGaussian2d(SynthGaussian2dArgs),
    /// Design-based variance and CI sharpening for a treatment contrast.
    #[command(name = "neyman")]
    Neyman(NeymanArgs),
    /// Covariance bounds between treatment-effect coordinates.
    #[command(name = "cov")]
    Cov(CovArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct SolverOpts {
    /// Target accuracy of each transport solve.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Override the regularization strength (default: 4 * sum_k ln n_k / eps).
    #[arg(long)]
    eta: Option<f64>,
    /// Solver: "sinkhorn" (whole-margin updates) or "greenkhorn"
    /// (single-atom updates; one iteration does much less work).
    #[arg(long, default_value = "sinkhorn")]
    algorithm: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Arm-labelled outcome CSV (columns: arm, y1..yd, optional unit).
    #[arg(long)]
    data: PathBuf,
    /// Estimand: "mw2", "contrast:b1,b2,...", inline JSON ("{...}"), or
    /// "@spec.json".
    #[arg(long)]
    spec: String,
    /// Comma-separated arm-to-margin order (default: lexicographic).
    #[arg(long)]
    arms: Option<String>,
    /// Compress each margin to at most this many atoms before solving.
    #[arg(long)]
    max_support: Option<usize>,
    /// Iteration budget per endpoint solve.
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    /// Write a JSONL iteration trace of both endpoint solves.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct SynthGaussianArgs {
    /// Comma-separated margin standard deviations.
    #[arg(long, default_value = "2,0.3,0.1")]
    sigmas: String,
    /// Sample size per margin.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// RNG seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Compress each empirical margin to at most this many atoms
    /// (0 keeps the full n-atom support).
    #[arg(long, default_value_t = 40)]
    max_support: usize,
    /// Iteration budget for the lower-endpoint solve.
    #[arg(long, default_value_t = 5_000)]
    max_iters: u64,
    /// Write a JSONL iteration trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct SynthGaussian2dArgs {
    /// Sample size per margin.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// RNG seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Compress each empirical margin to at most this many atoms
    /// (0 keeps the full n-atom support).
    #[arg(long, default_value_t = 40)]
    max_support: usize,
    /// Iteration budget for the lower-endpoint solve.
    #[arg(long, default_value_t = 2_000)]
    max_iters: u64,
    /// Write a JSONL iteration trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct NeymanArgs {
    /// Arm-labelled outcome CSV with 1-d outcomes (columns: arm, y1).
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated contrast weights, one per arm.
    #[arg(long)]
    beta: String,
    /// Comma-separated arm-to-weight order (default: lexicographic).
    #[arg(long)]
    arms: Option<String>,
    /// Significance level of the confidence intervals.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Iteration budget for the heterogeneity solve.
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct CovArgs {
    /// Arm-labelled outcome CSV (columns: arm, y1..yd).
    #[arg(long)]
    data: PathBuf,
    /// Treated arm label.
    #[arg(long)]
    treated: String,
    /// Control arm label.
    #[arg(long)]
    control: String,
    /// Outcome coordinate pair "j1,j2" (1-based; equal for a variance).
    #[arg(long, default_value = "1,1")]
    dims: String,
    /// Bound every pair j1 < j2 and emit CSV (j1,j2,lower,upper) instead.
    #[arg(long)]
    sweep: bool,
    /// Iteration budget per endpoint solve.
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: u64,
    #[command(flatten)]
    solver: SolverOpts,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bounds(args) => cmd_bounds(args),
        Command::SynthGaussian(args) => cmd_synth_gaussian(args),
        Command::SynthGaussian2d(args) => cmd_synth_gaussian2d(args),
        Command::Neyman(args) => cmd_neyman(args),
        Command::Cov(args) => cmd_cov(args),
    };
    if let Err(err) = outcome {
        let (kind, code) = if err.is_numerical() {
            ("numerical", 3)
        } else {
            ("input", 2)
        };
        let payload = json!({ "error": err.to_string(), "kind": kind });
        eprintln!("{payload}");
        std::process::exit(code);
    }
}

// ---- reports -----------------------------------------------------------

/// Effective inputs of a run, embedded in every report so the run can be
/// reproduced exactly. Fields irrelevant to the command are omitted.
#[derive(Default, Serialize)]
struct Manifest {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arm_order: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigmas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    treated: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_support: Option<usize>,
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_override: Option<f64>,
    max_iters: u64,
    algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

/// Per-solve audit block of a report.
#[derive(Serialize)]
struct SolveSummary {
    eta: f64,
    iterations: u64,
    converged: bool,
    mtv_final: f64,
}

impl SolveSummary {
    fn of(res: &SolveResult) -> SolveSummary {
        SolveSummary {
            eta: res.eta,
            iterations: res.iterations,
            converged: res.converged,
            mtv_final: res.mtv_final,
        }
    }
}

#[derive(Serialize)]
struct BoundsReport {
    manifest: Manifest,
    arms: Vec<String>,
    dim: usize,
    support_sizes: Vec<usize>,
    interval: IdentifiedInterval,
    /// Mean-decomposition lower bound when the family supports one and the
    /// spec minimizes; `null` otherwise.
    baseline_lower: Option<f64>,
    lower_solve: SolveSummary,
    upper_solve: SolveSummary,
}

#[derive(Serialize)]
struct SynthReport {
    manifest: Manifest,
    estimand: String,
    closed_form: f64,
    empirical_lower: f64,
    /// `closed_form - empirical_lower`; sampling plus solver error.
    gap: f64,
    dual_bound: f64,
    support_sizes: Vec<usize>,
    solve: SolveSummary,
}

#[derive(Serialize)]
struct NeymanReport {
    manifest: Manifest,
    arms: Vec<String>,
    arm_sizes: Vec<usize>,
    result: NeymanResult,
    solve: NeymanSolveInfo,
}

#[derive(Serialize)]
struct CovReport {
    manifest: Manifest,
    treated: String,
    control: String,
    dims: (usize, usize),
    interval: IdentifiedInterval,
}

// ---- commands ----------------------------------------------------------

fn cmd_bounds(args: BoundsArgs) -> Result<(), Error> {
    let arm_order = parse_labels(args.arms.as_deref())?;
    let (mut sys, labels) = load_marginals(&args.data, arm_order.as_deref())?;
    if let Some(cap) = args.max_support {
        sys = sys.compressed_to(cap)?;
    }
    let spec = parse_spec_arg(&args.spec)?;
    spec.validate(sys.num_margins(), sys.dim())?;
    let algorithm = Algorithm::from_str(&args.solver.algorithm)?;
    let cfg = solver_config(&args.solver, args.max_iters, args.trace.is_some());

    let lower_cost = build_cost_tensor(&spec, &sys)?;
    let lower_res = solve(algorithm, &lower_cost, &sys, &cfg)?;
    let upper_cost = build_cost_tensor(&spec.flipped(), &sys)?;
    let upper_res = solve(algorithm, &upper_cost, &sys, &cfg)?;
    if let Some(path) = &args.trace {
        write_trace(path, &[("lower", &lower_res), ("upper", &upper_res)])?;
    }

    // The baseline lower-bounds the minimize-direction optimum only.
    let baseline_lower = if spec.sign == Sign::Minimize {
        match baseline_lower_bound(&spec, &sys) {
            Ok(v) => Some(v),
            Err(Error::UnsupportedBaselineSpec) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let report = BoundsReport {
        manifest: Manifest {
            command: "bounds",
            data: Some(display_path(&args.data)),
            spec: Some(spec_value(&spec)),
            arm_order,
            max_support: args.max_support,
            ..solver_manifest(&args.solver, args.max_iters)
        },
        arms: labels,
        dim: sys.dim(),
        support_sizes: support_sizes(&sys),
        interval: interval_from_solves(&lower_res, &upper_res, spec.label()),
        baseline_lower,
        lower_solve: SolveSummary::of(&lower_res),
        upper_solve: SolveSummary::of(&upper_res),
    };
    emit(args.solver.out.as_deref(), &render_json(&report))
}

fn cmd_synth_gaussian(args: SynthGaussianArgs) -> Result<(), Error> {
    let sigmas = parse_f64_list(&args.sigmas, "sigmas")?;
    let reference = oracle::gaussian_mw2(&sigmas)?;
    let sys = maybe_compress(gaussian_system(&sigmas, args.n, args.seed)?, args.max_support)?;
    let spec = CostSpec::new(CostKind::Mw2);
    let manifest = Manifest {
        command: "synth-gaussian",
        sigmas: Some(sigmas),
        n: Some(args.n),
        seed: Some(args.seed),
        max_support: Some(args.max_support),
        ..solver_manifest(&args.solver, args.max_iters)
    };
    run_synth(manifest, spec, sys, reference, &args.solver, args.max_iters, args.trace)
}

fn cmd_synth_gaussian2d(args: SynthGaussian2dArgs) -> Result<(), Error> {
    let reference = two_dim_experiment_analytic();
    let sys = maybe_compress(two_dim_experiment_system(args.n, args.seed)?, args.max_support)?;
    let spec = CostSpec::new(CostKind::Contrast(TWO_DIM_CONTRAST.to_vec()));
    let manifest = Manifest {
        command: "synth-gaussian2d",
        n: Some(args.n),
        seed: Some(args.seed),
        max_support: Some(args.max_support),
        ..solver_manifest(&args.solver, args.max_iters)
    };
    run_synth(manifest, spec, sys, reference, &args.solver, args.max_iters, args.trace)
}

/// Shared tail of the synthetic commands: solve the minimize direction,
/// take the certified endpoint, and report it against the reference value.
fn run_synth(
    manifest: Manifest,
    spec: CostSpec,
    sys: MarginalSystem,
    reference: f64,
    opts: &SolverOpts,
    max_iters: u64,
    trace: Option<PathBuf>,
) -> Result<(), Error> {
    let algorithm = Algorithm::from_str(&opts.algorithm)?;
    let cfg = solver_config(opts, max_iters, trace.is_some());
    let cost = build_cost_tensor(&spec, &sys)?;
    let res = solve(algorithm, &cost, &sys, &cfg)?;
    if let Some(path) = &trace {
        write_trace(path, &[("lower", &res)])?;
    }
    let (empirical_lower, certificate) = endpoint(&res);
    let report = SynthReport {
        manifest,
        estimand: spec.label(),
        closed_form: reference,
        empirical_lower,
        gap: reference - empirical_lower,
        dual_bound: certificate.dual_bound,
        support_sizes: support_sizes(&sys),
        solve: SolveSummary::of(&res),
    };
    emit(opts.out.as_deref(), &render_json(&report))
}

fn cmd_neyman(args: NeymanArgs) -> Result<(), Error> {
    let arm_order = parse_labels(args.arms.as_deref())?;
    let arms = load_arm_data(&args.data, arm_order.as_deref())?;
    let mut labels = Vec::with_capacity(arms.len());
    let mut outcomes: Vec<Vec<f64>> = Vec::with_capacity(arms.len());
    for arm in arms {
        if arm.outcomes.iter().any(|p| p.len() != 1) {
            return Err(Error::InvalidArgument(format!(
                "arm '{}' has multi-dimensional outcomes; neyman needs a single y1 column",
                arm.label
            )));
        }
        labels.push(arm.label);
        outcomes.push(arm.outcomes.into_iter().map(|p| p[0]).collect());
    }
    let beta = parse_f64_list(&args.beta, "beta")?;
    let weight_sum: f64 = beta.iter().sum();
    if weight_sum.abs() > 1e-12 {
        eprintln!(
            "warning: contrast weights sum to {weight_sum}; \
             the variance decomposition assumes they sum to zero"
        );
    }
    let algorithm = Algorithm::from_str(&args.solver.algorithm)?;
    let cfg = solver_config(&args.solver, args.max_iters, false);
    let (result, solve) = neyman_ci_detailed(algorithm, &outcomes, &beta, &cfg, args.alpha)?;
    let report = NeymanReport {
        manifest: Manifest {
            command: "neyman",
            data: Some(display_path(&args.data)),
            arm_order,
            beta: Some(beta),
            alpha: Some(args.alpha),
            ..solver_manifest(&args.solver, args.max_iters)
        },
        arm_sizes: outcomes.iter().map(Vec::len).collect(),
        arms: labels,
        result,
        solve,
    };
    emit(args.solver.out.as_deref(), &render_json(&report))
}

fn cmd_cov(args: CovArgs) -> Result<(), Error> {
    let (sys, labels) = load_marginals(&args.data, None)?;
    let find = |label: &str| -> Result<usize, Error> {
        labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownArm(label.into()))
    };
    let arms = (find(&args.treated)?, find(&args.control)?);
    let algorithm = Algorithm::from_str(&args.solver.algorithm)?;
    let cfg = solver_config(&args.solver, args.max_iters, false);

    if args.sweep {
        let d = sys.dim();
        if d < 2 {
            return Err(Error::InvalidArgument(
                "--sweep needs outcome dimension >= 2".into(),
            ));
        }
        let mut csv = String::from("j1,j2,lower,upper\n");
        for j1 in 1..=d {
            for j2 in (j1 + 1)..=d {
                let iv = covariance_bounds_with(algorithm, &sys, (j1, j2), arms, &cfg)?;
                csv.push_str(&format!("{j1},{j2},{},{}\n", iv.lower, iv.upper));
            }
        }
        return emit(args.solver.out.as_deref(), &csv);
    }

    let dims = parse_dims(&args.dims)?;
    let interval = covariance_bounds_with(algorithm, &sys, dims, arms, &cfg)?;
    let report = CovReport {
        manifest: Manifest {
            command: "cov",
            data: Some(display_path(&args.data)),
            treated: Some(args.treated.clone()),
            control: Some(args.control.clone()),
            dims: Some(dims),
            sweep: Some(false),
            ..solver_manifest(&args.solver, args.max_iters)
        },
        treated: args.treated,
        control: args.control,
        dims,
        interval,
    };
    emit(args.solver.out.as_deref(), &render_json(&report))
}

// ---- helpers -----------------------------------------------------------

fn solver_config(opts: &SolverOpts, max_iters: u64, record_trace: bool) -> SolverConfig {
    SolverConfig {
        epsilon: opts.eps,
        eta_override: opts.eta,
        max_iters,
        record_trace,
        mtv_check_every: 1,
    }
}

/// Manifest skeleton carrying the shared solver flags.
fn solver_manifest(opts: &SolverOpts, max_iters: u64) -> Manifest {
    Manifest {
        epsilon: opts.eps,
        eta_override: opts.eta,
        max_iters,
        algorithm: opts.algorithm.clone(),
        out: opts.out.as_ref().map(|p| p.display().to_string()),
        ..Manifest::default()
    }
}

fn support_sizes(sys: &MarginalSystem) -> Vec<usize> {
    sys.margins().iter().map(|m| m.len()).collect()
}

fn maybe_compress(sys: MarginalSystem, max_support: usize) -> Result<MarginalSystem, Error> {
    if max_support == 0 {
        Ok(sys)
    } else {
        sys.compressed_to(max_support)
    }
}

/// Canonical JSON form of the effective cost spec for the manifest.
fn spec_value(spec: &CostSpec) -> serde_json::Value {
    serde_json::from_str(&spec.to_json()).expect("cost spec JSON round-trips")
}

fn display_path(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn parse_labels(arg: Option<&str>) -> Result<Option<Vec<String>>, Error> {
    let Some(raw) = arg else { return Ok(None) };
    let labels: Vec<String> = raw.split(',').map(|s| s.trim().to_owned()).collect();
    if labels.iter().any(String::is_empty) {
        return Err(Error::InvalidArgument(format!(
            "empty label in arm list '{raw}'"
        )));
    }
    Ok(Some(labels))
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>, Error> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry '{}'", tok.trim())))
        })
        .collect()
}

fn parse_dims(raw: &str) -> Result<(usize, usize), Error> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "--dims wants 'j1,j2', got '{raw}'"
        )));
    }
    let parse = |tok: &str| -> Result<usize, Error> {
        tok.parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("bad coordinate '{tok}' in --dims")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?))
}

/// Accepts the spec presets "mw2" and "contrast:b1,b2,...", inline JSON
/// (anything starting with '{'), or "@path" naming a JSON file.
fn parse_spec_arg(raw: &str) -> Result<CostSpec, Error> {
    let trimmed = raw.trim();
    if let Some(path) = trimmed.strip_prefix('@') {
        return CostSpec::from_json(&fs::read_to_string(path)?);
    }
    if trimmed.starts_with('{') {
        return CostSpec::from_json(trimmed);
    }
    if trimmed == "mw2" {
        return Ok(CostSpec::new(CostKind::Mw2));
    }
    if let Some(rest) = trimmed.strip_prefix("contrast:") {
        return Ok(CostSpec::new(CostKind::Contrast(parse_f64_list(
            rest, "beta",
        )?)));
    }
    Err(Error::InvalidSpec(format!(
        "unrecognized spec '{trimmed}' (expected \"mw2\", \"contrast:b1,b2,...\", \
         inline JSON, or \"@file\")"
    )))
}

fn render_json(report: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    text.push('\n');
    text
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One JSONL line per recorded iteration, tagged with which endpoint solve
/// produced it. Upper-endpoint entries come from the sign-flipped solve, so
/// their `dual_bound` certifies the flipped program.
fn write_trace(path: &Path, parts: &[(&str, &SolveResult)]) -> Result<(), Error> {
    let mut buf = String::new();
    for (endpoint_name, res) in parts {
        let Some(entries) = &res.trace else { continue };
        for entry in entries {
            let mut value = serde_json::to_value(entry).expect("trace entry serializes");
            value
                .as_object_mut()
                .expect("trace entry is an object")
                .insert("endpoint".into(), json!(endpoint_name));
            buf.push_str(&serde_json::to_string(&value).expect("trace line serializes"));
            buf.push('\n');
        }
    }
    fs::write(path, buf)?;
    Ok(())
}
