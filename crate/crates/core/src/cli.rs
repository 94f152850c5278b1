//! Command-line front end.
//!
//! Exit codes: `0` success, `1` invalid input or a failed check, `2` a
//! filesystem error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{classify_final, trig_oracles, SummaryReport};
use crate::catalog::{
    exact_configuration, lambda_closed_form, r_infinity, solve_d5_rinf, verify_lambda_relation,
    SteadyStateSpec,
};
use crate::dynamics::{rhs, simulate, FrequencyKind, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::{
    align_to_axis, align_to_reference, hopf_map, random_unit_configuration, Configuration,
    UnitVector,
};
use crate::io::{emit_summary, emit_trajectory, read_state, write_state, RunConfig};
use crate::kernels::{dbody_drive_fast, dbody_drive_naive};
use crate::reduced::{
    compare_with_full, constants_from_initial, cubic_roots, evolve_reduced, ReducedState,
};

/// Environment variable bounding the sweep's worker threads.
pub const THREADS_ENV: &str = "SPHERE_SYNC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sphere-sync",
    version,
    about = "Synchronization of unit vectors under pairwise and d-body coupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation described by a JSON configuration.
    Simulate(SimulateArgs),
    /// Scan κ₂ at fixed κ_d and report the final order parameter.
    Sweep(SweepArgs),
    /// Check cataloged states, kernels and summation identities.
    Verify,
    /// Integrate the reduced three-node system.
    ReduceN3(ReduceArgs),
    /// Rotate a state so its average position points along the last axis.
    Align(StateArgs),
    /// Map a d = 4 state to S² through the Hopf fibration.
    Hopf(HopfArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Overrides the configuration's trajectory path.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Overrides the configuration's summary path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    kappa_d: f64,
    #[arg(long, allow_negative_numbers = true)]
    from: f64,
    #[arg(long, allow_negative_numbers = true)]
    to: f64,
    #[arg(long)]
    step: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000.0)]
    t_max: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = FrequencyArg::None)]
    frequency_kind: FrequencyArg,
    #[arg(long, default_value_t = 0.0)]
    frequency_magnitude: f64,
    #[arg(long, default_value_t = 0)]
    frequency_seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for one summary JSON per grid point.
    #[arg(long)]
    summaries: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FrequencyArg {
    None,
    D2Scalars,
    D3Vectors,
    GeneralMatrix,
}

impl From<FrequencyArg> for FrequencyKind {
    fn from(f: FrequencyArg) -> Self {
        match f {
            FrequencyArg::None => FrequencyKind::None,
            FrequencyArg::D2Scalars => FrequencyKind::D2Scalars,
            FrequencyArg::D3Vectors => FrequencyKind::D3Vectors,
            FrequencyArg::GeneralMatrix => FrequencyKind::GeneralMatrix,
        }
    }
}

#[derive(Debug, Args)]
struct ReduceArgs {
    /// Take `c₁`, `c₂`, `u` and the orientation from a three-node state.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, default_value_t = -0.75, allow_negative_numbers = true)]
    c1: f64,
    #[arg(long, default_value_t = 1.0 / 3.0, allow_negative_numbers = true)]
    c2: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    u0: f64,
    /// Sign of the initial triple product.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    orientation: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 5.0)]
    t_max: f64,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Also integrate the full system and add its columns.
    #[arg(long)]
    compare: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StateArgs {
    state: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HopfArgs {
    state: PathBuf,
    /// Rotate the state onto the cataloged torus of the same size before
    /// mapping; a torus then lands on the equator of S².
    #[arg(long)]
    align: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let shown = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{shown}");
                    0
                }
                _ => {
                    let _ = write!(err, "{shown}");
                    1
                }
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => run_simulate(&a, out),
        Command::Sweep(a) => run_sweep(&a, out),
        Command::Verify => run_verify(out),
        Command::ReduceN3(a) => run_reduce(&a, out, err),
        Command::Align(a) => run_align(&a, out),
        Command::Hopf(a) => run_hopf(&a, out),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn stdout_error(source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn emit_text(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => out.write_all(text.as_bytes()).map_err(stdout_error),
    }
}

/// Summary of one run: the classification plus integration bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    #[serde(flatten)]
    pub report: SummaryReport,
    pub converged: bool,
    pub steps: usize,
    pub dt: f64,
    pub max_norm_correction: f64,
}

/// Runs `config` and returns the summary without writing anything.
pub fn execute(config: &RunConfig) -> Result<(RunSummary, crate::dynamics::SimulationOutcome)> {
    let params = config.model()?;
    let initial = config.initial_configuration()?;
    let outcome = simulate(&initial, &params, &config.options())?;
    let report = classify_final(&outcome.record, &outcome.final_config, &params);
    let summary = RunSummary {
        report,
        converged: outcome.converged,
        steps: outcome.steps,
        dt: outcome.dt,
        max_norm_correction: outcome.record.max_norm_correction,
    };
    Ok((summary, outcome))
}

fn run_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<bool> {
    let config = RunConfig::load(&args.config)?;
    let (summary, outcome) = execute(&config)?;
    if let Some(p) = args
        .trajectory
        .as_ref()
        .or(config.output.trajectory.as_ref())
    {
        emit_trajectory(&outcome.record, p)?;
    }
    if let Some(p) = &config.output.final_state {
        write_state(&outcome.final_config, p)?;
    }
    match args.summary.as_ref().or(config.output.summary.as_ref()) {
        Some(p) => {
            emit_summary(&summary, p)?;
            writeln!(
                out,
                "{} r_inf={:.12} t={} steps={}",
                summary.report.classification.name(),
                summary.report.r_inf_measured,
                summary.report.final_time,
                summary.steps
            )
            .map_err(stdout_error)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            writeln!(out, "{text}").map_err(stdout_error)?;
        }
    }
    Ok(true)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub kappa2: f64,
    pub ratio: f64,
    pub r_inf: f64,
    /// Closed-form `r∞` of the equispaced family, when one exists.
    pub r_predicted: Option<f64>,
    pub summary: RunSummary,
}

/// Grid `from, from + step, …` up to `to` inclusive, with the last point
/// snapped to `to` when within rounding.
pub fn sweep_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && to >= from) {
        return Err(Error::InvalidParameter(format!(
            "sweep needs step > 0 and to >= from (got from = {from}, to = {to}, step = {step})"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| from + k as f64 * step).collect())
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v.parse().map_err(|_| {
            Error::InvalidParameter(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker threads: {e}")))
}

/// Runs every grid point from the same random start, in parallel, and
/// returns the points in grid order.
pub fn sweep(base: &RunConfig, kappa2_values: &[f64], seed: u64) -> Result<Vec<SweepPoint>> {
    let pool = worker_pool()?;
    pool.install(|| {
        kappa2_values
            .par_iter()
            .map(|&kappa2| {
                let mut config = base.clone();
                config.kappa2 = kappa2;
                config.initial = crate::io::InitialState::Random { seed };
                config.validate()?;
                let (summary, _) = execute(&config)?;
                Ok(SweepPoint {
                    kappa2,
                    ratio: kappa2 / config.kappa_d,
                    r_inf: summary.report.r_inf_measured,
                    r_predicted: r_infinity(config.d, config.n, kappa2, config.kappa_d).ok(),
                    summary,
                })
            })
            .collect()
    })
}

fn run_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<bool> {
    let grid = sweep_grid(args.from, args.to, args.step)?;
    let mut base = RunConfig::new(
        args.d,
        args.n,
        0.0,
        args.kappa_d,
        crate::io::InitialState::Random { seed: args.seed },
    );
    base.t_max = args.t_max;
    base.dt = args.dt;
    base.frequencies = crate::io::FrequencySpec {
        kind: args.frequency_kind.into(),
        magnitude: args.frequency_magnitude,
        seed: args.frequency_seed,
    };
    base.validate()?;
    let points = sweep(&base, &grid, args.seed)?;

    let mut csv =
        String::from("kappa2,ratio,r_inf,r_predicted,classification,converged,final_time\n");
    for (k, p) in points.iter().enumerate() {
        let predicted = p
            .r_predicted
            .map(|r| format!("{r:.16e}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{},{},{},{:.16e}\n",
            p.kappa2,
            p.ratio,
            p.r_inf,
            predicted,
            p.summary.report.classification.name(),
            p.summary.converged,
            p.summary.report.final_time
        ));
        if let Some(dir) = &args.summaries {
            emit_summary(&p.summary, &dir.join(format!("point_{k:04}.json")))?;
        }
    }
    emit_text(&csv, args.output.as_deref(), out)?;
    Ok(true)
}

/// Outcome of one `verify` check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const STEADY_TOLERANCE: f64 = 1e-9;
const LAMBDA_TOLERANCE: f64 = 1e-8;

fn verification_specs() -> Vec<SteadyStateSpec> {
    let mut specs = Vec::new();
    for n in [2, 3, 7, 16] {
        specs.push(SteadyStateSpec::d2_splay(n, 0.3));
    }
    for alpha in [0.5, 1.5, -1.0] {
        specs.push(SteadyStateSpec::d2_combined(9, alpha, 0.0));
    }
    for n in [3, 10, 40] {
        specs.push(SteadyStateSpec::d3_ring(n));
    }
    for r in [0.7, 0.896] {
        specs.push(SteadyStateSpec::d3_combined(40, r));
    }
    for n in [4, 8, 40] {
        specs.push(SteadyStateSpec::d4_torus(n));
    }
    for n in [5, 12, 40] {
        specs.push(SteadyStateSpec::d5_ring(n));
    }
    if let Some(r) = solve_d5_rinf(
        12,
        0.5 * crate::catalog::critical_ratio(5, 12).unwrap_or(0.0),
    ) {
        specs.push(SteadyStateSpec::d5_combined(12, r));
    }
    for d in 2..=6 {
        specs.push(SteadyStateSpec::basis(d));
    }
    let reflected: Vec<_> = specs
        .iter()
        .filter(|s| s.d != 2)
        .map(|s| s.clone().with_reflection(true))
        .collect();
    specs.extend(reflected);
    specs
}

fn check_spec(spec: &SteadyStateSpec) -> Result<Check> {
    let config = exact_configuration(spec)?;
    let (l1, l2) =
        lambda_closed_form(spec).ok_or_else(|| Error::Unsupported(spec.family.name().into()))?;
    let fit = verify_lambda_relation(&config)?;
    let scale = l1.abs().max(l2.abs()).max(1.0);
    let lambda_err = ((fit.lambda1 - l1).abs()).max((fit.lambda2 - l2).abs()) / scale;
    // the couplings that make this member static
    let kappa_d = if spec.reflected { -1.0 } else { 1.0 };
    let kappa2 = l2 * kappa_d / (spec.n as f64).powi(spec.d as i32 - 1);
    let params = ModelParams::new(spec.d, spec.n, kappa2, kappa_d)?;
    let speed = rhs(&config, &params)?
        .as_flat()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let passed = fit.residual < LAMBDA_TOLERANCE
        && lambda_err < LAMBDA_TOLERANCE
        && speed < STEADY_TOLERANCE;
    Ok(Check {
        name: format!(
            "steady {} d={} N={}{}",
            spec.family.name(),
            spec.d,
            spec.n,
            if spec.reflected { " reflected" } else { "" }
        ),
        passed,
        detail: format!(
            "lambda=({:.6}, {:.6}) residual={:.1e} closed-form error={:.1e} |rhs|={:.1e}",
            fit.lambda1, fit.lambda2, fit.residual, lambda_err, speed
        ),
    })
}

/// All `verify` checks.
pub fn verification_checks() -> Vec<Check> {
    let mut checks: Vec<Check> = verification_specs()
        .iter()
        .map(|s| {
            check_spec(s).unwrap_or_else(|e| Check {
                name: format!("steady {} d={} N={}", s.family.name(), s.d, s.n),
                passed: false,
                detail: e.to_string(),
            })
        })
        .collect();

    for d in 2..=5 {
        let mut worst = 0.0f64;
        let mut seed = 0;
        for n in d..=(d + 7).min(12) {
            for _ in 0..5 {
                seed += 1;
                let c =
                    random_unit_configuration(d, n, 1000 * d as u64 + seed).expect("valid sizes");
                let fast = dbody_drive_fast(&c).expect("valid sizes");
                let naive = dbody_drive_naive(&c).expect("valid sizes");
                worst = worst.max(fast.relative_deviation(&naive));
            }
        }
        checks.push(Check {
            name: format!("kernels d={d}"),
            passed: worst < 1e-10,
            detail: format!("max relative deviation {worst:.1e}"),
        });
    }

    for row in trig_oracles().rows {
        checks.push(Check {
            name: format!("identity {}", row.name),
            passed: row.passed,
            detail: format!("{} cases, max residual {:.1e}", row.cases, row.max_residual),
        });
    }
    checks
}

fn run_verify(out: &mut dyn Write) -> Result<bool> {
    let checks = verification_checks();
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        writeln!(
            out,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )
        .map_err(stdout_error)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(out, "{} checks, {} failed", checks.len(), failed).map_err(stdout_error)?;
    Ok(all)
}

fn run_reduce(args: &ReduceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    let (start, full) = match &args.state {
        Some(p) => {
            let c = read_state(p)?;
            if c.dim() != 3 || c.len() != 3 {
                return Err(Error::InvalidParameter(format!(
                    "{}: reduce-n3 needs three nodes in d = 3",
                    p.display()
                )));
            }
            (
                constants_from_initial(c.node(0), c.node(1), c.node(2))?,
                Some(c),
            )
        }
        None => {
            let s = ReducedState::on_shell(args.u0, args.c1, args.c2, args.orientation)?;
            let c = crate::reduced::triple_from_invariants(s.u, s.c1, s.c2, args.orientation)?;
            (s, Some(c))
        }
    };
    let roots = cubic_roots(start.c1, start.c2);
    writeln!(
        err,
        "c1={} c2={} roots r-={:.12} r+={:.12}",
        start.c1, start.c2, roots.r_minus, roots.r_plus
    )
    .map_err(stdout_error)?;

    let mut csv = String::new();
    match (args.compare, full) {
        (true, Some(c)) => {
            let cmp = compare_with_full(&c, args.dt, args.t_max, args.stride)?;
            csv.push_str("t,u,x123,u_full,x123_full\n");
            for s in &cmp.samples {
                csv.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    s.t, s.u_reduced, s.x123_reduced, s.u_full, s.x123_full
                ));
            }
        }
        _ => {
            let tr = evolve_reduced(&start, args.dt, args.t_max, args.stride)?;
            csv.push_str("t,u,x123\n");
            for k in 0..tr.t.len() {
                csv.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e}\n",
                    tr.t[k], tr.u[k], tr.x123[k]
                ));
            }
        }
    }
    emit_text(&csv, args.output.as_deref(), out)?;
    Ok(true)
}

fn emit_state(config: &Configuration, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_state(config, p),
        None => {
            let text = serde_json::json!({ "d": config.dim(), "nodes": config.to_nested() });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&text).expect("state serializes")
            )
            .map_err(stdout_error)
        }
    }
}

fn run_align(args: &StateArgs, out: &mut dyn Write) -> Result<bool> {
    let config = read_state(&args.state)?;
    let (_, aligned) = align_to_axis(&config)?;
    emit_state(&aligned, args.output.as_deref(), out)?;
    Ok(true)
}

fn run_hopf(args: &HopfArgs, out: &mut dyn Write) -> Result<bool> {
    let mut config = read_state(&args.state)?;
    if config.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: config.dim(),
        });
    }
    if args.align {
        let torus = exact_configuration(&SteadyStateSpec::d4_torus(config.len()))?;
        config = align_to_reference(&config, &torus)?.1;
    }
    let images = config
        .nodes()
        .map(|x| hopf_map(&UnitVector::new(x.to_vec())?).map(UnitVector::into_inner))
        .collect::<Result<Vec<_>>>()?;
    emit_state(&Configuration::new(3, images)?, args.output.as_deref(), out)?;
    Ok(true)
}
