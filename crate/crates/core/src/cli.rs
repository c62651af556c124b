//! Command-line front end. [`run`] executes one parsed invocation against a
//! writer and returns the process exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::calibrate::{fit, FitOptions, MomentGrid, NelderMeadOptions, ParamRef};
use crate::error::{AjdError, Result};
use crate::io::{read_path_csv, write_transform_csv, PathCsvWriter};
use crate::limits::{
    closed_form_mean, ergodic_run, fclt_diagnostic, skeleton_report, ErgodicRunConfig, FcltConfig, HFunction,
    SCHEMA_VERSION,
};
use crate::model::{ModelSpec, ValidationReport};
use crate::riccati::{solve_transform, TransformOptions};
use crate::simulate::{
    escape_fractions, first_passage_times, simulate_path_stream, simulate_skeleton, simulate_skeleton_stream,
    DEFAULT_DT,
};
use crate::stability::{classify, transience_search, StabilityReport, DEFAULT_MOMENT_ORDER};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ajd", version, about = "Affine jump-diffusion stability, simulation and calibration toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a spec and classify its long-run behaviour.
    Check(CheckArgs),
    /// Simulate paths (or equally spaced skeletons with --delta) to CSV.
    Simulate(SimulateArgs),
    /// Solve the transform ODE and write phi, psi on the time grid as CSV.
    Transform(TransformArgs),
    /// Long-run time or skeleton average with a batch-means interval.
    Stationary(StationaryArgs),
    /// Replicate diagnostics for the central limit of time integrals.
    Fclt(FcltArgs),
    /// Transience rate search and escape-fraction series (1-D).
    Transience(TransienceArgs),
    /// Fit free parameters to skeleton data by the method of moments.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    /// Moment order used by the classification.
    #[arg(long, default_value_t = DEFAULT_MOMENT_ORDER)]
    pub p: f64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub x0: Vec<f64>,
    /// Time horizon.
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Record only the states at multiples of this interval.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    /// Argument vector, e.g. `0+1i` or `0.5i,-0.2+0i`.
    #[arg(long, allow_hyphen_values = true)]
    pub u: String,
    /// Time horizon.
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Accept arguments with nonzero real part.
    #[arg(long)]
    pub allow_real: bool,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StationaryArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    /// Initial state; defaults to the closed-form stationary mean.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 1000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// `identity`, `pow:<i>:<p>` or `box:<lower>:<upper>`.
    #[arg(long, default_value = "identity")]
    pub h: HFunction,
    #[arg(long, default_value_t = 0.0)]
    pub burn_in: f64,
    #[arg(long)]
    pub batches: Option<usize>,
    /// Average over the skeleton at this spacing instead of in continuous time.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comparison value; defaults to the closed-form mean for `identity`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub target: Option<Vec<f64>>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FcltArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    /// Initial state; defaults to the closed-form stationary mean.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, default_value = "identity")]
    pub h: HFunction,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 320.0)]
    pub horizon: f64,
    /// Number of blocks (power of two) for the variance-scaling fit.
    #[arg(long, default_value_t = 16)]
    pub blocks: usize,
    #[arg(long, default_value_t = 10.0)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransienceArgs {
    /// Model spec (JSON).
    pub spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub x0: Vec<f64>,
    /// Largest epsilon tried in the rate search.
    #[arg(long, default_value_t = 1.0)]
    pub eps_max: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Escape level for the first-passage times.
    #[arg(long, default_value_t = 100.0)]
    pub level: f64,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 50.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    /// Number of equally spaced times in the escape-fraction series.
    #[arg(long, default_value_t = 10)]
    pub times: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Path CSV with equally spaced observations.
    pub data: PathBuf,
    /// Spec JSON providing fixed values and starting points.
    pub template: PathBuf,
    /// Free parameters, e.g. `beta` or `beta[1,1],b[1]`.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub free: Vec<String>,
    /// Frequency multipliers along each coordinate.
    #[arg(long, value_delimiter = ',', default_values_t = crate::calibrate::DEFAULT_SCALES)]
    pub grid: Vec<f64>,
    /// Which path of the data file to use; defaults to the first.
    #[arg(long)]
    pub path_id: Option<u64>,
    #[arg(long, default_value_t = 600)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Caps the global worker pool at `AJD_THREADS` when that is set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("AJD_THREADS") {
        let n: usize =
            v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
                AjdError::InvalidArgument(format!("AJD_THREADS must be a positive integer, got '{v}'"))
            })?;
        // a pool that is already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Exit code for an error: 2 for bad input or unmet preconditions, 1 for
/// I/O, 3 for numerical failure.
pub fn exit_code(e: &AjdError) -> i32 {
    match e {
        AjdError::Io(_) => EXIT_IO,
        e if e.is_validation() => EXIT_VALIDATION,
        AjdError::Gate(_) => EXIT_VALIDATION,
        _ => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name) and runs; usage errors go to
/// `err` with exit code 2.
pub fn run_from_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            code
        }
    }
}

/// Runs one invocation; artifacts go to `--out` when given, else to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Err(e) = configure_threads() {
        let _ = writeln!(err, "error: {e}");
        return exit_code(&e);
    }
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Transform(a) => cmd_transform(a, out),
        Command::Stationary(a) => cmd_stationary(a, out),
        Command::Fclt(a) => cmd_fclt(a, out),
        Command::Transience(a) => cmd_transience(a, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn load_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)?;
    ModelSpec::from_json(&text)
}

/// Loads a spec and fails with a validation error unless it is admissible.
fn load_admissible(path: &Path) -> Result<ModelSpec> {
    let spec = load_spec(path)?;
    spec.require_admissible()?;
    Ok(spec)
}

/// Streams an artifact either into the `--out` file or the given writer.
fn emit<F>(target: &Option<PathBuf>, out: &mut dyn Write, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match target {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            body(&mut f)?;
            f.flush()?;
        }
        None => {
            body(out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(target: &Option<PathBuf>, out: &mut dyn Write, value: &T) -> Result<()> {
    emit(target, out, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    schema_version: u32,
    validation: ValidationReport,
    stability: Option<StabilityReport>,
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(&a.spec)?;
    let validation = spec.validate()?;
    let stability = if validation.admissible { Some(classify(&spec, a.p)?) } else { None };
    let code = if validation.admissible { EXIT_OK } else { EXIT_VALIDATION };
    emit_json(&a.out, out, &CheckOutput { schema_version: SCHEMA_VERSION, validation, stability })?;
    Ok(code)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_admissible(&a.spec)?;
    spec.check_state(&a.x0)?;
    if a.paths == 0 {
        return Err(AjdError::InvalidArgument("--paths must be at least 1".into()));
    }
    emit(&a.out, out, |w| {
        let mut csv = PathCsvWriter::new(w, spec.d)?;
        for k in 0..a.paths as u64 {
            match a.delta {
                Some(delta) => {
                    if !(delta > 0.0) {
                        return Err(AjdError::InvalidArgument(format!("--delta must be positive, got {delta}")));
                    }
                    let n = (a.horizon / delta + 1e-9).floor() as usize;
                    let sk = simulate_skeleton_stream(&spec, &a.x0, delta, n, a.dt.min(delta), a.seed, k)?;
                    csv.skeleton(k, &sk)?;
                }
                None => csv.path(&simulate_path_stream(&spec, &a.x0, a.horizon, a.dt, a.seed, k)?)?,
            }
        }
        csv.finish()
    })?;
    Ok(EXIT_OK)
}

/// Parses one complex number: `a`, `bi`, `a+bi`, `a-bi` (`j` also accepted).
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || AjdError::Parse(format!("bad complex number '{s}'"));
    if t.is_empty() {
        return Err(bad());
    }
    let num = |v: &str| -> Result<f64> {
        match v {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            v => v.parse().map_err(|_| bad()),
        }
    };
    let Some(body) = t.strip_suffix('i').or_else(|| t.strip_suffix('j')) else {
        return Ok(Complex64::new(t.parse().map_err(|_| bad())?, 0.0));
    };
    // split at the last sign that is not the leading one or part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => Ok(Complex64::new(body[..k].parse().map_err(|_| bad())?, num(&body[k..])?)),
        None => Ok(Complex64::new(0.0, num(body)?)),
    }
}

pub fn parse_complex_list(s: &str) -> Result<Vec<Complex64>> {
    s.split(',').map(parse_complex).collect()
}

fn cmd_transform(a: &TransformArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_admissible(&a.spec)?;
    let u = parse_complex_list(&a.u)?;
    let opts = TransformOptions { dt: a.dt, allow_real: a.allow_real };
    let sol = solve_transform(&spec, &u, a.horizon, opts)?;
    emit(&a.out, out, |w| write_transform_csv(w, &sol))?;
    Ok(EXIT_OK)
}

fn default_x0(spec: &ModelSpec, given: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    match given {
        Some(x) => Ok(x.clone()),
        None => {
            let v = closed_form_mean(spec).map_err(|e| {
                AjdError::InvalidArgument(format!("no closed-form mean to start from ({e}); pass --x0"))
            })?;
            // keep volatility factors inside the state space
            Ok(v.iter().enumerate().map(|(i, x)| if i < spec.m { x.max(0.0) } else { *x }).collect())
        }
    }
}

fn cmd_stationary(a: &StationaryArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_admissible(&a.spec)?;
    let x0 = default_x0(&spec, &a.x0)?;
    let target = match (&a.target, &a.h) {
        (Some(t), _) => Some(t.clone()),
        (None, HFunction::Identity) => closed_form_mean(&spec).ok().map(|v| v.iter().copied().collect()),
        _ => None,
    };
    let report = match a.delta {
        Some(delta) => {
            if !(delta > 0.0) {
                return Err(AjdError::InvalidArgument(format!("--delta must be positive, got {delta}")));
            }
            let n = (a.horizon / delta).floor() as usize;
            let skel = simulate_skeleton(&spec, &x0, delta, n, a.dt.min(delta), a.seed)?;
            skeleton_report(&skel, &a.h, a.batches, target)?
        }
        None => {
            let mut cfg = ErgodicRunConfig::new(x0, a.horizon, a.dt, a.seed);
            cfg.burn_in = a.burn_in;
            cfg.nbatches = a.batches;
            ergodic_run(&spec, &a.h, &cfg, target)?
        }
    };
    emit_json(&a.out, out, &report)?;
    Ok(EXIT_OK)
}

fn cmd_fclt(a: &FcltArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_admissible(&a.spec)?;
    let x0 = default_x0(&spec, &a.x0)?;
    let cfg = FcltConfig {
        h: a.h.clone(),
        x0,
        replicates: a.replicates,
        horizon: a.horizon,
        nblocks: a.blocks,
        burn_in: a.burn_in,
        dt: a.dt,
        seed: a.seed,
    };
    emit_json(&a.out, out, &fclt_diagnostic(&spec, &cfg)?)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TransienceOutput {
    schema_version: u32,
    classification: String,
    /// Maximizer of the rate over the search grid.
    epsilon: f64,
    /// Rate at `epsilon`; positive means transience was detected.
    rate: f64,
    transient: bool,
    level: f64,
    paths: usize,
    times: Vec<f64>,
    escape_fractions: Vec<f64>,
}

fn cmd_transience(a: &TransienceArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_admissible(&a.spec)?;
    let classification = classify(&spec, DEFAULT_MOMENT_ORDER)?.classification.label().to_string();
    let (epsilon, rate) = transience_search(&spec, a.eps_max, a.points)?;
    if a.times == 0 {
        return Err(AjdError::InvalidArgument("--times must be at least 1".into()));
    }
    let passages = first_passage_times(&spec, &a.x0, a.level, a.horizon, a.dt, a.paths, a.seed)?;
    let times: Vec<f64> = (1..=a.times).map(|k| a.horizon * k as f64 / a.times as f64).collect();
    let fractions = escape_fractions(&passages, &times);
    emit_json(
        &a.out,
        out,
        &TransienceOutput {
            schema_version: SCHEMA_VERSION,
            classification,
            epsilon,
            rate,
            transient: rate > 0.0,
            level: a.level,
            paths: a.paths,
            times,
            escape_fractions: fractions,
        },
    )?;
    Ok(EXIT_OK)
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<i32> {
    let template = load_admissible(&a.template)?;
    let table = read_path_csv(File::open(&a.data)?)?;
    let path_id = match a.path_id {
        Some(p) => p,
        None => *table.path_ids().first().ok_or_else(|| AjdError::InsufficientData("data file has no rows".into()))?,
    };
    let data = table.skeleton(path_id)?;
    let free = a.free.iter().filter(|s| !s.trim().is_empty()).map(|s| s.parse()).collect::<Result<Vec<ParamRef>>>()?;
    let grid = MomentGrid::from_scales(template.d, data.delta, &a.grid)?;
    let opts = FitOptions {
        optimizer: NelderMeadOptions {
            max_evaluations: a.max_evals,
            restarts: a.restarts,
            seed: a.seed,
            ..Default::default()
        },
        weight: None,
    };
    emit_json(&a.out, out, &fit(&data, &template, &free, &grid, &opts)?)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        let c = |re, im| Complex64::new(re, im);
        assert_eq!(parse_complex("0+1i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("0.5").unwrap(), c(0.5, 0.0));
        assert_eq!(parse_complex("-2.5i").unwrap(), c(0.0, -2.5));
        assert_eq!(parse_complex("1e-3-2j").unwrap(), c(1e-3, -2.0));
        assert_eq!(parse_complex("-1-1e-2i").unwrap(), c(-1.0, -1e-2));
        assert_eq!(parse_complex_list("1i, 0.2").unwrap(), vec![c(0.0, 1.0), c(0.2, 0.0)]);
        assert!(parse_complex("x").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&AjdError::NotAdmissible("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&AjdError::Gate("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&AjdError::Unstable(1.0)), EXIT_NUMERIC);
        assert_eq!(exit_code(&AjdError::Io(std::io::Error::other("x"))), EXIT_IO);
    }

    #[test]
    fn usage_error_is_validation() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run_from_args(["ajd", "simulate"], &mut o, &mut e), EXIT_VALIDATION);
        assert!(!e.is_empty());
        assert_eq!(run_from_args(["ajd", "--help"], &mut o, &mut e), EXIT_OK);
    }
}
