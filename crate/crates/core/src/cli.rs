//! Command-line front end.
//!
//! Exit codes: 0 success, 1 check or runtime failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::estimators::EstimatorSpec;
use crate::montecarlo::presets::Figure;
use crate::montecarlo::{
    appendix_sweep, mc_matrix_risk, mc_sure_agreement_for, run_sweep, Grid, MatrixRiskEstimate, MeanSpec, SweepSpec,
    DEFAULT_REPS,
};
use crate::output::{write_appendix_csv, write_sweep_table_csv};
use crate::spectral::ProblemDims;
use crate::verify::{run_verify, VerifyConfig, VerifyReport};
use crate::Mat;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "orthoshrink", version, about = "Singular-value shrinkage of a normal mean matrix: risk formulas and Monte Carlo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the finite-difference and identity check suite.
    Verify(VerifyArgs),
    /// Monte Carlo matrix risk of one estimator at one mean.
    Risk(RiskArgs),
    /// Risk sweep along one singular value of the mean.
    Sweep(SweepArgs),
    /// Largest risk eigenvalue of Stein's estimator across n.
    Appendix(AppendixArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed.
    #[arg(long, env = "ORTHOSHRINK_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Problem size as NxP.
    #[arg(long, default_value = "10x3")]
    pub dims: ProblemDims,
    /// Random observations per derivative check.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Random inputs per identity check.
    #[arg(long, default_value_t = 10_000)]
    pub identity_trials: usize,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Singular values of the mean, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sigma: Vec<f64>,
    #[arg(long)]
    pub estimator: String,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Named preset (1-left .. 4-right).
    #[arg(long, conflicts_with_all = ["n", "p", "sigma", "estimator", "axis", "grid"])]
    pub figure: Option<Figure>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Singular values held fixed; the swept entry is overwritten.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Estimator labels, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub estimator: Option<Vec<String>>,
    /// 1-based index of the swept singular value.
    #[arg(long, default_value_t = 1)]
    pub axis: usize,
    /// Grid as start:stop:step.
    #[arg(long)]
    pub grid: Option<GridArg>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AppendixArgs {
    /// Named preset (appendix-left or appendix-right).
    #[arg(long, conflicts_with_all = ["p", "n", "sigma"])]
    pub figure: Option<Figure>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Range of n as LO..HI (inclusive).
    #[arg(long)]
    pub n: Option<NRange>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridArg(pub Grid);

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad grid component `{t}`"));
        match parts.as_slice() {
            [a, b, c] => Ok(GridArg(Grid {
                start: parse(a)?,
                stop: parse(b)?,
                step: parse(c)?,
            })),
            [a] => {
                let v = parse(a)?;
                Ok(GridArg(Grid { start: v, stop: v, step: 1.0 }))
            }
            _ => Err("expected start:stop:step".into()),
        }
    }
}

/// Inclusive integer range written `LO..HI`; a single integer is a one-point range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NRange(pub RangeInclusive<usize>);

impl FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad bound `{t}`"));
        let (lo, hi) = match s.split_once("..") {
            Some((lo, hi)) => (parse(lo)?, parse(hi.trim_start_matches('='))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        Ok(NRange(lo..=hi))
    }
}

/// Output of the `risk` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub n: usize,
    pub p: usize,
    pub sigma: Vec<f64>,
    pub estimator: String,
    pub estimate: MatrixRiskEstimate,
    /// Average of the analytic unbiased risk estimate over the same number
    /// of draws; absent for estimators without a closed form.
    #[serde(with = "opt_mat_rows", default)]
    pub mean_sure: Option<Mat>,
    pub mean_sure_frobenius: Option<f64>,
}

mod opt_mat_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Mat;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|rows| {
            let ncols = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(serde::de::Error::custom("ragged matrix rows"));
            }
            Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
        })
        .transpose()
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self { code: EXIT_FAILURE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidDims(_)
            | Error::Shape { .. }
            | Error::InvalidCoefficients(_)
            | Error::UnknownEstimator { .. }
            | Error::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Reports go to `stdout` unless `--out` is given; diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Verify(a) => &a.common,
        Command::Risk(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Appendix(a) => &a.common,
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> CmdResult {
    let threads = common(&cmd).threads;
    match threads {
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
            let mut buf = Vec::new();
            let code = pool.install(|| execute(cmd, &mut buf));
            stdout
                .write_all(&buf)
                .map_err(|e| Failure::runtime(format!("write: {e}")))?;
            code
        }
        None => execute(cmd, stdout),
    }
}

fn execute(cmd: Command, stdout: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Risk(a) => cmd_risk(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Appendix(a) => cmd_appendix(a, stdout),
    }
}

fn with_output(out: &Option<PathBuf>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> crate::Result<()>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w).map_err(|e| Failure::runtime(e.to_string()))?;
            w.flush().map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
        }
        None => f(stdout).map_err(|e| Failure::runtime(e.to_string())),
    }
}

fn io_err(e: io::Error) -> Error {
    Error::Io(format!("write: {e}"))
}

fn write_json<T: Serialize>(value: &T, w: &mut dyn Write) -> crate::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(format!("json: {e}")))?;
    writeln!(w).map_err(io_err)
}

fn pick_format(requested: Option<Format>, default: Format, allowed: &[Format], cmd: &str) -> Result<Format, Failure> {
    let f = requested.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Failure::usage(format!("`{cmd}` does not support --format {f:?}").to_lowercase()))
    }
}

pub fn write_verify_text(report: &VerifyReport, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "verify {} seed {}", report.dims, report.seed)?;
    for c in &report.checks {
        writeln!(
            w,
            "{:<4} {:<32} max_error {:>10.3e}  tolerance {:>8.1e}  samples {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance,
            c.samples
        )?;
    }
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        writeln!(w, "all {} checks passed", report.checks.len())
    } else {
        writeln!(w, "failed: {}", failed.join(", "))
    }
}

fn cmd_verify(a: VerifyArgs, stdout: &mut dyn Write) -> CmdResult {
    let format = pick_format(a.common.format, Format::Text, &[Format::Text, Format::Json], "verify")?;
    if a.trials == 0 || a.identity_trials == 0 {
        return Err(Failure::usage("trial counts must be positive"));
    }
    if let Some(name) = &a.inject_fault {
        let known = crate::verify::DERIVATIVE_CHECKS.iter().chain(crate::verify::IDENTITY_CHECKS.iter());
        if !known.clone().any(|c| c == name) {
            return Err(Failure::usage(format!("unknown check `{name}`")));
        }
    }
    let cfg = VerifyConfig {
        dims: a.dims,
        fd_trials: a.trials,
        identity_trials: a.identity_trials,
        seed: a.common.seed,
        fault: a.inject_fault,
    };
    let report = run_verify(&cfg);
    with_output(&a.common.out, stdout, |w| match format {
        Format::Json => write_json(&report, w),
        _ => write_verify_text(&report, w).map_err(io_err),
    })?;
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_FAILURE })
}

fn risk_record(a: &RiskArgs) -> Result<RiskRecord, Failure> {
    let dims = ProblemDims::new(a.n, a.p)?;
    let est = EstimatorSpec::from_label(&a.estimator, dims)?;
    let mean = MeanSpec::new(dims, a.sigma.clone())?;
    let estimate = mc_matrix_risk(&mean, &est, a.reps, a.common.seed)?;
    let (mean_sure, mean_sure_frobenius) = if est.has_analytic_sure() {
        let agreement = mc_sure_agreement_for(&mean, &est, a.reps, a.common.seed)?;
        let tr = agreement.mean_sure.trace();
        (Some(agreement.mean_sure), Some(tr))
    } else {
        (None, None)
    };
    Ok(RiskRecord {
        n: a.n,
        p: a.p,
        sigma: a.sigma.clone(),
        estimator: est.label,
        estimate,
        mean_sure,
        mean_sure_frobenius,
    })
}

fn write_matrix(w: &mut dyn Write, m: &Mat) -> io::Result<()> {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.5}")).collect();
        writeln!(w, "  {}", cells.join(" "))?;
    }
    Ok(())
}

pub fn write_risk_text(r: &RiskRecord, w: &mut dyn Write) -> io::Result<()> {
    let e = &r.estimate;
    writeln!(w, "estimator {}  n {}  p {}  sigma {:?}", r.estimator, r.n, r.p, r.sigma)?;
    writeln!(w, "reps {}  seed {}  rejects {}", e.reps, e.seed, e.rejects)?;
    writeln!(w, "frobenius risk {:.6} (se {:.6})", e.frobenius, e.frobenius_stderr)?;
    let eig: Vec<String> = e
        .eigenvalues
        .iter()
        .zip(&e.eigenvalue_se_proxy)
        .map(|(v, s)| format!("{v:.6} (se~{s:.6})"))
        .collect();
    writeln!(w, "risk eigenvalues {}", eig.join(", "))?;
    writeln!(w, "risk matrix")?;
    write_matrix(w, &e.mean)?;
    if let (Some(m), Some(tr)) = (&r.mean_sure, r.mean_sure_frobenius) {
        writeln!(w, "mean analytic risk estimate (trace {tr:.6})")?;
        write_matrix(w, m)?;
    }
    Ok(())
}

fn cmd_risk(a: RiskArgs, stdout: &mut dyn Write) -> CmdResult {
    let format = pick_format(a.common.format, Format::Text, &[Format::Text, Format::Json], "risk")?;
    let record = risk_record(&a)?;
    with_output(&a.common.out, stdout, |w| match format {
        Format::Json => write_json(&record, w),
        _ => write_risk_text(&record, w).map_err(io_err),
    })?;
    Ok(EXIT_OK)
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec, Failure> {
    if let Some(fig) = a.figure {
        return fig
            .sweep(a.reps, a.common.seed)
            .ok_or_else(|| Failure::usage(format!("`{fig}` is an appendix preset; use the appendix subcommand")));
    }
    let (Some(n), Some(p), Some(estimators), Some(GridArg(grid))) = (a.n, a.p, a.estimator.clone(), a.grid) else {
        return Err(Failure::usage("a custom sweep needs --n, --p, --estimator and --grid (or use --figure)"));
    };
    let dims = ProblemDims::new(n, p)?;
    if a.axis == 0 || a.axis > p {
        return Err(Failure::usage(format!("--axis must lie in 1..={p}")));
    }
    let fixed = a.sigma.clone().unwrap_or_else(|| vec![0.0; p]);
    let spec = SweepSpec {
        dims,
        estimators,
        axis: a.axis - 1,
        fixed,
        grid,
        reps: a.reps,
        seed: a.common.seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(a: SweepArgs, stdout: &mut dyn Write) -> CmdResult {
    let format = pick_format(a.common.format, Format::Csv, &[Format::Csv, Format::Json], "sweep")?;
    let spec = sweep_spec(&a)?;
    let table = run_sweep(&spec)?;
    with_output(&a.common.out, stdout, |w| match format {
        Format::Json => write_json(&table, w),
        _ => write_sweep_table_csv(&table, w),
    })?;
    Ok(EXIT_OK)
}

fn cmd_appendix(a: AppendixArgs, stdout: &mut dyn Write) -> CmdResult {
    let format = pick_format(a.common.format, Format::Csv, &[Format::Csv, Format::Json], "appendix")?;
    let (p, range, sigma) = match a.figure {
        Some(fig) => {
            let s = fig
                .appendix()
                .ok_or_else(|| Failure::usage(format!("`{fig}` is a sweep preset; use the sweep subcommand")))?;
            (s.p, s.n_min..=s.n_max, s.sigma)
        }
        None => match (a.p, a.n.clone()) {
            (Some(p), Some(NRange(r))) => (p, r, a.sigma.unwrap_or(50.0)),
            _ => return Err(Failure::usage("appendix needs --p and --n LO..HI (or use --figure)")),
        },
    };
    if p == 0 {
        return Err(Failure::usage("--p must be at least 1"));
    }
    let rows = appendix_sweep(p, range, sigma, a.reps, a.common.seed)?;
    with_output(&a.common.out, stdout, |w| match format {
        Format::Json => write_json(&rows, w),
        _ => write_appendix_csv(&rows, w),
    })?;
    Ok(EXIT_OK)
}
