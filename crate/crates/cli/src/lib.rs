//! Argument parsing and command dispatch for the `l2mech` binary.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use l2mech::lossbounds::DEFAULT_RADII;
use l2mech::mcverify::is_undersampled;
use l2mech::sampler::sample_batch;
use l2mech::{
    calibrate, calibrate_l2, check_approx_dp_with, comparison_table, empirical_lhs,
    empirical_min_sigma, BoundReport, CalibrationResult, CheckOptions, EmpiricalPrivacyEstimate,
    Mechanism, PrivacyParams, RngState,
};
use serde::Serialize;

pub const DEFAULT_TOL: f64 = 0.001;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_VERIFY_SAMPLES: usize = 100_000;
pub const DEFAULT_TRIALS: usize = 100;
const BENCH_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Minimum noise scale for one mechanism.
    Calibrate,
    /// Calibrated MSE of every mechanism for d = 1..dim.
    Compare,
    /// Draw noisy outputs about the origin.
    Sample,
    /// Monte-Carlo privacy estimate next to the analytic bound.
    Verify,
    /// Wall-clock timings of calibration and sampling.
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// A validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub dim: usize,
    pub mechanism: Mechanism,
    pub n_r: usize,
    pub n_big_r: usize,
    pub tol: f64,
    pub sigma: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
    pub parallel: bool,
    pub search: bool,
    pub trials: usize,
}

impl CliConfig {
    fn params(&self) -> Result<PrivacyParams, CliError> {
        let (Some(eps), Some(delta)) = (self.epsilon, self.delta) else {
            return Err(CliError::Usage(vec![
                "--eps and --delta are required".into()
            ]));
        };
        PrivacyParams::new(eps, delta).map_err(|e| CliError::Usage(vec![e.to_string()]))
    }

    fn check_options(&self) -> CheckOptions {
        CheckOptions::with_radii(self.n_r, self.n_big_r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Help or version text; not a failure.
    Info(String),
    /// Invalid command line, every violation listed.
    Usage(Vec<String>),
    /// The computation itself failed.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Info(text) => write!(f, "{text}"),
            CliError::Usage(problems) => write!(f, "usage error: {}", problems.join("; ")),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl From<l2mech::Error> for CliError {
    fn from(e: l2mech::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "l2mech",
    version,
    about = "Calibrate, sample and verify the l2 noise mechanism"
)]
struct RawArgs {
    #[arg(value_enum)]
    command: Command,
    /// l2, laplace or gaussian
    #[arg(long = "mech", default_value = "l2")]
    mechanism: String,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Dimension (largest dimension for `compare`)
    #[arg(long)]
    dim: Option<usize>,
    /// Radii in the first-term grid
    #[arg(long = "nr", default_value_t = DEFAULT_RADII)]
    n_r: usize,
    /// Radii in the second-term grid
    #[arg(long = "nR", default_value_t = DEFAULT_RADII)]
    n_big_r: usize,
    /// Absolute tolerance of the sigma search
    #[arg(long, default_value_t = DEFAULT_TOL, allow_negative_numbers = true)]
    tol: f64,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Draws for `sample` (default 1000) or per distribution for `verify` (default 100000)
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, env = "L2MECH_SEED", default_value_t = 0)]
    seed: u64,
    /// json or csv
    #[arg(long)]
    format: Option<String>,
    #[arg(long = "out")]
    out: Option<PathBuf>,
    /// Use the two-round parallel l2 sampler
    #[arg(long)]
    parallel: bool,
    /// Also search for the empirical minimum sigma (`verify`)
    #[arg(long)]
    search: bool,
    /// Repetitions per timing (`bench`)
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Parses and validates a full argument list (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw = RawArgs::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Info(e.to_string())
        }
        _ => {
            let text = e.render().to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            CliError::Usage(vec![line.trim_start_matches("error: ").to_string()])
        }
    })?;
    validate(raw)
}

fn validate(raw: RawArgs) -> Result<CliConfig, CliError> {
    let mut problems = Vec::new();
    let command = raw.command;
    let mechanism = match raw.mechanism.parse::<Mechanism>() {
        Ok(m) => m,
        Err(_) => {
            problems.push(format!(
                "unknown mechanism '{}' (expected l2, laplace or gaussian)",
                raw.mechanism
            ));
            Mechanism::L2
        }
    };

    let needs_params = command != Command::Sample;
    match raw.eps {
        None if needs_params => problems.push("missing --eps".into()),
        Some(e) if !positive(e) => problems.push("epsilon must be positive".into()),
        _ => {}
    }
    match raw.delta {
        None if needs_params => problems.push("missing --delta".into()),
        Some(d) if !(d > 0.0 && d < 1.0) => problems.push("delta must be in (0,1)".into()),
        _ => {}
    }
    match raw.dim {
        None => problems.push("missing --dim".into()),
        Some(0) => problems.push("dim must be at least 1".into()),
        _ => {}
    }
    match raw.sigma {
        None if command == Command::Sample => problems.push("missing --sigma".into()),
        Some(s) if !positive(s) => problems.push("sigma must be positive".into()),
        _ => {}
    }
    if raw.n_r < 2 {
        problems.push("nr must be at least 2".into());
    }
    if raw.n_big_r < 2 {
        problems.push("nR must be at least 2".into());
    }
    if !positive(raw.tol) {
        problems.push("tol must be positive".into());
    }
    if raw.samples == Some(0) {
        problems.push("samples must be at least 1".into());
    }
    if raw.trials == 0 {
        problems.push("trials must be at least 1".into());
    }
    if command == Command::Verify && mechanism != Mechanism::L2 {
        problems.push("verify supports only --mech l2".into());
    }
    if raw.parallel && (command != Command::Sample || mechanism != Mechanism::L2) {
        problems.push("--parallel applies only to `sample --mech l2`".into());
    }
    if raw.search && command != Command::Verify {
        problems.push("--search applies only to `verify`".into());
    }
    let output_format = match raw.format.as_deref() {
        None => match command {
            Command::Calibrate | Command::Verify => OutputFormat::Json,
            Command::Compare | Command::Sample | Command::Bench => OutputFormat::Csv,
        },
        Some("json") => OutputFormat::Json,
        Some("csv") => OutputFormat::Csv,
        Some(other) => {
            problems.push(format!("unknown format '{other}' (expected json or csv)"));
            OutputFormat::Json
        }
    };

    if !problems.is_empty() {
        return Err(CliError::Usage(problems));
    }
    let samples = raw.samples.unwrap_or(match command {
        Command::Verify => DEFAULT_VERIFY_SAMPLES,
        _ => DEFAULT_SAMPLES,
    });
    Ok(CliConfig {
        command,
        epsilon: raw.eps,
        delta: raw.delta,
        dim: raw.dim.unwrap_or(1),
        mechanism,
        n_r: raw.n_r,
        n_big_r: raw.n_big_r,
        tol: raw.tol,
        sigma: raw.sigma,
        samples,
        seed: raw.seed,
        output_format,
        output_path: raw.out,
        parallel: raw.parallel,
        search: raw.search,
        trials: raw.trials,
    })
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn render_calibrate(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    let res: CalibrationResult = calibrate(
        config.mechanism,
        config.dim,
        config.params()?,
        &config.check_options(),
        config.tol,
    )?;
    if res.bracket_floor_hit {
        eprintln!("warning: sigma search reached its lower floor; the result may not be minimal");
    }
    match config.output_format {
        OutputFormat::Json => json_bytes(&res),
        OutputFormat::Csv => csv_bytes([res]),
    }
}

fn render_compare(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    let rows = comparison_table(
        config.params()?,
        config.dim,
        &config.check_options(),
        config.tol,
    )?;
    match config.output_format {
        OutputFormat::Json => json_bytes(&rows),
        OutputFormat::Csv => csv_bytes(rows),
    }
}

fn render_sample(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    let sigma = config.sigma.expect("validated");
    let batch = sample_batch(
        config.mechanism,
        config.dim,
        sigma,
        config.samples,
        RngState::new(config.seed),
        config.parallel,
    )?;
    match config.output_format {
        OutputFormat::Json => json_bytes(&batch),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(batch.column_names())?;
            for row in &batch.values {
                w.write_record(row.iter().map(|v| v.to_string()))?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

#[derive(Debug, Serialize)]
struct Analytic {
    calibrated_sigma: f64,
    report: BoundReport,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    d: usize,
    epsilon: f64,
    delta: f64,
    sigma: f64,
    analytic: Analytic,
    empirical: EmpiricalPrivacyEstimate,
    empirical_min_sigma: Option<f64>,
}

#[derive(Debug, Serialize)]
struct VerifyRow {
    d: usize,
    epsilon: f64,
    delta: f64,
    sigma: f64,
    calibrated_sigma: f64,
    empirical_min_sigma: Option<f64>,
    term1_upper: f64,
    term2_lower: f64,
    lhs_upper: f64,
    satisfies_dp: bool,
    n: usize,
    seed: u64,
    c1: f64,
    c2: f64,
    lhs: f64,
    std_error: f64,
}

fn render_verify(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    let params = config.params()?;
    let options = config.check_options();
    if is_undersampled(config.samples, params.delta()) {
        eprintln!(
            "warning: {} samples give fewer than 100 expected hits at delta = {}",
            config.samples,
            params.delta()
        );
    }
    let calibrated_sigma = calibrate_l2(config.dim, params, &options, config.tol)?.sigma;
    let sigma = config.sigma.unwrap_or(calibrated_sigma);
    let state = RngState::new(config.seed);
    let report = check_approx_dp_with(config.dim, sigma, params, &options)?;
    let empirical = empirical_lhs(config.dim, sigma, params.epsilon(), config.samples, state)?;
    let min_sigma = if config.search {
        Some(empirical_min_sigma(
            config.dim,
            params,
            config.samples,
            config.tol,
            state,
        )?)
    } else {
        None
    };
    let out = VerifyReport {
        d: config.dim,
        epsilon: params.epsilon(),
        delta: params.delta(),
        sigma,
        analytic: Analytic {
            calibrated_sigma,
            report,
        },
        empirical,
        empirical_min_sigma: min_sigma,
    };
    match config.output_format {
        OutputFormat::Json => json_bytes(&out),
        OutputFormat::Csv => csv_bytes([VerifyRow {
            d: out.d,
            epsilon: out.epsilon,
            delta: out.delta,
            sigma,
            calibrated_sigma,
            empirical_min_sigma: min_sigma,
            term1_upper: report.term1_upper,
            term2_lower: report.term2_lower,
            lhs_upper: report.lhs_upper,
            satisfies_dp: report.satisfies_dp,
            n: empirical.n,
            seed: empirical.seed,
            c1: empirical.c1,
            c2: empirical.c2,
            lhs: empirical.lhs_estimate,
            std_error: empirical.std_error,
        }]),
    }
}

#[derive(Debug, Clone, Serialize)]
struct BenchRow {
    mechanism: Mechanism,
    operation: &'static str,
    d: usize,
    trials: usize,
    mean_ms: f64,
    median_ms: f64,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    /// Timings differ between runs and machines.
    nondeterministic: bool,
    rows: Vec<BenchRow>,
}

fn time_trials(
    trials: usize,
    mut f: impl FnMut() -> Result<(), CliError>,
) -> Result<(f64, f64), CliError> {
    let mut ms = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        f()?;
        ms.push(to_ms(start.elapsed()));
    }
    let mean = ms.iter().sum::<f64>() / trials as f64;
    ms.sort_by(f64::total_cmp);
    let median = if trials % 2 == 1 {
        ms[trials / 2]
    } else {
        0.5 * (ms[trials / 2 - 1] + ms[trials / 2])
    };
    Ok((mean, median))
}

fn to_ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn render_bench(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    let params = config.params()?;
    let options = config.check_options();
    let mut rows = Vec::new();
    for mechanism in Mechanism::ALL {
        let mut sigma = 0.0;
        let (mean, median) = time_trials(config.trials, || {
            sigma = calibrate(mechanism, config.dim, params, &options, config.tol)?.sigma;
            Ok(())
        })?;
        rows.push(BenchRow {
            mechanism,
            operation: "calibrate",
            d: config.dim,
            trials: config.trials,
            mean_ms: mean,
            median_ms: median,
        });
        let state = RngState::new(config.seed);
        let (mean, median) = time_trials(config.trials, || {
            sample_batch(mechanism, config.dim, sigma, BENCH_DRAWS, state, false)?;
            Ok(())
        })?;
        rows.push(BenchRow {
            mechanism,
            operation: "sample_1000",
            d: config.dim,
            trials: config.trials,
            mean_ms: mean,
            median_ms: median,
        });
    }
    match config.output_format {
        OutputFormat::Json => json_bytes(&BenchReport {
            nondeterministic: true,
            rows,
        }),
        OutputFormat::Csv => {
            eprintln!("note: bench timings are wall-clock and vary between runs");
            csv_bytes(rows)
        }
    }
}

/// Produces the command's output without writing it anywhere.
pub fn render(config: &CliConfig) -> Result<Vec<u8>, CliError> {
    match config.command {
        Command::Calibrate => render_calibrate(config),
        Command::Compare => render_compare(config),
        Command::Sample => render_sample(config),
        Command::Verify => render_verify(config),
        Command::Bench => render_bench(config),
    }
}

/// Runs the command and writes its output to `--out` or stdout.
pub fn run(config: &CliConfig) -> Result<(), CliError> {
    let bytes = render(config)?;
    match &config.output_path {
        Some(path) => std::fs::write(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}
