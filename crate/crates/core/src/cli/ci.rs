use std::io::Write;
use std::path::PathBuf;

use clap::{ArgGroup, Args, ValueEnum};
use prevci::confdist::{BinomialCount, StratifiedSample};
use prevci::intervals::{compute, ComputeOptions, LrVariance, McConfig, Method};
use prevci::io::{read_individual_file, read_stratum_file};
use prevci::report::RunReport;
use prevci::survey::normalized_weights;
use prevci::{AssayCalibration, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["stratum_file", "individual_file", "x"])))]
pub struct CiArgs {
    /// Interval method; repeat for several.
    #[arg(long = "method", required = true, value_parser = parse_method)]
    methods: Vec<Method>,

    /// CSV with header `stratum,weight,n,x`.
    #[arg(long)]
    stratum_file: Option<PathBuf>,

    /// CSV with header `weight,positive`.
    #[arg(long)]
    individual_file: Option<PathBuf>,

    /// Positives in a simple random sample.
    #[arg(long, requires = "n")]
    x: Option<u64>,

    /// Size of a simple random sample.
    #[arg(long, requires = "x")]
    n: Option<u64>,

    /// Positives among negative controls.
    #[arg(long, requires_all = ["spec_n", "sens_x", "sens_n"])]
    spec_x: Option<u64>,

    /// Number of negative controls.
    #[arg(long, requires_all = ["spec_x", "sens_x", "sens_n"])]
    spec_n: Option<u64>,

    /// Positives among positive controls.
    #[arg(long, requires_all = ["spec_x", "spec_n", "sens_n"])]
    sens_x: Option<u64>,

    /// Number of positive controls.
    #[arg(long, requires_all = ["spec_x", "spec_n", "sens_x"])]
    sens_n: Option<u64>,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Monte Carlo samples per bound.
    #[arg(long, default_value_t = McConfig::DEFAULT_SAMPLES)]
    mc: usize,

    /// Seed for Monte Carlo methods.
    #[arg(long)]
    seed: Option<u64>,

    /// Lang-Reiczigel variance form: complement-squared or as-printed.
    #[arg(long, default_value = "complement-squared", value_parser = parse_lr_variance)]
    lr_variance: LrVariance,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_lr_variance(s: &str) -> std::result::Result<LrVariance, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_sample(args: &CiArgs) -> Result<StratifiedSample> {
    if let Some(path) = &args.stratum_file {
        return read_stratum_file(path);
    }
    if let Some(path) = &args.individual_file {
        return normalized_weights(&read_individual_file(path)?);
    }
    match (args.x, args.n) {
        (Some(x), Some(n)) => Ok(StratifiedSample::srs(BinomialCount::new(x, n)?)),
        _ => Err(Error::InvalidInput("no input given".into())),
    }
}

pub fn run(args: &CiArgs) -> Result<()> {
    let sample = load_sample(args)?;
    let calibration = match (args.spec_x, args.spec_n, args.sens_x, args.sens_n) {
        (Some(c_n), Some(m_n), Some(c_p), Some(m_p)) => Some(AssayCalibration::new(c_n, m_n, c_p, m_p)?),
        _ => None,
    };
    let needs_mc = args.methods.iter().any(|m| m.is_monte_carlo());
    let mc = match args.seed {
        Some(seed) => Some(McConfig::new(args.mc, seed)?),
        None if needs_mc => {
            return Err(Error::InvalidInput("Monte Carlo methods need --seed".into()));
        }
        None => None,
    };
    let opts = ComputeOptions { mc, lr_variance: args.lr_variance, cache: None };

    let mut reports = Vec::with_capacity(args.methods.len());
    for &method in &args.methods {
        let interval = compute(method, &sample, calibration.as_ref(), args.alpha, &opts)?;
        reports.push(RunReport::new(&interval, &sample, calibration.as_ref())?);
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for report in &reports {
        match args.format {
            Format::Json => writeln!(out, "{}", report.to_json()?)?,
            Format::Text => writeln!(out, "{}", report.to_text())?,
        }
    }
    out.flush()?;
    Ok(())
}
