use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use prevci::intervals::Method;
use prevci::simlab::{run_scenario, write_metrics_csv, MetricsRow, ScenarioSpec};
use prevci::{Error, Result};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario, or an array of scenarios.
    #[arg(long)]
    scenario: PathBuf,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,

    /// Method to evaluate; overrides the scenario's `methods`. Repeatable.
    #[arg(long = "method", value_parser = parse_method)]
    methods: Vec<Method>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(path: &PathBuf) -> Result<Vec<ScenarioSpec>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    // Parsing each document separately keeps field errors such as unknown
    // keys precise.
    let specs = match value {
        serde_json::Value::Array(items) => {
            items.into_iter().map(serde_json::from_value).collect::<std::result::Result<Vec<_>, _>>()?
        }
        other => vec![serde_json::from_value(other)?],
    };
    if specs.is_empty() {
        return Err(Error::InvalidInput("scenario file contains no scenarios".into()));
    }
    Ok(specs)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let specs = load(&args.scenario)?;
    let file = File::create(&args.out)?;

    let work = || -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        for spec in &specs {
            for r in run_scenario(spec, &args.methods)? {
                if !r.failures.is_empty() {
                    eprintln!(
                        "warning: {} failed on {} of {} replicates (first: replicate {}: {})",
                        r.method,
                        r.failures.len(),
                        spec.replicates,
                        r.failures[0].replicate,
                        r.failures[0].message
                    );
                }
                rows.push(MetricsRow::from(&r));
            }
        }
        Ok(rows)
    };
    let rows = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start {n} threads: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut out = BufWriter::new(file);
    write_metrics_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}
