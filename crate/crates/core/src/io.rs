//! CSV input formats.
//!
//! Stratum files have the header `stratum,weight,n,x`; individual files have
//! `weight,positive` with `positive` 0 or 1. Errors carry the 1-based file
//! line number.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::confdist::{StratifiedSample, Stratum};
use crate::error::{Error, Result};
use crate::survey::SurveyFrame;

const STRATUM_HEADER: [&str; 4] = ["stratum", "weight", "n", "x"];
const INDIVIDUAL_HEADER: [&str; 2] = ["weight", "positive"];

#[derive(Deserialize)]
struct StratumRow {
    #[allow(dead_code)]
    stratum: String,
    weight: f64,
    n: u64,
    x: u64,
}

#[derive(Deserialize)]
struct IndividualRow {
    weight: f64,
    positive: u8,
}

fn check_header<R: Read>(r: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = r.headers().map_err(|e| parse_error(1, e.to_string()))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(parse_error(1, format!("expected header '{}', found '{}'", expected.join(","), got.join(","))));
    }
    Ok(())
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn row_line(e: &csv::Error, fallback: u64) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(fallback)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

/// Reads a stratum file. Weights must sum to one up to the rescaling
/// tolerance of [`StratifiedSample::new`].
pub fn read_stratum_csv<R: Read>(input: R) -> Result<StratifiedSample> {
    let mut r = reader(input);
    check_header(&mut r, &STRATUM_HEADER)?;
    let mut strata = Vec::new();
    for (i, row) in r.deserialize::<StratumRow>().enumerate() {
        let fallback = i as u64 + 2;
        let row = row.map_err(|e| parse_error(row_line(&e, fallback), csv_message(&e)))?;
        if !(row.weight > 0.0 && row.weight.is_finite()) {
            return Err(parse_error(fallback, format!("weight must be positive, got {}", row.weight)));
        }
        if row.n == 0 {
            return Err(parse_error(fallback, "n must be at least 1"));
        }
        if row.x > row.n {
            return Err(parse_error(fallback, format!("x = {} exceeds n = {}", row.x, row.n)));
        }
        strata.push(Stratum { weight: row.weight, n: row.n, x: row.x });
    }
    if strata.is_empty() {
        return Err(parse_error(1, "no strata"));
    }
    StratifiedSample::new(strata)
}

/// Reads an individual file as raw weights.
pub fn read_individual_csv<R: Read>(input: R) -> Result<SurveyFrame> {
    let mut r = reader(input);
    check_header(&mut r, &INDIVIDUAL_HEADER)?;
    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    for (i, row) in r.deserialize::<IndividualRow>().enumerate() {
        let fallback = i as u64 + 2;
        let row = row.map_err(|e| parse_error(row_line(&e, fallback), csv_message(&e)))?;
        if !(row.weight > 0.0 && row.weight.is_finite()) {
            return Err(parse_error(fallback, format!("weight must be positive, got {}", row.weight)));
        }
        let positive = match row.positive {
            0 => false,
            1 => true,
            other => return Err(parse_error(fallback, format!("positive must be 0 or 1, got {other}"))),
        };
        outcomes.push(positive);
        weights.push(row.weight);
    }
    if outcomes.is_empty() {
        return Err(parse_error(1, "no records"));
    }
    SurveyFrame::from_raw_weights(outcomes, weights)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    }
}

pub fn read_stratum_file(path: &Path) -> Result<StratifiedSample> {
    read_stratum_csv(File::open(path)?)
}

pub fn read_individual_file(path: &Path) -> Result<SurveyFrame> {
    read_individual_csv(File::open(path)?)
}
