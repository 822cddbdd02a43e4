//! The versioned JSON report emitted for each computed interval.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::confdist::StratifiedSample;
use crate::error::Result;
use crate::estimate::{apparent_prevalence, g, AssayCalibration};
use crate::intervals::{Interval, Method};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatePair {
    pub apparent: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: Method,
    pub alpha: f64,
    pub estimate: EstimatePair,
    pub lower: f64,
    pub upper: f64,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON encoding of the sample and calibration.
    pub input_digest: String,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(interval: &Interval, sample: &StratifiedSample, calibration: Option<&AssayCalibration>) -> Result<Self> {
        let apparent = apparent_prevalence(sample);
        let corrected = match calibration {
            Some(a) if interval.method.needs_calibration() => g(apparent, a.phi_n_hat(), a.phi_p_hat()),
            _ => apparent,
        };
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            method: interval.method,
            alpha: interval.alpha,
            estimate: EstimatePair { apparent, corrected },
            lower: interval.lower,
            upper: interval.upper,
            mc_samples: interval.diagnostics.mc_samples,
            seed: interval.diagnostics.seed,
            input_digest: input_digest(sample, calibration)?,
            warnings: interval.diagnostics.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Human-readable one-line summary with percentages to two decimals.
    pub fn to_text(&self) -> String {
        let level = (1.0 - self.alpha) * 100.0;
        let mut line = format!(
            "{}: estimate {:.2}% (apparent {:.2}%), {}% CI ({:.2}%, {:.2}%)",
            self.method.label(),
            self.estimate.corrected * 100.0,
            self.estimate.apparent * 100.0,
            trim_float(level),
            self.lower * 100.0,
            self.upper * 100.0,
        );
        if let (Some(m), Some(seed)) = (self.mc_samples, self.seed) {
            line.push_str(&format!(" [mc={m}, seed={seed}]"));
        }
        for w in &self.warnings {
            line.push_str(&format!("\n  warning: {w}"));
        }
        line
    }
}

fn trim_float(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn input_digest(sample: &StratifiedSample, calibration: Option<&AssayCalibration>) -> Result<String> {
    #[derive(Serialize)]
    struct Input<'a> {
        strata: &'a [crate::confdist::Stratum],
        calibration: Option<&'a AssayCalibration>,
    }
    let bytes = serde_json::to_vec(&Input { strata: sample.strata(), calibration })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
