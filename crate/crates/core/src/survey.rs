//! Per-individual survey frames under the multinomial sampling model.
//!
//! Each sampled individual carries either a raw analysis weight or a
//! selection probability `p_i` (the chance the individual is chosen on any
//! one of the `n` draws from a population of `N`). Both are reduced to
//! expansion factors `e_i`, the individual's contribution to the population
//! prevalence estimate per unit outcome:
//!
//! - selection probabilities: `e_i = 1 / (N p_i)`;
//! - raw weights: `e_i = n w_i / sum(w)`.
//!
//! The estimate is `mean(y_i e_i)` and the normalized stratum weights are
//! `e_i / sum(e)`, so each individual becomes a stratum of size one.

use serde::{Deserialize, Serialize};

use crate::confdist::{StratifiedSample, Stratum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    RawWeights(Vec<f64>),
    SelectionProbabilities { probs: Vec<f64>, population_size: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyFrame {
    outcomes: Vec<bool>,
    design: Design,
}

impl SurveyFrame {
    pub fn new(outcomes: Vec<bool>, design: Design) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::input("a survey frame needs at least one record"));
        }
        let values = match &design {
            Design::RawWeights(w) => w,
            Design::SelectionProbabilities { probs, population_size } => {
                if *population_size == 0 {
                    return Err(Error::input("population size must be positive"));
                }
                if let Some((i, p)) = probs.iter().enumerate().find(|(_, &p)| p > 1.0) {
                    return Err(Error::input(format!("record {i}: selection probability {p} exceeds 1")));
                }
                probs
            }
        };
        if values.len() != outcomes.len() {
            return Err(Error::input(format!(
                "{} outcomes but {} weights or probabilities",
                outcomes.len(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            return Err(Error::input(format!("record {i}: weight or probability must be positive, got {v}")));
        }
        Ok(SurveyFrame { outcomes, design })
    }

    pub fn from_raw_weights(outcomes: Vec<bool>, weights: Vec<f64>) -> Result<Self> {
        SurveyFrame::new(outcomes, Design::RawWeights(weights))
    }

    pub fn from_selection_probabilities(outcomes: Vec<bool>, probs: Vec<f64>, population_size: u64) -> Result<Self> {
        SurveyFrame::new(outcomes, Design::SelectionProbabilities { probs, population_size })
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn sample_size(&self) -> usize {
        self.outcomes.len()
    }

    /// Expansion factor of each record.
    pub fn expansion_factors(&self) -> Vec<f64> {
        let n = self.sample_size() as f64;
        match &self.design {
            Design::RawWeights(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|&wi| n * wi / total).collect()
            }
            Design::SelectionProbabilities { probs, population_size } => {
                let big_n = *population_size as f64;
                probs.iter().map(|&p| 1.0 / (big_n * p)).collect()
            }
        }
    }
}

/// One stratum of size one per record, weighted by normalized expansion
/// factors.
pub fn normalized_weights(f: &SurveyFrame) -> Result<StratifiedSample> {
    // Raw weights are proportional to the expansion factors; rescaling them
    // directly avoids one rounding step.
    let unnormalized = match &f.design {
        Design::RawWeights(w) => w.clone(),
        Design::SelectionProbabilities { .. } => f.expansion_factors(),
    };
    let strata = unnormalized
        .into_iter()
        .zip(f.outcomes())
        .map(|(weight, &y)| Stratum { weight, n: 1, x: u64::from(y) })
        .collect();
    StratifiedSample::from_raw_weights(strata)
}

/// Design-unbiased prevalence estimate `mean(y_i e_i)`.
pub fn beta_hat_multinomial(f: &SurveyFrame) -> f64 {
    let n = f.sample_size() as f64;
    f.expansion_factors().iter().zip(f.outcomes()).filter(|(_, &y)| y).map(|(e, _)| e).sum::<f64>() / n
}

/// Variance estimate under with-replacement multinomial sampling.
pub fn var_multinomial(f: &SurveyFrame) -> Result<f64> {
    let n = f.sample_size();
    if n < 2 {
        return Err(Error::InsufficientData("the multinomial variance needs at least two records".into()));
    }
    let beta = beta_hat_multinomial(f);
    let ss: f64 = f
        .expansion_factors()
        .iter()
        .zip(f.outcomes())
        .map(|(e, &y)| {
            let d = if y { e - beta } else { -beta };
            d * d
        })
        .sum();
    Ok(ss / (n as f64 * (n as f64 - 1.0)))
}

/// Variance estimate under the Poisson approximation, which keeps only the
/// terms of sampled positives.
pub fn var_poisson(f: &SurveyFrame) -> f64 {
    let n = f.sample_size() as f64;
    f.expansion_factors().iter().zip(f.outcomes()).filter(|(_, &y)| y).map(|(e, _)| e * e).sum::<f64>() / (n * n)
}

/// Conventional design weights `1 / (n p_i)`, which sum to `N` in
/// expectation, and the same weights rescaled to sum to exactly `N`.
///
/// Diagnostic only; no interval uses them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraditionalWeights {
    pub traditional: Vec<f64>,
    pub scaled: Vec<f64>,
}

pub fn traditional_weights(f: &SurveyFrame) -> Result<TraditionalWeights> {
    let Design::SelectionProbabilities { probs, population_size } = &f.design else {
        return Err(Error::input("traditional weights need selection probabilities"));
    };
    let n = f.sample_size() as f64;
    let traditional: Vec<f64> = probs.iter().map(|&p| 1.0 / (n * p)).collect();
    let total: f64 = traditional.iter().sum();
    let big_n = *population_size as f64;
    let scaled = traditional.iter().map(|&w| big_n * w / total).collect();
    Ok(TraditionalWeights { traditional, scaled })
}
