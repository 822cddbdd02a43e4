//! Point estimates and the misclassification correction map.

use serde::{Deserialize, Serialize};

use crate::confdist::{BinomialCount, StratifiedSample};
use crate::error::{Error, Result};

/// Control-sample counts for an assay.
///
/// `c_n` of `m_n` known negatives tested positive (estimating the false
/// positive rate, one minus specificity) and `c_p` of `m_p` known positives
/// tested positive (estimating sensitivity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssayCalibration {
    pub c_n: u64,
    pub m_n: u64,
    pub c_p: u64,
    pub m_p: u64,
}

impl AssayCalibration {
    pub fn new(c_n: u64, m_n: u64, c_p: u64, m_p: u64) -> Result<Self> {
        if m_n == 0 || m_p == 0 {
            return Err(Error::domain("calibration samples need at least one control each"));
        }
        if c_n > m_n {
            return Err(Error::domain(format!("negative-control positives {c_n} exceed {m_n} controls")));
        }
        if c_p > m_p {
            return Err(Error::domain(format!("positive-control positives {c_p} exceed {m_p} controls")));
        }
        Ok(AssayCalibration { c_n, m_n, c_p, m_p })
    }

    /// A calibration that observed no errors on `m_n` negative and `m_p`
    /// positive controls.
    pub fn perfect(m_n: u64, m_p: u64) -> Result<Self> {
        AssayCalibration::new(0, m_n, m_p, m_p)
    }

    /// Estimated false positive rate.
    pub fn phi_n_hat(&self) -> f64 {
        self.c_n as f64 / self.m_n as f64
    }

    /// Estimated sensitivity.
    pub fn phi_p_hat(&self) -> f64 {
        self.c_p as f64 / self.m_p as f64
    }

    pub fn negatives(&self) -> BinomialCount {
        BinomialCount { x: self.c_n, n: self.m_n }
    }

    pub fn positives(&self) -> BinomialCount {
        BinomialCount { x: self.c_p, n: self.m_p }
    }
}

/// Apparent and misclassification-corrected prevalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceEstimate {
    pub apparent: f64,
    pub corrected: f64,
    pub method: String,
}

/// Maps apparent prevalence to true prevalence given the false positive
/// rate `phi_n` and sensitivity `phi_p`, clamped to [0, 1] with 0/0 = 0.
pub fn g(theta: f64, phi_n: f64, phi_p: f64) -> f64 {
    if phi_n < phi_p && phi_p < theta {
        1.0
    } else if phi_p >= theta && theta >= phi_n {
        let den = phi_p - phi_n;
        if den == 0.0 {
            0.0
        } else {
            ((theta - phi_n) / den).min(1.0)
        }
    } else {
        0.0
    }
}

/// Weighted proportion of positives.
pub fn apparent_prevalence(s: &StratifiedSample) -> f64 {
    if s.all_zero() {
        return 0.0;
    }
    s.strata().iter().map(|st| st.weight * st.theta_hat()).sum::<f64>().clamp(0.0, 1.0)
}

/// Plug-in prevalence corrected for assay error.
pub fn beta_star_plugin(s: &StratifiedSample, a: &AssayCalibration) -> PrevalenceEstimate {
    let apparent = apparent_prevalence(s);
    PrevalenceEstimate { apparent, corrected: g(apparent, a.phi_n_hat(), a.phi_p_hat()), method: "plug-in".into() }
}
