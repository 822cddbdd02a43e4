//! Confidence intervals for disease prevalence estimated from surveys.
//!
//! Three settings are covered: simple random samples tested with an assay of
//! imperfect sensitivity and specificity, weighted samples tested with a
//! perfect assay, and weighted samples tested with an imperfect assay. The
//! imperfect-assay procedures meld lower and upper confidence distributions
//! for the apparent prevalence and the assay error rates through the
//! misclassification correction [`estimate::g`], so they reduce to the
//! perfect-assay procedures when calibration is perfect.
//!
//! Module map:
//!
//! - [`distkit`]: beta/gamma/point-mass quantiles, counter-based random streams.
//! - [`confdist`]: binomial and weighted-sample confidence distributions.
//! - [`estimate`]: the correction map `g` and point estimates.
//! - [`intervals`]: Clopper-Pearson, melding, Lang-Reiczigel, wsPoisson, DPAC,
//!   Korn-Graubard and the two weighted melded procedures.
//! - [`survey`]: per-individual survey frames and design-based variances.
//! - [`simlab`]: coverage simulations.
//! - [`report`], [`io`]: the JSON/CSV formats used by the `prevci` binary.

pub mod confdist;
pub mod distkit;
pub mod error;
pub mod estimate;
pub mod intervals;
pub mod io;
pub mod report;
pub mod simlab;
pub mod survey;

pub use confdist::{BinomialCount, StratifiedSample, Stratum};
pub use distkit::{ConfDist, RngStream};
pub use error::{Error, Result};
pub use estimate::{AssayCalibration, PrevalenceEstimate};
pub use intervals::{Interval, McConfig, Method};
