//! Confidence-interval procedures for prevalence.
//!
//! Simple random samples: Clopper-Pearson (perfect assay), melding and
//! Lang-Reiczigel (imperfect assay). Weighted samples with a perfect assay:
//! the gamma (weighted sum of Poissons) interval, the Dean-Pagano adjusted
//! Agresti-Coull interval and the Dean-Pagano/Korn-Graubard beta interval.
//! Weighted samples with an imperfect assay: melding of the gamma or the
//! effective-size beta confidence distributions with the calibration ones.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::confdist::{
    binom_lower_cd, binom_upper_cd, kg_cds_from, kg_effective, ws_poisson_cds, BinomialCount, StratifiedSample,
};
use crate::distkit::{draw, empirical_quantile_mut, normal_quantile, quantile, ConfDist, RngStream};
use crate::error::{Error, Result};
use crate::estimate::{g, AssayCalibration};

/// Interval procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "cp")]
    ClopperPearson,
    #[serde(rename = "meld-srs")]
    MeldSrs,
    #[serde(rename = "lr")]
    LangReiczigel,
    #[serde(rename = "wspoisson")]
    WsPoisson,
    #[serde(rename = "dpac")]
    Dpac,
    #[serde(rename = "kg")]
    Kg,
    #[serde(rename = "wprev-poisson")]
    WprevPoisson,
    #[serde(rename = "wprev-binomial")]
    WprevBinomial,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::ClopperPearson,
        Method::MeldSrs,
        Method::LangReiczigel,
        Method::WsPoisson,
        Method::Dpac,
        Method::Kg,
        Method::WprevPoisson,
        Method::WprevBinomial,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::ClopperPearson => "cp",
            Method::MeldSrs => "meld-srs",
            Method::LangReiczigel => "lr",
            Method::WsPoisson => "wspoisson",
            Method::Dpac => "dpac",
            Method::Kg => "kg",
            Method::WprevPoisson => "wprev-poisson",
            Method::WprevBinomial => "wprev-binomial",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::ClopperPearson => "Clopper-Pearson",
            Method::MeldSrs => "Melding (simple random sample)",
            Method::LangReiczigel => "Lang-Reiczigel",
            Method::WsPoisson => "wsPoisson",
            Method::Dpac => "Dean-Pagano Agresti-Coull",
            Method::Kg => "Dean-Pagano Korn-Graubard",
            Method::WprevPoisson => "WprevSeSp Poisson",
            Method::WprevBinomial => "WprevSeSp Binomial",
        }
    }

    /// Adjusts for assay error and so needs calibration counts.
    pub fn needs_calibration(self) -> bool {
        matches!(self, Method::MeldSrs | Method::LangReiczigel | Method::WprevPoisson | Method::WprevBinomial)
    }

    /// Uses Monte Carlo and so needs a seed.
    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Method::MeldSrs | Method::WprevPoisson | Method::WprevBinomial)
    }

    /// Only defined for a single stratum.
    pub fn srs_only(self) -> bool {
        matches!(self, Method::ClopperPearson | Method::MeldSrs | Method::LangReiczigel)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.tag()).collect();
                Error::input(format!("unknown method '{s}' (expected one of {})", known.join(", ")))
            })
    }
}

/// Coefficient on the false-positive-rate term of the Lang-Reiczigel
/// variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrVariance {
    /// (1 - b)^2, the form of the original method.
    #[default]
    ComplementSquared,
    /// (1 + b)^2, kept for compatibility with a widely reproduced printing
    /// of the formula.
    AsPrinted,
}

impl FromStr for LrVariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complement-squared" => Ok(LrVariance::ComplementSquared),
            "as-printed" => Ok(LrVariance::AsPrinted),
            _ => Err(Error::input(format!("unknown variance form '{s}' (expected complement-squared or as-printed)"))),
        }
    }
}

/// Monte Carlo settings for melded intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl McConfig {
    pub const DEFAULT_SAMPLES: usize = 100_000;
    pub const MIN_SAMPLES: usize = 1_000;

    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        if samples < Self::MIN_SAMPLES {
            return Err(Error::input(format!(
                "Monte Carlo sample count must be at least {}, got {samples}",
                Self::MIN_SAMPLES
            )));
        }
        Ok(McConfig { samples, seed })
    }

    pub fn with_seed(seed: u64) -> Self {
        McConfig { samples: Self::DEFAULT_SAMPLES, seed }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl Interval {
    fn new(lower: f64, upper: f64, alpha: f64, method: Method) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0).max(lower);
        Interval { lower, upper, alpha, method, diagnostics: Diagnostics::default() }
    }

    fn with_mc(mut self, mc: &McConfig) -> Self {
        self.diagnostics.mc_samples = Some(mc.samples);
        self.diagnostics.seed = Some(mc.seed);
        self
    }

    fn warn(mut self, msg: impl Into<String>) -> Self {
        self.diagnostics.warnings.push(msg.into());
        self
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Exact central interval for a binomial proportion.
pub fn clopper_pearson(c: BinomialCount, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let lower = quantile(&binom_lower_cd(c), alpha / 2.0)?;
    let upper = quantile(&binom_upper_cd(c), 1.0 - alpha / 2.0)?;
    Ok(Interval::new(lower, upper, alpha, Method::ClopperPearson))
}

/// Melded interval for a simple random sample tested with an imperfect assay.
pub fn meld_srs_sesp(c: BinomialCount, a: &AssayCalibration, alpha: f64, mc: &McConfig) -> Result<Interval> {
    meld_srs_cached(c, a, alpha, mc, None)
}

pub(crate) fn meld_srs_cached(
    c: BinomialCount,
    a: &AssayCalibration,
    alpha: f64,
    mc: &McConfig,
    cache: Option<&DrawCache>,
) -> Result<Interval> {
    check_alpha(alpha)?;
    let theta = Component { lower: binom_lower_cd(c), upper: binom_upper_cd(c), cacheable: true };
    let (lower, upper) = meld(&theta, a, alpha, mc, cache)?;
    Ok(Interval::new(lower, upper, alpha, Method::MeldSrs).with_mc(mc))
}

/// Lang-Reiczigel adjusted Wald interval for a simple random sample.
pub fn lang_reiczigel(c: BinomialCount, a: &AssayCalibration, alpha: f64, variance: LrVariance) -> Result<Interval> {
    check_alpha(alpha)?;
    let q = normal_quantile(1.0 - alpha / 2.0)?;
    let q2 = q * q;
    let (m_n, m_p, n) = (a.m_n as f64, a.m_p as f64, c.n as f64);
    let phi_p = (a.c_p as f64 + 1.0) / (m_p + 2.0);
    let phi_n = (a.c_n as f64 + 1.0) / (m_n + 2.0);
    if phi_p <= phi_n {
        return Err(Error::DegenerateAssay { phi_n, phi_p });
    }
    let spread = phi_p - phi_n;
    let beta_adj = (c.x as f64 + q2 / 2.0) / (n + q2);
    let b = (beta_adj - phi_n) / spread;
    let sens_term = phi_p * (1.0 - phi_p);
    let fpr_term = (1.0 - phi_n) * phi_n;
    let shift = 2.0 * q2 * (b * sens_term / (m_p + 2.0) - (1.0 - b) * fpr_term / (m_n + 2.0));
    let coef = match variance {
        LrVariance::ComplementSquared => (1.0 - b) * (1.0 - b),
        LrVariance::AsPrinted => (1.0 + b) * (1.0 + b),
    };
    let raw_var = (b * (1.0 - b) / n + b * b * sens_term / m_p + coef * fpr_term / m_n) / (spread * spread);
    let var = raw_var.max(0.0);
    let center = b + shift;
    let half = q * var.sqrt();
    let mut iv = Interval::new(center - half, center + half, alpha, Method::LangReiczigel);
    if variance == LrVariance::AsPrinted {
        iv = iv.warn("variance uses the (1 + b)^2 coefficient on the false-positive term");
    }
    if raw_var < 0.0 {
        iv = iv.warn(format!("negative variance estimate {raw_var:e} set to zero"));
    }
    Ok(iv)
}

/// Gamma interval for a weighted sum of Poisson counts (perfect assay).
pub fn ws_poisson_interval(s: &StratifiedSample, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let (lo_cd, up_cd) = ws_poisson_cds(s);
    let lower = quantile(&lo_cd, alpha / 2.0)?;
    let upper = quantile(&up_cd, 1.0 - alpha / 2.0)?.min(1.0);
    Ok(sample_notes(Interval::new(lower, upper, alpha, Method::WsPoisson), s))
}

/// Agresti-Coull style interval at the effective sample size.
pub fn dpac_interval(s: &StratifiedSample, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let q = normal_quantile(1.0 - alpha / 2.0)?;
    let c = q * q / 2.0;
    let e = kg_effective(s);
    let n_tilde = e.n_eff + 2.0 * c;
    let p_tilde = (e.p_bar * e.n_eff + c) / n_tilde;
    let half = q * (p_tilde * (1.0 - p_tilde) / n_tilde).sqrt();
    let mut iv = Interval::new(p_tilde - half, p_tilde + half, alpha, Method::Dpac);
    if e.degenerate {
        iv = iv.warn("every observation is positive; effective sample size is zero");
    }
    Ok(sample_notes(iv, s))
}

/// Beta interval at the effective sample size and count.
pub fn kg_interval(s: &StratifiedSample, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    let e = kg_effective(s);
    let (lo_cd, up_cd) = kg_cds_from(&e);
    let lower = quantile(&lo_cd, alpha / 2.0)?;
    let upper = quantile(&up_cd, 1.0 - alpha / 2.0)?;
    let mut iv = Interval::new(lower, upper, alpha, Method::Kg);
    if e.degenerate {
        iv = iv.warn("every observation is positive; effective sample size is zero, interval set to [0, 1]");
    }
    Ok(sample_notes(iv, s))
}

/// Melds the gamma confidence distributions with the calibration ones.
pub fn wprev_sesp_poisson(s: &StratifiedSample, a: &AssayCalibration, alpha: f64, mc: &McConfig) -> Result<Interval> {
    wprev_poisson_cached(s, a, alpha, mc, None)
}

pub(crate) fn wprev_poisson_cached(
    s: &StratifiedSample,
    a: &AssayCalibration,
    alpha: f64,
    mc: &McConfig,
    cache: Option<&DrawCache>,
) -> Result<Interval> {
    check_alpha(alpha)?;
    let (lower, upper) = ws_poisson_cds(s);
    let theta = Component { lower, upper, cacheable: false };
    let (lo, up) = meld(&theta, a, alpha, mc, cache)?;
    Ok(sample_notes(Interval::new(lo, up, alpha, Method::WprevPoisson).with_mc(mc), s))
}

/// Melds the effective-size beta confidence distributions with the
/// calibration ones.
pub fn wprev_sesp_binomial(s: &StratifiedSample, a: &AssayCalibration, alpha: f64, mc: &McConfig) -> Result<Interval> {
    wprev_binomial_cached(s, a, alpha, mc, None)
}

pub(crate) fn wprev_binomial_cached(
    s: &StratifiedSample,
    a: &AssayCalibration,
    alpha: f64,
    mc: &McConfig,
    cache: Option<&DrawCache>,
) -> Result<Interval> {
    check_alpha(alpha)?;
    let e = kg_effective(s);
    let (lower, upper) = kg_cds_from(&e);
    let theta = Component { lower, upper, cacheable: false };
    let (lo, up) = meld(&theta, a, alpha, mc, cache)?;
    let mut iv = Interval::new(lo, up, alpha, Method::WprevBinomial).with_mc(mc);
    if e.degenerate {
        iv = iv.warn("every observation is positive; effective sample size is zero");
    }
    Ok(sample_notes(iv, s))
}

fn sample_notes(iv: Interval, s: &StratifiedSample) -> Interval {
    if s.renormalized() {
        iv.warn("stratum weights were rescaled to sum to one")
    } else {
        iv
    }
}

/// Inputs shared by [`compute`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ComputeOptions<'a> {
    pub mc: Option<McConfig>,
    pub lr_variance: LrVariance,
    pub cache: Option<&'a DrawCache>,
}

/// Runs `method` on `sample`, checking that the inputs suit it.
pub fn compute(
    method: Method,
    sample: &StratifiedSample,
    calibration: Option<&AssayCalibration>,
    alpha: f64,
    opts: &ComputeOptions<'_>,
) -> Result<Interval> {
    let srs = if method.srs_only() {
        Some(sample.as_srs().ok_or_else(|| {
            Error::MethodMismatch(format!("{} requires a simple random sample", method.label()))
        })?)
    } else {
        None
    };
    let cal = if method.needs_calibration() {
        Some(calibration.ok_or_else(|| {
            Error::input(format!("{} needs calibration counts for sensitivity and specificity", method.label()))
        })?)
    } else {
        None
    };
    let mc = if method.is_monte_carlo() {
        Some(opts.mc.ok_or_else(|| Error::input(format!("{} is a Monte Carlo method and needs a seed", method.label())))?)
    } else {
        None
    };
    let (srs, cal, mc) = (srs.as_ref(), cal, mc.as_ref());
    match method {
        Method::ClopperPearson => clopper_pearson(*srs.unwrap(), alpha),
        Method::MeldSrs => meld_srs_cached(*srs.unwrap(), cal.unwrap(), alpha, mc.unwrap(), opts.cache),
        Method::LangReiczigel => lang_reiczigel(*srs.unwrap(), cal.unwrap(), alpha, opts.lr_variance),
        Method::WsPoisson => ws_poisson_interval(sample, alpha),
        Method::Dpac => dpac_interval(sample, alpha),
        Method::Kg => kg_interval(sample, alpha),
        Method::WprevPoisson => wprev_poisson_cached(sample, cal.unwrap(), alpha, mc.unwrap(), opts.cache),
        Method::WprevBinomial => wprev_binomial_cached(sample, cal.unwrap(), alpha, mc.unwrap(), opts.cache),
    }
}

// ---------------------------------------------------------------------------
// Melding
// ---------------------------------------------------------------------------

/// Lower and upper confidence distributions for the apparent prevalence.
struct Component {
    lower: ConfDist,
    upper: ConfDist,
    /// Parameters take few distinct values across repeated calls (integer
    /// counts), so draws are worth caching.
    cacheable: bool,
}

// Stream ids within an McConfig seed: one per (bound, component).
const LOWER_THETA: u64 = 0;
const LOWER_FPR: u64 = 1;
const LOWER_SENS: u64 = 2;
const UPPER_THETA: u64 = 3;
const UPPER_FPR: u64 = 4;
const UPPER_SENS: u64 = 5;

fn meld(
    theta: &Component,
    a: &AssayCalibration,
    alpha: f64,
    mc: &McConfig,
    cache: Option<&DrawCache>,
) -> Result<(f64, f64)> {
    if mc.samples < McConfig::MIN_SAMPLES {
        return Err(Error::input(format!(
            "Monte Carlo sample count must be at least {}, got {}",
            McConfig::MIN_SAMPLES,
            mc.samples
        )));
    }
    let neg = a.negatives();
    let pos = a.positives();
    // The lower bound pairs the lower distribution for apparent prevalence
    // with upper distributions for the false positive rate and sensitivity,
    // since g is increasing in the first and decreasing in the others.
    let lower = melded_quantile(
        [
            (theta.lower, LOWER_THETA, theta.cacheable),
            (binom_upper_cd(neg), LOWER_FPR, true),
            (binom_upper_cd(pos), LOWER_SENS, true),
        ],
        alpha / 2.0,
        mc,
        cache,
    )?;
    let upper = melded_quantile(
        [
            (theta.upper, UPPER_THETA, theta.cacheable),
            (binom_lower_cd(neg), UPPER_FPR, true),
            (binom_lower_cd(pos), UPPER_SENS, true),
        ],
        1.0 - alpha / 2.0,
        mc,
        cache,
    )?;
    Ok((lower, upper))
}

fn melded_quantile(
    parts: [(ConfDist, u64, bool); 3],
    p: f64,
    mc: &McConfig,
    cache: Option<&DrawCache>,
) -> Result<f64> {
    let [(t, ts, tc), (n, ns, nc), (s, ss, sc)] = parts;
    if let (ConfDist::PointMass { value: tv }, ConfDist::PointMass { value: nv }, ConfDist::PointMass { value: sv }) =
        (t.canonical()?, n.canonical()?, s.canonical()?)
    {
        return Ok(g(tv.min(1.0), nv, sv));
    }
    let m = mc.samples;
    let th = sample(&t, m, RngStream::new(mc.seed, ts), if tc { cache } else { None })?;
    let fp = sample(&n, m, RngStream::new(mc.seed, ns), if nc { cache } else { None })?;
    let se = sample(&s, m, RngStream::new(mc.seed, ss), if sc { cache } else { None })?;
    let mut vals: Vec<f64> = th.iter().zip(fp.iter()).zip(se.iter()).map(|((&t, &n), &s)| g(t.min(1.0), n, s)).collect();
    empirical_quantile_mut(&mut vals, p)
}

fn sample(d: &ConfDist, m: usize, stream: RngStream, cache: Option<&DrawCache>) -> Result<Arc<Vec<f64>>> {
    match cache {
        Some(c) => c.draws(d, m, stream),
        None => Ok(Arc::new(draw(d, m, &stream)?)),
    }
}

/// Memoizes [`draw`] results, for simulations that repeatedly meld the same
/// calibration distributions with the same Monte Carlo seed.
///
/// Bounded by `capacity` entries; once full, further draws are computed but
/// not stored.
#[derive(Debug)]
pub struct DrawCache {
    entries: Mutex<HashMap<DrawKey, Arc<Vec<f64>>>>,
    capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct DrawKey {
    kind: u8,
    p1: u64,
    p2: u64,
    stream: RngStream,
    m: usize,
}

impl DrawCache {
    pub fn new(capacity: usize) -> Self {
        DrawCache { entries: Mutex::new(HashMap::new()), capacity }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|e| e.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn draws(&self, d: &ConfDist, m: usize, stream: RngStream) -> Result<Arc<Vec<f64>>> {
        let d = d.canonical()?;
        if let ConfDist::PointMass { value } = d {
            return Ok(Arc::new(vec![value; m]));
        }
        let key = match d {
            ConfDist::Beta { a, b } => DrawKey { kind: 0, p1: a.to_bits(), p2: b.to_bits(), stream, m },
            ConfDist::Gamma { shape, scale } => {
                DrawKey { kind: 1, p1: shape.to_bits(), p2: scale.to_bits(), stream, m }
            }
            ConfDist::PointMass { .. } => unreachable!(),
        };
        if let Some(hit) = self.entries.lock().expect("draw cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let xs = Arc::new(draw(&d, m, &stream)?);
        let mut entries = self.entries.lock().expect("draw cache poisoned");
        if entries.len() < self.capacity {
            entries.entry(key).or_insert_with(|| Arc::clone(&xs));
        }
        Ok(xs)
    }
}

impl Default for DrawCache {
    fn default() -> Self {
        DrawCache::new(1024)
    }
}
