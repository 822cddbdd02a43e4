//! Coverage simulations for the interval procedures.
//!
//! A scenario fixes a population (stratum weights with a target coefficient
//! of variation, and a placement of the prevalence among strata), an assay
//! (sensitivity, specificity and calibration sample sizes) and a list of
//! methods. Each replicate draws stratum counts and calibration counts,
//! computes every method's interval and classifies it against the true
//! prevalence.
//!
//! All randomness is keyed by logical identity (weight set, replicate,
//! component), so results do not depend on thread count or on which methods
//! are requested.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confdist::{StratifiedSample, Stratum};
use crate::distkit::{binom_sample, draw, mix_parts, ConfDist, RngStream};
use crate::error::{Error, Result};
use crate::estimate::AssayCalibration;
use crate::intervals::{compute, ComputeOptions, DrawCache, Interval, LrVariance, McConfig, Method};

// Stream keys.
const WEIGHTS: u64 = 1;
const PLACEMENT: u64 = 2;
const DATA: u64 = 3;
const CAL_POS: u64 = 4;
const CAL_NEG: u64 = 5;
const MONTE_CARLO: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub n_strata: usize,
    pub stratum_size: u64,
}

/// Which strata carry the prevalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Highest,
    Lowest,
    /// Evenly spaced by weight rank.
    Uniform,
    /// A seeded random subset.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// True prevalence.
    pub prevalence: f64,
    pub layout: Layout,
    /// Target coefficient of variation of the stratum weights. With several
    /// weight sets, the targets run evenly from 0 to this value.
    pub cv_target: f64,
    /// Fraction of strata with nonzero prevalence.
    pub nonzero_fraction: f64,
    pub placement: Placement,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Positive controls per replicate.
    pub m_p: u64,
    /// Negative controls per replicate.
    pub m_n: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_weight_sets")]
    pub weight_sets: usize,
    #[serde(default)]
    pub lr_variance: LrVariance,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_replicates() -> usize {
    1000
}
fn default_mc_samples() -> usize {
    10_000
}
fn default_weight_sets() -> usize {
    1
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::input(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("prevalence", self.prevalence)?;
        unit("sensitivity", self.sensitivity)?;
        unit("specificity", self.specificity)?;
        if !(self.nonzero_fraction > 0.0 && self.nonzero_fraction <= 1.0) {
            return Err(Error::input(format!("nonzero_fraction must lie in (0, 1], got {}", self.nonzero_fraction)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.cv_target >= 0.0 && self.cv_target.is_finite()) {
            return Err(Error::input(format!("cv_target must be finite and nonnegative, got {}", self.cv_target)));
        }
        if self.layout.n_strata == 0 || self.layout.stratum_size == 0 {
            return Err(Error::input("layout needs at least one stratum of at least one individual"));
        }
        if self.m_p == 0 || self.m_n == 0 {
            return Err(Error::input("m_p and m_n must be positive"));
        }
        if self.replicates == 0 || self.weight_sets == 0 {
            return Err(Error::input("replicates and weight_sets must be positive"));
        }
        Ok(())
    }

    /// Weight-CV target of weight set `j`.
    pub fn cv_for_set(&self, j: usize) -> f64 {
        if self.weight_sets <= 1 {
            self.cv_target
        } else {
            self.cv_target * j as f64 / (self.weight_sets - 1) as f64
        }
    }

    /// False positive rate.
    pub fn phi_n(&self) -> f64 {
        1.0 - self.specificity
    }
}

/// Stratum weights with mean `1/k` and coefficient of variation close to
/// `cv`, drawn from a beta distribution and normalized to sum to one.
pub fn gen_weights(k: usize, cv: f64, rng: &RngStream) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::input("at least one stratum is required"));
    }
    if !(cv >= 0.0 && cv.is_finite()) {
        return Err(Error::input(format!("coefficient of variation must be finite and nonnegative, got {cv}")));
    }
    if cv == 0.0 {
        return Ok(vec![1.0 / k as f64; k]);
    }
    let kf = k as f64;
    let v2 = cv * cv;
    if k < 2 || v2 >= kf - 1.0 {
        return Err(Error::InfeasibleCv { cv, strata: k });
    }
    let a = 1.0 / v2 - 1.0 / (kf * v2) - 1.0 / kf;
    let b = (kf - 1.0) * a;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InfeasibleCv { cv, strata: k });
    }
    let mut w = draw(&ConfDist::beta(a, b)?, k, rng)?;
    for x in &mut w {
        *x = x.max(1e-300);
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Sample coefficient of variation (standard deviation with `n - 1`
/// denominator over the mean).
pub fn coefficient_of_variation(w: &[f64]) -> f64 {
    if w.len() < 2 {
        return 0.0;
    }
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt() / mean
}

/// Per-stratum true prevalence: `ceil(fraction * K)` strata chosen by
/// `placement` share a common prevalence so that the weighted mean is `p`.
pub fn assign_prevalence(
    weights: &[f64],
    p: f64,
    fraction: f64,
    placement: Placement,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let k = weights.len();
    if k == 0 {
        return Err(Error::input("at least one stratum is required"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::input(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let t = fraction * k as f64;
    let chosen = ((t - 4.0 * f64::EPSILON * t).ceil() as usize).clamp(1, k);

    let mut by_weight: Vec<usize> = (0..k).collect();
    by_weight.sort_by(|&i, &j| weights[i].total_cmp(&weights[j]).then(i.cmp(&j)));
    let selected: Vec<usize> = match placement {
        Placement::Highest => by_weight[k - chosen..].to_vec(),
        Placement::Lowest => by_weight[..chosen].to_vec(),
        Placement::Uniform => (0..chosen).map(|i| by_weight[((i as f64 + 0.5) * k as f64 / chosen as f64) as usize]).collect(),
        Placement::Random => index::sample(&mut rng.rng(), k, chosen).into_vec(),
    };
    let mass: f64 = selected.iter().map(|&i| weights[i]).sum();
    let theta = if p == 0.0 { 0.0 } else { p / mass };
    if theta > 1.0 {
        return Err(Error::InfeasiblePlacement { theta });
    }
    let mut out = vec![0.0; k];
    for i in selected {
        out[i] = theta;
    }
    Ok(out)
}

/// A stratum of the simulated population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimStratum {
    pub weight: f64,
    pub n: u64,
    /// True prevalence in the stratum.
    pub theta: f64,
}

/// One weight set of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub weight_set: usize,
    pub cv_target: f64,
    pub cv_actual: f64,
    pub strata: Vec<SimStratum>,
}

impl SimDesign {
    /// Builds a design from explicit strata, which are put into a canonical
    /// order so that the input order does not affect results.
    pub fn new(weight_set: usize, cv_target: f64, mut strata: Vec<SimStratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::input("a design needs at least one stratum"));
        }
        strata.sort_by(|a, b| {
            a.weight.total_cmp(&b.weight).then(a.n.cmp(&b.n)).then(a.theta.total_cmp(&b.theta))
        });
        let weights: Vec<f64> = strata.iter().map(|s| s.weight).collect();
        Ok(SimDesign { weight_set, cv_target, cv_actual: coefficient_of_variation(&weights), strata })
    }

    /// True population prevalence.
    pub fn prevalence(&self) -> f64 {
        self.strata.iter().map(|s| s.weight * s.theta).sum()
    }
}

/// Generates weight set `j` of a scenario.
pub fn simulate_design(spec: &ScenarioSpec, j: usize) -> Result<SimDesign> {
    let k = spec.layout.n_strata;
    let cv = spec.cv_for_set(j);
    let weights = gen_weights(k, cv, &RngStream::keyed(spec.seed, &[WEIGHTS, j as u64]))?;
    let thetas = assign_prevalence(
        &weights,
        spec.prevalence,
        spec.nonzero_fraction,
        spec.placement,
        &RngStream::keyed(spec.seed, &[PLACEMENT, j as u64]),
    )?;
    let strata = weights
        .into_iter()
        .zip(thetas)
        .map(|(weight, theta)| SimStratum { weight, n: spec.layout.stratum_size, theta })
        .collect();
    SimDesign::new(j, cv, strata)
}

/// A replicate whose interval could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

/// Aggregated performance of one method on one weight set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub weight_set: usize,
    pub cv_target: f64,
    pub cv_actual: f64,
    pub method: Method,
    pub seed: u64,
    /// Replicates with an interval; the three counts below partition them.
    pub successes: usize,
    pub covered: usize,
    /// Intervals lying entirely above the truth.
    pub lower_errors: usize,
    /// Intervals lying entirely below the truth.
    pub upper_errors: usize,
    pub coverage: f64,
    pub lower_error: f64,
    pub upper_error: f64,
    pub mean_width: f64,
    /// Binomial standard error of `coverage`.
    pub mc_se: f64,
    pub failures: Vec<ReplicateFailure>,
}

/// Runs every weight set of `spec` for `methods` (or `spec.methods` when
/// `methods` is empty).
pub fn run_scenario(spec: &ScenarioSpec, methods: &[Method]) -> Result<Vec<SimResult>> {
    spec.validate()?;
    let methods = resolve_methods(spec, methods)?;
    let designs = (0..spec.weight_sets).map(|j| simulate_design(spec, j)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(designs.len() * methods.len());
    for design in &designs {
        out.extend(run_design(spec, design, &methods)?);
    }
    Ok(out)
}

fn resolve_methods(spec: &ScenarioSpec, methods: &[Method]) -> Result<Vec<Method>> {
    let chosen = if methods.is_empty() { spec.methods.clone() } else { methods.to_vec() };
    if chosen.is_empty() {
        return Err(Error::input("no methods requested"));
    }
    let mut seen = Vec::with_capacity(chosen.len());
    for m in chosen {
        if !seen.contains(&m) {
            seen.push(m);
        }
    }
    Ok(seen)
}

/// Runs the replicates of one design.
pub fn run_design(spec: &ScenarioSpec, design: &SimDesign, methods: &[Method]) -> Result<Vec<SimResult>> {
    spec.validate()?;
    let methods = resolve_methods(spec, methods)?;
    if design.strata.len() > 1 {
        if let Some(m) = methods.iter().find(|m| m.srs_only()) {
            return Err(Error::MethodMismatch(format!("{} requires a simple random sample", m.label())));
        }
    }
    let mc_configs = methods
        .iter()
        .map(|&m| {
            if m.is_monte_carlo() {
                let seed = mix_parts(&[spec.seed, MONTE_CARLO, design.weight_set as u64, m as u64]);
                McConfig::new(spec.mc_samples, seed).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let cache = DrawCache::new(2048);
    let truth = spec.prevalence;
    let j = design.weight_set as u64;
    let phi_p = spec.sensitivity;
    let phi_n = spec.phi_n();

    let outcomes: Vec<Result<Vec<Result<Interval>>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::keyed(spec.seed, &[DATA, j, r as u64]).rng();
            let mut strata = Vec::with_capacity(design.strata.len());
            for s in &design.strata {
                let apparent = phi_p * s.theta + phi_n * (1.0 - s.theta);
                let x = binom_sample(&mut rng, s.n, apparent.clamp(0.0, 1.0))?;
                strata.push(Stratum { weight: s.weight, n: s.n, x });
            }
            let sample = StratifiedSample::new(strata)?;
            let c_p = binom_sample(&mut RngStream::keyed(spec.seed, &[CAL_POS, j, r as u64]).rng(), spec.m_p, phi_p)?;
            let c_n = binom_sample(&mut RngStream::keyed(spec.seed, &[CAL_NEG, j, r as u64]).rng(), spec.m_n, phi_n)?;
            let cal = AssayCalibration::new(c_n, spec.m_n, c_p, spec.m_p)?;
            Ok(methods
                .iter()
                .zip(&mc_configs)
                .map(|(&m, mc)| {
                    let opts = ComputeOptions { mc: *mc, lr_variance: spec.lr_variance, cache: Some(&cache) };
                    compute(m, &sample, Some(&cal), spec.alpha, &opts)
                })
                .collect())
        })
        .collect();

    let mut tallies: Vec<Tally> = methods.iter().map(|_| Tally::default()).collect();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let per_method = outcome?;
        for (tally, result) in tallies.iter_mut().zip(per_method) {
            match result {
                Ok(iv) => tally.add(&iv, truth),
                Err(e) => tally.failures.push(ReplicateFailure { replicate: r, message: e.to_string() }),
            }
        }
    }
    Ok(methods
        .iter()
        .zip(tallies)
        .map(|(&method, t)| t.finish(design, method, spec.seed))
        .collect())
}

#[derive(Default)]
struct Tally {
    successes: usize,
    covered: usize,
    lower_errors: usize,
    upper_errors: usize,
    width_sum: f64,
    failures: Vec<ReplicateFailure>,
}

impl Tally {
    fn add(&mut self, iv: &Interval, truth: f64) {
        self.successes += 1;
        self.width_sum += iv.width();
        if iv.lower > truth {
            self.lower_errors += 1;
        } else if iv.upper < truth {
            self.upper_errors += 1;
        } else {
            self.covered += 1;
        }
    }

    fn finish(self, design: &SimDesign, method: Method, seed: u64) -> SimResult {
        let s = self.successes as f64;
        let coverage = self.covered as f64 / s;
        SimResult {
            weight_set: design.weight_set,
            cv_target: design.cv_target,
            cv_actual: design.cv_actual,
            method,
            seed,
            successes: self.successes,
            covered: self.covered,
            lower_errors: self.lower_errors,
            upper_errors: self.upper_errors,
            coverage,
            lower_error: self.lower_errors as f64 / s,
            upper_error: self.upper_errors as f64 / s,
            mean_width: self.width_sum / s,
            mc_se: (coverage * (1.0 - coverage) / s).sqrt(),
            failures: self.failures,
        }
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub cv_actual: f64,
    pub method: Method,
    pub coverage: f64,
    pub lower_error: f64,
    pub upper_error: f64,
    pub mean_width: f64,
    pub mc_se: f64,
    pub seed: u64,
}

impl From<&SimResult> for MetricsRow {
    fn from(r: &SimResult) -> Self {
        MetricsRow {
            cv_actual: r.cv_actual,
            method: r.method,
            coverage: r.coverage,
            lower_error: r.lower_error,
            upper_error: r.upper_error,
            mean_width: r.mean_width,
            mc_se: r.mc_se,
            seed: r.seed,
        }
    }
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    read_metrics_csv(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            prevalence: 0.02,
            layout: Layout { n_strata: 1, stratum_size: 100 },
            cv_target: 0.0,
            nonzero_fraction: 1.0,
            placement: Placement::Highest,
            sensitivity: 0.95,
            specificity: 0.95,
            m_p: 60,
            m_n: 300,
            alpha: 0.05,
            replicates: 50,
            seed: 9,
            methods: vec![Method::MeldSrs, Method::LangReiczigel],
            mc_samples: 2000,
            weight_sets: 1,
            lr_variance: LrVariance::default(),
        }
    }

    #[test]
    fn uniform_weights_at_zero_cv() {
        let w = gen_weights(4, 0.0, &RngStream::new(1, 1)).unwrap();
        assert_eq!(w, vec![0.25; 4]);
        assert_eq!(gen_weights(1, 0.0, &RngStream::new(1, 1)).unwrap(), vec![1.0]);
    }

    #[test]
    fn infeasible_cv() {
        let err = gen_weights(2, 1.5, &RngStream::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleCv { .. }));
        assert!(gen_weights(1, 0.5, &RngStream::new(1, 1)).is_err());
    }

    #[test]
    fn weights_are_normalized_and_positive() {
        let w = gen_weights(50, 4.0, &RngStream::new(3, 3)).unwrap();
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn placement_examples() {
        let rng = RngStream::new(0, 0);
        let w = [0.8, 0.2];
        assert_eq!(assign_prevalence(&w, 0.05, 1.0, Placement::Highest, &rng).unwrap(), vec![0.05, 0.05]);
        let th = assign_prevalence(&w, 0.05, 0.5, Placement::Highest, &rng).unwrap();
        assert_relative_eq!(th[0], 0.0625, max_relative = 1e-15);
        assert_eq!(th[1], 0.0);
        let err = assign_prevalence(&w, 0.5, 0.5, Placement::Lowest, &rng).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePlacement { .. }));
    }

    #[test]
    fn uniform_placement_spreads_ranks() {
        let w: Vec<f64> = (1..=10).map(|i| i as f64 / 55.0).collect();
        let th = assign_prevalence(&w, 0.01, 0.2, Placement::Uniform, &RngStream::new(0, 0)).unwrap();
        let chosen: Vec<usize> = th.iter().enumerate().filter(|(_, &t)| t > 0.0).map(|(i, _)| i).collect();
        assert_eq!(chosen, vec![2, 7]);
        let total: f64 = w.iter().zip(&th).map(|(a, b)| a * b).sum();
        assert_relative_eq!(total, 0.01, max_relative = 1e-14);
    }

    #[test]
    fn random_placement_is_seeded() {
        let w = vec![0.1; 10];
        let a = assign_prevalence(&w, 0.01, 0.3, Placement::Random, &RngStream::new(4, 4)).unwrap();
        let b = assign_prevalence(&w, 0.01, 0.3, Placement::Random, &RngStream::new(4, 4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&t| t > 0.0).count(), 3);
    }

    #[test]
    fn results_partition_replicates() {
        let res = run_scenario(&spec(), &[]).unwrap();
        assert_eq!(res.len(), 2);
        for r in &res {
            assert_eq!(r.covered + r.lower_errors + r.upper_errors + r.failures.len(), 50);
            assert!((r.coverage + r.lower_error + r.upper_error - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_prevalence_perfect_assay_always_covers() {
        let mut s = spec();
        s.prevalence = 0.0;
        s.sensitivity = 1.0;
        s.specificity = 1.0;
        s.layout = Layout { n_strata: 5, stratum_size: 20 };
        s.methods = vec![Method::WsPoisson];
        let r = &run_scenario(&s, &[]).unwrap()[0];
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn srs_methods_rejected_for_strata() {
        let mut s = spec();
        s.layout = Layout { n_strata: 3, stratum_size: 10 };
        assert!(matches!(run_scenario(&s, &[]), Err(Error::MethodMismatch(_))));
    }

    #[test]
    fn scenario_json_rejects_unknown_keys() {
        let good = serde_json::to_string(&spec()).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioSpec>(&good).unwrap(), spec());
        let bad = good.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<ScenarioSpec>(&bad).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let res = run_scenario(&spec(), &[]).unwrap();
        let rows: Vec<MetricsRow> = res.iter().map(MetricsRow::from).collect();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cv_actual,method,coverage,lower_error,upper_error,mean_width,mc_se,seed\n"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn weight_set_grid() {
        let mut s = spec();
        s.cv_target = 2.0;
        s.weight_sets = 5;
        let cvs: Vec<f64> = (0..5).map(|j| s.cv_for_set(j)).collect();
        assert_eq!(cvs, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
