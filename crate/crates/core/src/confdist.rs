//! Sample types and the lower/upper confidence distributions built from them.

use serde::{Deserialize, Serialize};

use crate::distkit::ConfDist;
use crate::error::{Error, Result};

/// Tolerance within which stratum weights are accepted as summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Relative tolerance within which a weight sum is silently rescaled.
pub const WEIGHT_RESCALE_TOL: f64 = 1e-6;

/// `x` successes out of `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialCount {
    pub x: u64,
    pub n: u64,
}

impl BinomialCount {
    pub fn new(x: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("binomial count needs at least one trial"));
        }
        if x > n {
            return Err(Error::domain(format!("successes {x} exceed trials {n}")));
        }
        Ok(BinomialCount { x, n })
    }

    pub fn proportion(&self) -> f64 {
        self.x as f64 / self.n as f64
    }
}

/// One stratum: normalized weight, sample size and positive count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub weight: f64,
    pub n: u64,
    pub x: u64,
}

impl Stratum {
    pub fn theta_hat(&self) -> f64 {
        self.x as f64 / self.n as f64
    }
}

/// A stratified (or per-individual weighted) sample with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSample {
    strata: Vec<Stratum>,
    #[serde(default)]
    renormalized: bool,
}

impl StratifiedSample {
    /// Builds a sample whose weights already sum to one.
    ///
    /// Sums within `1e-6 * max(1, s)` of one are rescaled exactly (see
    /// [`renormalized`](Self::renormalized)); anything further off is rejected.
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        let s = validate(&strata)?;
        let gap = (s - 1.0).abs();
        if gap <= WEIGHT_SUM_TOL {
            return Ok(StratifiedSample { strata, renormalized: false });
        }
        if gap <= WEIGHT_RESCALE_TOL * s.max(1.0) {
            return Ok(StratifiedSample { strata: rescale(strata, s), renormalized: true });
        }
        Err(Error::input(format!("stratum weights sum to {s}, expected 1")))
    }

    /// Builds a sample from positive raw weights of any scale.
    pub fn from_raw_weights(strata: Vec<Stratum>) -> Result<Self> {
        let s = validate(&strata)?;
        Ok(StratifiedSample { strata: rescale(strata, s), renormalized: false })
    }

    /// Single-stratum sample (a simple random sample).
    pub fn srs(count: BinomialCount) -> Self {
        StratifiedSample { strata: vec![Stratum { weight: 1.0, n: count.n, x: count.x }], renormalized: false }
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    /// Whether [`new`](Self::new) had to rescale weights that were close to,
    /// but not within tolerance of, summing to one.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn total_n(&self) -> u64 {
        self.strata.iter().map(|s| s.n).sum()
    }

    pub fn all_zero(&self) -> bool {
        self.strata.iter().all(|s| s.x == 0)
    }

    pub fn all_positive(&self) -> bool {
        self.strata.iter().all(|s| s.x == s.n)
    }

    /// The single stratum as a binomial count, if there is exactly one.
    pub fn as_srs(&self) -> Option<BinomialCount> {
        match self.strata.as_slice() {
            [s] => Some(BinomialCount { x: s.x, n: s.n }),
            _ => None,
        }
    }
}

fn validate(strata: &[Stratum]) -> Result<f64> {
    if strata.is_empty() {
        return Err(Error::input("a sample needs at least one stratum"));
    }
    for (i, s) in strata.iter().enumerate() {
        if !(s.weight > 0.0 && s.weight.is_finite()) {
            return Err(Error::input(format!("stratum {i}: weight must be positive and finite, got {}", s.weight)));
        }
        if s.n == 0 {
            return Err(Error::input(format!("stratum {i}: sample size must be at least 1")));
        }
        if s.x > s.n {
            return Err(Error::input(format!("stratum {i}: positives {} exceed sample size {}", s.x, s.n)));
        }
    }
    Ok(strata.iter().map(|s| s.weight).sum())
}

fn rescale(mut strata: Vec<Stratum>, total: f64) -> Vec<Stratum> {
    for s in &mut strata {
        s.weight /= total;
    }
    strata
}

/// Lower confidence distribution for a binomial proportion: Beta(x, n-x+1).
pub fn binom_lower_cd(c: BinomialCount) -> ConfDist {
    if c.x == 0 {
        ConfDist::PointMass { value: 0.0 }
    } else {
        ConfDist::Beta { a: c.x as f64, b: (c.n - c.x + 1) as f64 }
    }
}

/// Upper confidence distribution for a binomial proportion: Beta(x+1, n-x).
pub fn binom_upper_cd(c: BinomialCount) -> ConfDist {
    if c.x == c.n {
        ConfDist::PointMass { value: 1.0 }
    } else {
        ConfDist::Beta { a: (c.x + 1) as f64, b: (c.n - c.x) as f64 }
    }
}

/// First two moments of the weighted sum of Poisson counts, with the
/// continuity-adjusted versions used for the upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsMoments {
    pub y: f64,
    pub v: f64,
    pub y_star: f64,
    pub v_star: f64,
}

pub fn ws_moments(s: &StratifiedSample) -> WsMoments {
    let mut y = 0.0;
    let mut v = 0.0;
    let mut max_ratio = 0.0_f64;
    for st in s.strata() {
        let r = st.weight / st.n as f64;
        let x = st.x as f64;
        y += r * x;
        v += r * r * x;
        max_ratio = max_ratio.max(r);
    }
    WsMoments { y, v, y_star: y + max_ratio, v_star: v + max_ratio * max_ratio }
}

/// Gamma confidence distributions matched to the weighted-Poisson moments.
pub fn ws_poisson_cds(s: &StratifiedSample) -> (ConfDist, ConfDist) {
    let m = ws_moments(s);
    let lower = if m.y == 0.0 {
        ConfDist::PointMass { value: 0.0 }
    } else {
        ConfDist::Gamma { shape: m.y * m.y / m.v, scale: m.v / m.y }
    };
    let upper = ConfDist::Gamma { shape: m.y_star * m.y_star / m.v_star, scale: m.v_star / m.y_star };
    (lower, upper)
}

/// Effective sample size and effective count of a weighted sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgEffective {
    /// Weighted proportion of positives.
    pub p_bar: f64,
    pub n_eff: f64,
    pub x_eff: f64,
    /// True when every observation is positive, so `n_eff` is zero and both
    /// beta distributions degenerate.
    pub degenerate: bool,
}

pub fn kg_effective(s: &StratifiedSample) -> KgEffective {
    let p_bar = if s.all_zero() {
        0.0
    } else if s.all_positive() {
        1.0
    } else {
        s.strata().iter().map(|st| st.weight * st.theta_hat()).sum::<f64>().clamp(0.0, 1.0)
    };
    let d: f64 = s.strata().iter().map(|st| st.weight * st.weight / st.n as f64 * st.theta_hat()).sum();
    let n_eff = if d > 0.0 { p_bar * (1.0 - p_bar) / d } else { s.total_n() as f64 };
    KgEffective { p_bar, n_eff, x_eff: n_eff * p_bar, degenerate: n_eff == 0.0 }
}

/// Beta confidence distributions at the effective sample size.
///
/// When every observation is positive the effective sample size is zero; the
/// distributions are then taken as point masses at 0 and 1 and
/// `KgEffective::degenerate` is set.
pub fn kg_cds(s: &StratifiedSample) -> (ConfDist, ConfDist) {
    kg_cds_from(&kg_effective(s))
}

pub(crate) fn kg_cds_from(e: &KgEffective) -> (ConfDist, ConfDist) {
    if e.degenerate {
        return (ConfDist::PointMass { value: 0.0 }, ConfDist::PointMass { value: 1.0 });
    }
    let n_minus_x = e.n_eff * (1.0 - e.p_bar);
    let lower = if e.x_eff == 0.0 {
        ConfDist::PointMass { value: 0.0 }
    } else {
        ConfDist::Beta { a: e.x_eff, b: n_minus_x + 1.0 }
    };
    let upper = if n_minus_x == 0.0 {
        ConfDist::PointMass { value: 1.0 }
    } else {
        ConfDist::Beta { a: e.x_eff + 1.0, b: n_minus_x }
    };
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(rows: &[(f64, u64, u64)]) -> StratifiedSample {
        StratifiedSample::new(rows.iter().map(|&(weight, n, x)| Stratum { weight, n, x }).collect()).unwrap()
    }

    #[test]
    fn binomial_cds() {
        let c = |x, n| BinomialCount::new(x, n).unwrap();
        assert_eq!(binom_lower_cd(c(0, 10)), ConfDist::PointMass { value: 0.0 });
        assert_eq!(binom_lower_cd(c(10, 10)), ConfDist::Beta { a: 10.0, b: 1.0 });
        assert_eq!(binom_lower_cd(c(3, 300)), ConfDist::Beta { a: 3.0, b: 298.0 });
        assert_eq!(binom_upper_cd(c(10, 10)), ConfDist::PointMass { value: 1.0 });
        assert_eq!(binom_upper_cd(c(0, 300)), ConfDist::Beta { a: 1.0, b: 300.0 });
        assert_eq!(binom_upper_cd(c(5, 10)), ConfDist::Beta { a: 6.0, b: 5.0 });
    }

    #[test]
    fn binomial_count_validation() {
        assert!(BinomialCount::new(0, 0).is_err());
        assert!(BinomialCount::new(4, 3).is_err());
    }

    #[test]
    fn moments_single_zero_stratum() {
        let m = ws_moments(&sample(&[(1.0, 100, 0)]));
        assert_eq!((m.y, m.v), (0.0, 0.0));
        assert_relative_eq!(m.y_star, 0.01, max_relative = 1e-15);
        assert_relative_eq!(m.v_star, 1e-4, max_relative = 1e-15);
    }

    #[test]
    fn moments_two_strata() {
        let m = ws_moments(&sample(&[(0.5, 10, 1), (0.5, 10, 0)]));
        assert_relative_eq!(m.y, 0.05, max_relative = 1e-15);
        assert_relative_eq!(m.v, 0.0025, max_relative = 1e-15);
        assert_relative_eq!(m.y_star, 0.1, max_relative = 1e-15);
        assert_relative_eq!(m.v_star, 0.005, max_relative = 1e-15);
    }

    #[test]
    fn gamma_cds() {
        let (lo, up) = ws_poisson_cds(&sample(&[(1.0, 100, 0)]));
        assert_eq!(lo, ConfDist::PointMass { value: 0.0 });
        match up {
            ConfDist::Gamma { shape, scale } => {
                assert_relative_eq!(shape, 1.0, max_relative = 1e-14);
                assert_relative_eq!(scale, 0.01, max_relative = 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
        let (lo, _) = ws_poisson_cds(&sample(&[(0.5, 10, 1), (0.5, 10, 0)]));
        match lo {
            ConfDist::Gamma { shape, scale } => {
                assert_relative_eq!(shape, 1.0, max_relative = 1e-14);
                assert_relative_eq!(scale, 0.05, max_relative = 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn effective_sizes() {
        let e = kg_effective(&sample(&[(0.5, 100, 0), (0.5, 50, 0)]));
        assert_eq!((e.n_eff, e.x_eff), (150.0, 0.0));

        let e = kg_effective(&sample(&[(0.5, 100, 10), (0.5, 100, 10)]));
        assert_relative_eq!(e.p_bar, 0.1, max_relative = 1e-14);
        assert_relative_eq!(e.n_eff, 180.0, max_relative = 1e-12);
        assert_relative_eq!(e.x_eff, 18.0, max_relative = 1e-12);

        let e = kg_effective(&sample(&[(1.0, 100, 100)]));
        assert_eq!(e.p_bar, 1.0);
        assert_eq!(e.n_eff, 0.0);
        assert!(e.degenerate);
    }

    #[test]
    fn effective_size_single_stratum_reduction() {
        for (x, n) in [(1u64, 10u64), (7, 100), (99, 100)] {
            let e = kg_effective(&StratifiedSample::srs(BinomialCount::new(x, n).unwrap()));
            let th = x as f64 / n as f64;
            assert_relative_eq!(e.n_eff, (1.0 - th) * n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn effective_beta_cds() {
        let (lo, _) = kg_cds(&sample(&[(0.5, 100, 0), (0.5, 100, 0)]));
        assert_eq!(lo, ConfDist::PointMass { value: 0.0 });

        let (lo, up) = kg_cds(&sample(&[(0.5, 100, 10), (0.5, 100, 10)]));
        match (lo, up) {
            (ConfDist::Beta { a, b }, ConfDist::Beta { a: a2, b: b2 }) => {
                assert_relative_eq!(a, 18.0, max_relative = 1e-12);
                assert_relative_eq!(b, 163.0, max_relative = 1e-12);
                assert_relative_eq!(a2, 19.0, max_relative = 1e-12);
                assert_relative_eq!(b2, 162.0, max_relative = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let (lo, up) = kg_cds(&sample(&[(0.3, 5, 5), (0.7, 8, 8)]));
        assert_eq!(lo, ConfDist::PointMass { value: 0.0 });
        assert_eq!(up, ConfDist::PointMass { value: 1.0 });
    }

    #[test]
    fn weight_sum_rules() {
        let exact = sample(&[(0.25, 1, 0), (0.75, 1, 1)]);
        assert!(!exact.renormalized());

        let near = StratifiedSample::new(vec![
            Stratum { weight: 0.5 + 4e-7, n: 1, x: 0 },
            Stratum { weight: 0.5, n: 1, x: 1 },
        ])
        .unwrap();
        assert!(near.renormalized());
        let total: f64 = near.strata().iter().map(|s| s.weight).sum();
        assert!((total - 1.0).abs() <= 1e-15);

        assert!(StratifiedSample::new(vec![Stratum { weight: 0.9, n: 1, x: 0 }]).is_err());
        assert!(StratifiedSample::new(vec![]).is_err());
        assert!(StratifiedSample::new(vec![Stratum { weight: 1.0, n: 0, x: 0 }]).is_err());
        assert!(StratifiedSample::new(vec![Stratum { weight: 1.0, n: 2, x: 3 }]).is_err());
        assert!(StratifiedSample::new(vec![Stratum { weight: -1.0, n: 2, x: 0 }]).is_err());

        let raw = StratifiedSample::from_raw_weights(vec![
            Stratum { weight: 2.0, n: 1, x: 0 },
            Stratum { weight: 3.0, n: 1, x: 0 },
            Stratum { weight: 5.0, n: 1, x: 1 },
        ])
        .unwrap();
        let w: Vec<f64> = raw.strata().iter().map(|s| s.weight).collect();
        assert_eq!(w, vec![0.2, 0.3, 0.5]);
    }
}
