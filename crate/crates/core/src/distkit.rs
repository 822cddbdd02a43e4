//! Distribution primitives: exact quantiles and seeded sampling for the beta,
//! gamma and point-mass confidence distributions, plus binomial draws.
//!
//! Sampling is by inverse transform. A batch of uniforms is inverted in sorted
//! order so every root solve starts from its neighbour, which keeps the cost
//! near one incomplete-function evaluation per variate. Inverse transform also
//! couples draws monotonically: two distributions sampled from the same
//! stream are ordered draw-by-draw whenever the distributions are
//! stochastically ordered.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// A closed-form confidence distribution.
///
/// `Beta { a: 0, .. }` is a point mass at 0, `Beta { b: 0, .. }` a point mass
/// at 1, and `Gamma { shape: 0, .. }` a point mass at 0. The constructors
/// return the point mass directly; hand-built degenerate variants behave the
/// same way in every operation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfDist {
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, scale: f64 },
    PointMass { value: f64 },
}

impl ConfDist {
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        ConfDist::Beta { a, b }.canonical()
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        ConfDist::Gamma { shape, scale }.canonical()
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        ConfDist::PointMass { value }.canonical()
    }

    /// Validates parameters and collapses degenerate beta/gamma forms to the
    /// equivalent point mass.
    pub fn canonical(self) -> Result<Self> {
        match self {
            ConfDist::Beta { a, b } => {
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::domain(format!("beta parameters must be finite and nonnegative, got ({a}, {b})")));
                }
                match (a == 0.0, b == 0.0) {
                    (true, true) => Err(Error::domain("beta(0, 0) is undefined")),
                    (true, false) => Ok(ConfDist::PointMass { value: 0.0 }),
                    (false, true) => Ok(ConfDist::PointMass { value: 1.0 }),
                    (false, false) => Ok(self),
                }
            }
            ConfDist::Gamma { shape, scale } => {
                if !(shape >= 0.0 && shape.is_finite()) {
                    return Err(Error::domain(format!("gamma shape must be finite and nonnegative, got {shape}")));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::domain(format!("gamma scale must be finite and positive, got {scale}")));
                }
                if shape == 0.0 {
                    Ok(ConfDist::PointMass { value: 0.0 })
                } else {
                    Ok(self)
                }
            }
            ConfDist::PointMass { value } => {
                if value.is_finite() {
                    Ok(self)
                } else {
                    Err(Error::domain(format!("point mass location must be finite, got {value}")))
                }
            }
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.canonical(), Ok(ConfDist::PointMass { .. }))
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match self.canonical()? {
            ConfDist::Beta { a, b } => a / (a + b),
            ConfDist::Gamma { shape, scale } => shape * scale,
            ConfDist::PointMass { value } => value,
        })
    }
}

/// Identifies one reproducible random stream.
///
/// The generator is ChaCha12 keyed by `master_seed` with `stream_id` selecting
/// the ChaCha stream, so draws depend only on the pair and never on thread
/// scheduling or the order in which streams are consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream { master_seed, stream_id }
    }

    /// Stream whose id is a hash of `parts`, for keying streams by logical
    /// identity (replicate, component, ...).
    pub fn keyed(master_seed: u64, parts: &[u64]) -> Self {
        RngStream::new(master_seed, mix_parts(parts))
    }

    /// Child stream of this one, keyed by `parts`.
    pub fn derive(&self, parts: &[u64]) -> Self {
        let mut all = Vec::with_capacity(parts.len() + 1);
        all.push(self.stream_id);
        all.extend_from_slice(parts);
        RngStream::keyed(self.master_seed, &all)
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// `m` uniforms on the open interval (0, 1).
    pub fn uniforms(&self, m: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..m).map(|_| open_uniform(&mut rng)).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix_parts(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5851_F42D_4C95_7F2D_u64, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Uniform on (0, 1), never exactly 0 or 1.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

/// The `p`-th quantile of `d`.
pub fn quantile(d: &ConfDist, p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(match d.canonical()? {
        ConfDist::PointMass { value } => value,
        ConfDist::Beta { a, b } => Kernel::beta(a, b).quantile(p),
        ConfDist::Gamma { shape, scale } => scale * Kernel::gamma(shape).quantile(p),
    })
}

/// Cumulative distribution function of `d` at `x`.
pub fn cdf(d: &ConfDist, x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("cdf evaluated at NaN"));
    }
    Ok(match d.canonical()? {
        ConfDist::PointMass { value } => {
            if x >= value {
                1.0
            } else {
                0.0
            }
        }
        ConfDist::Beta { a, b } => Kernel::beta(a, b).cdf(x),
        ConfDist::Gamma { shape, scale } => Kernel::gamma(shape).cdf(x / scale),
    })
}

/// `m` independent variates from `d`, deterministic in `rng`.
pub fn draw(d: &ConfDist, m: usize, rng: &RngStream) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::domain("draw requires at least one variate"));
    }
    let d = d.canonical()?;
    let (kernel, scale) = match d {
        ConfDist::PointMass { value } => return Ok(vec![value; m]),
        ConfDist::Beta { a, b } => (Kernel::beta(a, b), 1.0),
        ConfDist::Gamma { shape, scale } => (Kernel::gamma(shape), scale),
    };
    let us = rng.uniforms(m);
    if kernel.closed_form(0.5).is_some() {
        return Ok(us.iter().map(|&u| scale * kernel.closed_form(u).unwrap()).collect());
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_unstable_by(|&i, &j| us[i].total_cmp(&us[j]));

    let mut out = vec![0.0; m];
    let mut state: Option<Probe> = None;
    for &i in &order {
        let (x, probe) = kernel.invert_from(us[i], state);
        out[i] = scale * x;
        state = Some(probe);
    }
    Ok(out)
}

/// Order statistic number `ceil(p * len)` (1-based) of `xs`.
///
/// Products within a few ulps of an integer are treated as that integer so
/// that, e.g., `0.025 * 10000` selects the 250th value.
pub fn empirical_quantile(xs: &[f64], p: f64) -> Result<f64> {
    let mut work = xs.to_vec();
    empirical_quantile_mut(&mut work, p)
}

/// As [`empirical_quantile`], reordering `xs` in place instead of copying.
pub fn empirical_quantile_mut(xs: &mut [f64], p: f64) -> Result<f64> {
    check_probability(p)?;
    if xs.is_empty() {
        return Err(Error::domain("empirical quantile of an empty sequence"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("empirical quantile of a sequence containing NaN"));
    }
    let rank = order_statistic_rank(xs.len(), p);
    let (_, nth, _) = xs.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*nth)
}

pub(crate) fn order_statistic_rank(len: usize, p: f64) -> usize {
    let t = p * len as f64;
    let k = (t - 4.0 * f64::EPSILON * t).ceil() as usize;
    k.clamp(1, len)
}

/// One Binomial(`n`, `theta`) variate from the stream.
pub fn binom_draw(n: u64, theta: f64, rng: &RngStream) -> Result<u64> {
    binom_sample(&mut rng.rng(), n, theta)
}

/// One Binomial(`n`, `theta`) variate from an open generator.
pub fn binom_sample<R: Rng + ?Sized>(rng: &mut R, n: u64, theta: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("binomial probability must lie in [0, 1], got {theta}")));
    }
    if n == 0 || theta == 0.0 {
        return Ok(0);
    }
    if theta == 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, theta).map_err(|e| Error::domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
}

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

const MAX_ITER: usize = 400;

/// Continuous kernel on a standardized scale (gamma scale factored out).
#[derive(Debug, Clone, Copy)]
enum Kernel {
    Beta { a: f64, b: f64, ln_norm: f64 },
    Gamma { shape: f64, ln_norm: f64 },
}

/// Last evaluation of a root solve, reused to seed the next solve.
#[derive(Debug, Clone, Copy)]
struct Probe {
    x: f64,
    cdf: f64,
    sf: f64,
    pdf: f64,
    dlog: f64,
}

impl Kernel {
    fn beta(a: f64, b: f64) -> Self {
        Kernel::Beta { a, b, ln_norm: ln_beta(a, b) }
    }

    fn gamma(shape: f64) -> Self {
        Kernel::Gamma { shape, ln_norm: ln_gamma(shape) }
    }

    fn upper_support(&self) -> f64 {
        match self {
            Kernel::Beta { .. } => 1.0,
            Kernel::Gamma { .. } => f64::INFINITY,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Beta { a, b, .. } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Kernel::Gamma { shape, .. } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(shape, x)
                }
            }
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match *self {
            Kernel::Beta { a, b, .. } => {
                if x <= 0.0 {
                    1.0
                } else if x >= 1.0 {
                    0.0
                } else if x < a / (a + b) {
                    // Below the mean the survival function is large, so the
                    // complement is accurate, while 1 - x would round away
                    // the information in a small x.
                    1.0 - beta_reg(a, b, x)
                } else {
                    beta_reg(b, a, 1.0 - x)
                }
            }
            Kernel::Gamma { shape, .. } => {
                if x <= 0.0 {
                    1.0
                } else if x.is_infinite() {
                    0.0
                } else {
                    gamma_ur(shape, x)
                }
            }
        }
    }

    /// Density and derivative of the log density at an interior point.
    fn density(&self, x: f64) -> (f64, f64) {
        match *self {
            Kernel::Beta { a, b, ln_norm } => {
                let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_norm;
                (ln_pdf.exp(), (a - 1.0) / x - (b - 1.0) / (1.0 - x))
            }
            Kernel::Gamma { shape, ln_norm } => {
                let ln_pdf = (shape - 1.0) * x.ln() - x - ln_norm;
                (ln_pdf.exp(), (shape - 1.0) / x - 1.0)
            }
        }
    }

    fn cold_start(&self, p: f64) -> f64 {
        let z = normal_quantile(p).unwrap_or(0.0);
        match *self {
            Kernel::Beta { a, b, ln_norm } => {
                let mean = a / (a + b);
                if a >= 1.0 && b >= 1.0 {
                    let sd = (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
                    let x = mean + z * sd;
                    if x > 0.0 && x < 1.0 {
                        return x;
                    }
                }
                // Leading-order tail expansions of the regularized incomplete beta.
                let guess = if p <= 0.5 {
                    ((p.ln() + a.ln() + ln_norm) / a).exp()
                } else {
                    1.0 - (((1.0 - p).ln() + b.ln() + ln_norm) / b).exp()
                };
                if guess > 0.0 && guess < 1.0 {
                    guess
                } else {
                    mean
                }
            }
            Kernel::Gamma { shape, .. } => {
                if shape >= 1.0 {
                    let c = 1.0 / (9.0 * shape);
                    let t = shape * (1.0 - c + z * c.sqrt()).powi(3);
                    if t > 0.0 {
                        return t;
                    }
                }
                let guess = ((p.ln() + ln_gamma(shape + 1.0)) / shape).exp();
                if guess > 0.0 && guess.is_finite() {
                    guess
                } else {
                    shape.max(1e-3)
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        self.closed_form(p).unwrap_or_else(|| self.invert_from(p, None).0)
    }

    /// Explicit quantile for the shapes that have one: Beta(a, 1),
    /// Beta(1, b) and the unit exponential.
    fn closed_form(&self, p: f64) -> Option<f64> {
        match *self {
            Kernel::Beta { a, b: 1.0, .. } => Some((p.ln() / a).exp()),
            Kernel::Beta { a: 1.0, b, .. } => Some(-((-p).ln_1p() / b).exp_m1()),
            Kernel::Gamma { shape: 1.0, .. } => Some(-(-p).ln_1p()),
            _ => None,
        }
    }

    /// Solves F(x) = p by safeguarded Halley iteration.
    ///
    /// The residual is taken in whichever tail is smaller, so upper quantiles
    /// do not lose precision to cancellation. `start` is the final probe of
    /// a neighbouring solve.
    fn invert_from(&self, p: f64, start: Option<Probe>) -> (f64, Probe) {
        let upper_tail = p > 0.5;
        let q = 1.0 - p;
        let residual_of = |pr: &Probe| if upper_tail { q - pr.sf } else { pr.cdf - p };
        // Residuals below this are at the resolution of the incomplete
        // function itself; one more Newton step is all that can be gained.
        let noise = 8.0 * f64::EPSILON * if upper_tail { q } else { p };
        let mut lo = 0.0_f64;
        let mut hi = self.upper_support();

        // Seed: either the previous probe, whose residual for the new target
        // is known without evaluation but only approximately, or a fresh
        // evaluation at an approximate quantile.
        let (mut probe, mut exact) = match start {
            Some(prev) if prev.x > 0.0 && prev.x < hi && prev.pdf > 0.0 => (prev, false),
            _ => (self.probe(self.cold_start(p).clamp(f64::MIN_POSITIVE, hi.min(f64::MAX)), upper_tail), true),
        };
        let mut r = residual_of(&probe);

        for _ in 0..MAX_ITER {
            if exact {
                if r == 0.0 {
                    return (probe.x, probe);
                }
                if r < 0.0 {
                    lo = lo.max(probe.x);
                } else {
                    hi = hi.min(probe.x);
                }
            }
            let x = probe.x;
            let mut next = f64::NAN;
            if probe.pdf > 0.0 && probe.pdf.is_finite() {
                let denom = 2.0 * probe.pdf - r * probe.dlog;
                next = if denom.is_finite() && denom > 0.5 * probe.pdf {
                    x - 2.0 * r / denom
                } else {
                    x - r / probe.pdf
                };
            }
            if exact && (r.abs() <= noise || (next - x).abs() <= 4.0 * f64::EPSILON * x.abs()) {
                // Converged: the correction is below what the bracket can
                // resolve, so keep it only if it stays inside.
                let x_final = if next >= lo && next <= hi { next } else { x };
                return (x_final, probe);
            }
            if !(next > lo && next < hi) {
                next = split(lo, hi);
            }
            if hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi {
                let mid = 0.5 * (lo + hi);
                return (mid, self.probe(mid, upper_tail));
            }
            probe = self.probe(next, upper_tail);
            exact = true;
            r = residual_of(&probe);
        }
        (probe.x, probe)
    }

    fn probe(&self, x: f64, upper_tail: bool) -> Probe {
        // Only the tail being solved in is evaluated; the other is its
        // complement and serves only as a warm-start estimate.
        let (cdf, sf) = if upper_tail {
            let sf = self.sf(x);
            (1.0 - sf, sf)
        } else {
            let cdf = self.cdf(x);
            (cdf, 1.0 - cdf)
        };
        let (pdf, dlog) = self.density(x);
        Probe { x, cdf, sf, pdf, dlog }
    }
}

fn split(lo: f64, hi: f64) -> f64 {
    if hi.is_infinite() {
        if lo > 0.0 {
            lo * 4.0
        } else {
            1.0
        }
    } else if lo <= 0.0 {
        hi * 1e-3
    } else if hi > 8.0 * lo {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}
