//! Sequence-space norms, weight functions and continuity moduli.
//!
//! A vector is a finite list of `(lambda_k, u_k)` pairs. Weighted norms are
//! `sum (1 + lambda_k)^(4 alpha) u_k^2 exp(+-2 r w(lambda_k))`, evaluated as a
//! log-sum-exp so that Gevrey weights far beyond `f64::MAX` stay finite.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{log_space, log_sum_exp};
use crate::xf::Xf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpacesError {
    #[error("negative radius {0}")]
    NegativeRadius(f64),
    #[error("spectral values must be positive and strictly increasing (index {0})")]
    BadSpectrum(usize),
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("audit grid needs at least two sorted positive points")]
    BadGrid,
    #[error("tabulated function needs sorted x values and matching y values")]
    BadTable,
    #[error("Hoelder exponent must lie in (0, 1], got {0}")]
    BadExponent(f64),
}

/// Piecewise-linear table, `x` strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Table, SpacesError> {
        if xs.len() != ys.len() || xs.is_empty() || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpacesError::BadTable);
        }
        Ok(Table { xs, ys })
    }

    /// Linear interpolation, clamped to the end values outside the range.
    pub fn interp(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// Continuity modulus `omega`.
///
/// Tabulated moduli extend linearly to zero below the first node and
/// constantly above the last one, which preserves both monotonicity
/// requirements.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuityModulus {
    /// `m * x^alpha`
    Hoelder { alpha: f64, m: f64 },
    /// `l * x`
    Lipschitz { l: f64 },
    /// `m * x * (1 + ln(1/x))` on `(0, 1]`, `m * x` beyond.
    LogType { m: f64 },
    Tabulated { table: Table },
    /// Arbitrary function; not serializable.
    #[serde(skip)]
    Custom(fn(f64) -> f64),
}

// Custom moduli never compare equal: function identity is not observable.
impl PartialEq for ContinuityModulus {
    fn eq(&self, o: &Self) -> bool {
        use ContinuityModulus::*;
        match (self, o) {
            (Hoelder { alpha: a, m: b }, Hoelder { alpha: c, m: d }) => a == c && b == d,
            (Lipschitz { l: a }, Lipschitz { l: b }) => a == b,
            (LogType { m: a }, LogType { m: b }) => a == b,
            (Tabulated { table: a }, Tabulated { table: b }) => a == b,
            _ => false,
        }
    }
}

impl ContinuityModulus {
    pub fn hoelder(alpha: f64, m: f64) -> Result<Self, SpacesError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SpacesError::BadExponent(alpha));
        }
        Ok(ContinuityModulus::Hoelder { alpha, m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            ContinuityModulus::Hoelder { alpha, m } => m * libm::pow(x, *alpha),
            ContinuityModulus::Lipschitz { l } => l * x,
            ContinuityModulus::LogType { m } => {
                if x <= 1.0 {
                    m * x * (1.0 - libm::log(x))
                } else {
                    m * x
                }
            }
            ContinuityModulus::Tabulated { table } => {
                if x < table.xs[0] {
                    table.ys[0] * x / table.xs[0]
                } else {
                    table.interp(x)
                }
            }
            ContinuityModulus::Custom(f) => f(x),
        }
    }

    /// Evaluation at extended-range arguments.
    pub fn eval_xf(&self, x: Xf) -> Xf {
        if x <= Xf::ZERO {
            return Xf::ZERO;
        }
        match self {
            ContinuityModulus::Hoelder { alpha, m } => x.powf(*alpha) * *m,
            ContinuityModulus::Lipschitz { l } => x * *l,
            ContinuityModulus::LogType { m } => {
                if x <= Xf::ONE {
                    x * (1.0 - x.ln()) * *m
                } else {
                    x * *m
                }
            }
            ContinuityModulus::Tabulated { table } => {
                let x0 = Xf::new(table.xs[0]);
                if x < x0 {
                    x * (table.ys[0] / table.xs[0])
                } else {
                    Xf::new(table.interp(x.to_f64()))
                }
            }
            ContinuityModulus::Custom(f) => Xf::new(f(x.to_f64())),
        }
    }
}

/// Positive weight function (`phi` for Gevrey classes, `psi` for
/// ultradistributions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    /// `x^p`
    Power { p: f64 },
    /// Linear interpolation, constant extension outside the nodes.
    Tabulated { table: Table },
}

impl WeightFunction {
    pub fn power(p: f64) -> Self {
        WeightFunction::Power { p }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            WeightFunction::Power { p } => libm::pow(x, *p),
            WeightFunction::Tabulated { table } => table.interp(x),
        }
    }

    pub fn eval_xf(&self, x: Xf) -> Xf {
        match self {
            WeightFunction::Power { p } => x.powf(*p),
            WeightFunction::Tabulated { table } => Xf::new(table.interp(x.to_f64())),
        }
    }
}

/// Strictly increasing list of positive frequencies `lambda_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SpectralSequence {
    lambdas: Vec<f64>,
}

impl SpectralSequence {
    pub fn new(lambdas: Vec<f64>) -> Result<Self, SpacesError> {
        for (i, &l) in lambdas.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) || (i > 0 && l <= lambdas[i - 1]) {
                return Err(SpacesError::BadSpectrum(i));
            }
        }
        Ok(SpectralSequence { lambdas })
    }

    /// `lambda_k = 2^k` for `k = 0..=kmax`.
    pub fn powers_of_two(kmax: u32) -> Self {
        SpectralSequence {
            lambdas: (0..=kmax).map(|k| libm::ldexp(1.0, k as i32)).collect(),
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SpectralSequence {
    type Error = SpacesError;
    fn try_from(v: Vec<f64>) -> Result<Self, SpacesError> {
        SpectralSequence::new(v)
    }
}

impl From<SpectralSequence> for Vec<f64> {
    fn from(s: SpectralSequence) -> Vec<f64> {
        s.lambdas
    }
}

/// Fourier components `(lambda_k, u_k)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeVector {
    pub components: Vec<(f64, f64)>,
}

impl ModeVector {
    pub fn new(components: Vec<(f64, f64)>) -> Self {
        ModeVector { components }
    }

    /// Pairs the spectrum with `values` (shorter of the two wins).
    pub fn from_spectrum(spec: &SpectralSequence, values: &[f64]) -> Self {
        ModeVector {
            components: spec.lambdas().iter().copied().zip(values.iter().copied()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSign {
    Gevrey,
    Ultra,
    Sobolev,
}

/// Gevrey (`+`), ultradistribution (`-`) or plain Sobolev norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub weight: WeightFunction,
    pub radius: f64,
    pub sobolev: f64,
    pub sign: NormSign,
}

impl WeightedNorm {
    pub fn sobolev(alpha: f64) -> Self {
        WeightedNorm {
            weight: WeightFunction::power(0.0),
            radius: 0.0,
            sobolev: alpha,
            sign: NormSign::Sobolev,
        }
    }

    pub fn gevrey(weight: WeightFunction, r: f64, alpha: f64) -> Self {
        WeightedNorm {
            weight,
            radius: r,
            sobolev: alpha,
            sign: NormSign::Gevrey,
        }
    }

    pub fn ultra(weight: WeightFunction, big_r: f64, alpha: f64) -> Self {
        WeightedNorm {
            weight,
            radius: big_r,
            sobolev: alpha,
            sign: NormSign::Ultra,
        }
    }

    /// Log of the weight multiplying `u_k^2`.
    pub fn log_weight(&self, lambda: f64) -> f64 {
        let base = 4.0 * self.sobolev * libm::log1p(lambda);
        match self.sign {
            NormSign::Sobolev => base,
            NormSign::Gevrey => base + 2.0 * self.radius * self.weight.eval(lambda),
            NormSign::Ultra => base - 2.0 * self.radius * self.weight.eval(lambda),
        }
    }
}

/// Squared norm as a log value; `value` is finite (saturated at `f64::MAX`
/// when `overflow` is set).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub log_value: f64,
    pub value: f64,
    pub overflow: bool,
}

pub fn norm_squared(v: &ModeVector, n: &WeightedNorm) -> Result<NormValue, SpacesError> {
    if n.sign != NormSign::Sobolev && n.radius < 0.0 {
        return Err(SpacesError::NegativeRadius(n.radius));
    }
    let mut terms = Vec::with_capacity(v.components.len());
    for (i, &(lambda, u)) in v.components.iter().enumerate() {
        if !lambda.is_finite() || !u.is_finite() {
            return Err(SpacesError::NonFinite(i));
        }
        if u != 0.0 {
            terms.push(n.log_weight(lambda) + 2.0 * libm::log(libm::fabs(u)));
        }
    }
    let log_value = log_sum_exp(terms);
    let raw = libm::exp(log_value);
    let overflow = !raw.is_finite();
    Ok(NormValue {
        log_value,
        value: if overflow { f64::MAX } else { raw },
        overflow,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusDefect {
    /// `omega(0) != 0`
    NonzeroAtOrigin,
    /// `omega(x) <= 0` at a positive grid point
    NotPositive,
    /// `omega` decreases between adjacent grid points
    Decreasing,
    /// `x / omega(x)` decreases between adjacent grid points
    RatioDecreasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusViolation {
    pub defect: ModulusDefect,
    pub x_left: f64,
    pub x_right: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub points: usize,
    pub violations: Vec<ModulusViolation>,
}

impl ModulusReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// 10^4 log-spaced points on `[1e-8, 1e2]`.
pub fn default_modulus_grid() -> Vec<f64> {
    log_space(1e-8, 1e2, 10_000)
}

/// Checks `omega(0) = 0`, positivity, and monotonicity of `omega` and of
/// `x / omega(x)` on adjacent grid pairs. A relative slack of `1e-12` absorbs
/// rounding in the ratio.
pub fn check_modulus(w: &ContinuityModulus, grid: &[f64]) -> Result<ModulusReport, SpacesError> {
    if grid.len() < 2 || grid[0] <= 0.0 || grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(SpacesError::BadGrid);
    }
    let mut violations = Vec::new();
    if w.eval(0.0) != 0.0 {
        violations.push(ModulusViolation {
            defect: ModulusDefect::NonzeroAtOrigin,
            x_left: 0.0,
            x_right: 0.0,
        });
    }
    let vals: Vec<f64> = grid.iter().map(|&x| w.eval(x)).collect();
    for (i, &v) in vals.iter().enumerate() {
        if !(v > 0.0) {
            violations.push(ModulusViolation {
                defect: ModulusDefect::NotPositive,
                x_left: grid[i],
                x_right: grid[i],
            });
        }
    }
    let slack = 1e-12;
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let (wa, wb) = (vals[i], vals[i + 1]);
        if wb < wa * (1.0 - slack) {
            violations.push(ModulusViolation {
                defect: ModulusDefect::Decreasing,
                x_left: a,
                x_right: b,
            });
        }
        if wa > 0.0 && wb > 0.0 && b / wb < (a / wa) * (1.0 - slack) {
            violations.push(ModulusViolation {
                defect: ModulusDefect::RatioDecreasing,
                x_left: a,
                x_right: b,
            });
        }
    }
    Ok(ModulusReport {
        points: grid.len(),
        violations,
    })
}

/// Outcome of a sampled `omega`-continuity audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityAudit {
    pub worst_ratio: f64,
    pub worst_s: f64,
    pub worst_t: f64,
    pub pairs_checked: usize,
    /// Spacing of the adjacent-sample grid.
    pub resolution: f64,
}

impl ContinuityAudit {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

/// Worst `|c(s) - c(t)| / omega(|s - t|)` over `pairs` seeded random pairs in
/// `[a, b]` plus all adjacent pairs of a uniform grid of `samples` points.
pub fn omega_continuity_audit<F: Fn(f64) -> f64>(
    c: F,
    a: f64,
    b: f64,
    samples: usize,
    w: &ContinuityModulus,
    pairs: usize,
    seed: u64,
) -> ContinuityAudit {
    let samples = samples.max(2);
    let mut audit = ContinuityAudit {
        worst_ratio: 0.0,
        worst_s: a,
        worst_t: a,
        pairs_checked: 0,
        resolution: (b - a) / (samples - 1) as f64,
    };
    let mut consider = |s: f64, t: f64, cs: f64, ct: f64| {
        audit.pairs_checked += 1;
        let d = libm::fabs(cs - ct);
        if d == 0.0 {
            return;
        }
        let om = w.eval(libm::fabs(s - t));
        let ratio = if om > 0.0 { d / om } else { f64::INFINITY };
        if ratio > audit.worst_ratio {
            audit.worst_ratio = ratio;
            audit.worst_s = s;
            audit.worst_t = t;
        }
    };
    let grid = crate::math::lin_space(a, b, samples);
    let vals: Vec<f64> = grid.iter().map(|&t| c(t)).collect();
    for i in 0..samples - 1 {
        consider(grid[i], grid[i + 1], vals[i], vals[i + 1]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..pairs {
        let s = rng.gen_range(a..=b);
        // Half the pairs are short-range so that small scales are probed.
        let t = if rng.gen_bool(0.5) {
            let scale = libm::pow(10.0, rng.gen_range(-9.0..0.0)) * (b - a);
            (s + scale).min(b)
        } else {
            rng.gen_range(a..=b)
        };
        if s != t {
            consider(s, t, c(s), c(t));
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let v = ModeVector::new(alloc::vec![(1.0, 1.0)]);
        let n = norm_squared(&v, &WeightedNorm::sobolev(0.0)).unwrap();
        assert_eq!(n.value, 1.0);
        let n = norm_squared(&v, &WeightedNorm::sobolev(0.5)).unwrap();
        assert!((n.value - 4.0).abs() < 1e-14);
        let v2 = ModeVector::new(alloc::vec![(2.0, 1.0)]);
        let g = WeightedNorm::gevrey(WeightFunction::power(1.0), 1.0, 0.0);
        let n = norm_squared(&v2, &g).unwrap();
        assert!((n.value - libm::exp(4.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_vector_is_zero_and_negative_radius_rejected() {
        let n = norm_squared(&ModeVector::default(), &WeightedNorm::sobolev(1.0)).unwrap();
        assert_eq!(n.value, 0.0);
        let bad = WeightedNorm::gevrey(WeightFunction::power(1.0), -1.0, 0.0);
        assert_eq!(
            norm_squared(&ModeVector::default(), &bad),
            Err(SpacesError::NegativeRadius(-1.0))
        );
    }

    #[test]
    fn overflow_is_flagged() {
        let v = ModeVector::new(alloc::vec![(1e6, 1.0)]);
        let g = WeightedNorm::gevrey(WeightFunction::power(1.0), 1.0, 0.0);
        let n = norm_squared(&v, &g).unwrap();
        assert!(n.overflow);
        assert_eq!(n.value, f64::MAX);
        assert!((n.log_value - 2e6).abs() < 1e-6);
    }

    #[test]
    fn modulus_checks() {
        let sqrt = ContinuityModulus::hoelder(0.5, 1.0).unwrap();
        let grid = crate::math::lin_space(0.01, 1.0, 100);
        assert!(check_modulus(&sqrt, &grid).unwrap().passed());
        let sq = ContinuityModulus::Custom(|x| x * x);
        let r = check_modulus(&sq, &[0.1, 0.2]).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].defect, ModulusDefect::RatioDecreasing);
        assert_eq!(check_modulus(&sqrt, &[0.5]), Err(SpacesError::BadGrid));
        let lt = ContinuityModulus::LogType { m: 1.0 };
        assert!(check_modulus(&lt, &default_modulus_grid()).unwrap().passed());
    }

    #[test]
    fn audit_equality_case() {
        let w = ContinuityModulus::Lipschitz { l: 1.0 };
        let a = omega_continuity_audit(|t| t, 0.0, 1.0, 100, &w, 1000, 3);
        assert_eq!(a.worst_ratio, 1.0);
        let c = omega_continuity_audit(|_| 2.0, 0.0, 1.0, 100, &w, 1000, 3);
        assert_eq!(c.worst_ratio, 0.0);
    }
}
