//! Time-dependent propagation speeds `c(t)`.
//!
//! Every kind carries declared bounds `mu1 <= c <= mu2` and optionally a
//! continuity modulus. Piecewise coefficients are built from closed-form
//! shapes so that integrals (and hence moving averages) are exact.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::adaptive_simpson;
use crate::spaces::ContinuityModulus;

const TAU: f64 = core::f64::consts::TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("spread {0} must be below 1 to keep c strictly positive")]
    SpreadTooLarge(f64),
    #[error("Hoelder exponent must lie in (0, 1), got {0}")]
    BadExponent(f64),
    #[error("segments {0} and {1} do not meet")]
    Gap(usize, usize),
    #[error("segment {0} has empty or reversed interval")]
    EmptySegment(usize),
    #[error("a piecewise coefficient needs at least one segment")]
    NoSegments,
    #[error("sample times must be strictly increasing and match the values")]
    BadSamples,
    #[error("regularization width must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("audit grid is empty")]
    EmptyGrid,
}

/// Closed-form piece of a coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Constant { c: f64 },
    /// `c0 + slope * (t - t0)`
    Affine { t0: f64, c0: f64, slope: f64 },
    /// `offset + amp * sin(freq * t + phase)`
    Sine { offset: f64, amp: f64, freq: f64, phase: f64 },
    /// `base - 16 eps^2 sin^4(x) - 8 eps sin(2x)` with `x = freq * t + phase`.
    Gamma { base: f64, eps: f64, freq: f64, phase: f64 },
}

impl Shape {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Shape::Constant { c } => c,
            Shape::Affine { t0, c0, slope } => c0 + slope * (t - t0),
            Shape::Sine { offset, amp, freq, phase } => offset + amp * libm::sin(freq * t + phase),
            Shape::Gamma { base, eps, freq, phase } => {
                let x = freq * t + phase;
                let s = libm::sin(x);
                let s2 = s * s;
                base - 16.0 * eps * eps * s2 * s2 - 8.0 * eps * libm::sin(2.0 * x)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Shape::Constant { .. } => 0.0,
            Shape::Affine { slope, .. } => slope,
            Shape::Sine { amp, freq, phase, .. } => amp * freq * libm::cos(freq * t + phase),
            Shape::Gamma { eps, freq, phase, .. } => {
                let x = freq * t + phase;
                let (s, c) = (libm::sin(x), libm::cos(x));
                -64.0 * eps * eps * s * s * s * c * freq - 16.0 * eps * freq * libm::cos(2.0 * x)
            }
        }
    }

    /// An antiderivative; only differences are meaningful.
    fn antiderivative(&self, t: f64) -> f64 {
        match *self {
            Shape::Constant { c } => c * t,
            Shape::Affine { t0, c0, slope } => {
                let d = t - t0;
                c0 * d + 0.5 * slope * d * d
            }
            Shape::Sine { offset, amp, freq, phase } => {
                if freq == 0.0 {
                    (offset + amp * libm::sin(phase)) * t
                } else {
                    offset * t - amp * libm::cos(freq * t + phase) / freq
                }
            }
            Shape::Gamma { base, eps, freq, phase } => {
                if freq == 0.0 {
                    return Shape::Constant { c: self.eval(0.0) }.antiderivative(t);
                }
                let x = freq * t + phase;
                // sin^4 x = 3/8 - cos(2x)/2 + cos(4x)/8
                let sin4 = 0.375 * t - libm::sin(2.0 * x) / (4.0 * freq) + libm::sin(4.0 * x) / (32.0 * freq);
                base * t - 16.0 * eps * eps * sin4 + 4.0 * eps * libm::cos(2.0 * x) / freq
            }
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            Shape::Constant { c } => c * (b - a),
            Shape::Affine { .. } => 0.5 * (self.eval(a) + self.eval(b)) * (b - a),
            _ => self.antiderivative(b) - self.antiderivative(a),
        }
    }

    /// Cheap enclosure of the range of the shape on `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        match *self {
            Shape::Constant { c } => (c, c),
            Shape::Affine { .. } => {
                let (x, y) = (self.eval(a), self.eval(b));
                (x.min(y), x.max(y))
            }
            Shape::Sine { offset, amp, .. } => (offset - amp.abs(), offset + amp.abs()),
            Shape::Gamma { base, eps, .. } => {
                let e = eps.abs();
                (base - 16.0 * e * e - 8.0 * e, base + 8.0 * e)
            }
        }
    }

    /// Largest oscillation frequency of the shape.
    pub fn frequency(&self) -> f64 {
        match *self {
            Shape::Sine { freq, .. } => freq.abs(),
            Shape::Gamma { freq, .. } => freq.abs(),
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub shape: Shape,
}

/// Representation of `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant {
        c0: f64,
    },
    /// Contiguous segments; extended by the boundary values outside.
    Piecewise {
        segments: Vec<Segment>,
    },
    /// Linear interpolation through `(ts, cs)`.
    Sampled {
        ts: Vec<f64>,
        cs: Vec<f64>,
    },
    /// `1 + amp * sum_j 2^(-j alpha) cos(2^j base_freq t + phases[j])`
    Lacunary {
        alpha: f64,
        amp: f64,
        base_freq: f64,
        phases: Vec<f64>,
    },
    /// `sum_i w_i c_i`
    Combination {
        terms: Vec<(f64, Coefficient)>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    #[serde(flatten)]
    pub kind: CoefficientKind,
    pub mu1: f64,
    pub mu2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<ContinuityModulus>,
}

impl Coefficient {
    pub fn constant(c0: f64) -> Coefficient {
        Coefficient {
            kind: CoefficientKind::Constant { c0 },
            mu1: c0,
            mu2: c0,
            modulus: Some(ContinuityModulus::Lipschitz { l: 0.0 }),
        }
    }

    /// Piecewise coefficient with bounds taken from the shape enclosures.
    pub fn piecewise(segments: Vec<Segment>) -> Result<Coefficient, CoefficientError> {
        if segments.is_empty() {
            return Err(CoefficientError::NoSegments);
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.end > s.start) {
                return Err(CoefficientError::EmptySegment(i));
            }
            if i > 0 && segments[i - 1].end != s.start {
                return Err(CoefficientError::Gap(i - 1, i));
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &segments {
            let end = if s.end.is_finite() { s.end } else { s.start };
            let (a, b) = s.shape.range_on(s.start, end);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Ok(Coefficient {
            kind: CoefficientKind::Piecewise { segments },
            mu1: lo,
            mu2: hi,
            modulus: None,
        })
    }

    pub fn sampled(ts: Vec<f64>, cs: Vec<f64>) -> Result<Coefficient, CoefficientError> {
        if ts.is_empty() || ts.len() != cs.len() || ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoefficientError::BadSamples);
        }
        let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Coefficient {
            kind: CoefficientKind::Sampled { ts, cs },
            mu1: lo,
            mu2: hi,
            modulus: None,
        })
    }

    /// Weighted sum. Bounds are the interval sum; no modulus is declared.
    pub fn combination(terms: Vec<(f64, Coefficient)>) -> Coefficient {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (w, c) in &terms {
            lo += (w * c.mu1).min(w * c.mu2);
            hi += (w * c.mu1).max(w * c.mu2);
        }
        Coefficient {
            kind: CoefficientKind::Combination { terms },
            mu1: lo,
            mu2: hi,
            modulus: None,
        }
    }

    pub fn with_modulus(mut self, w: ContinuityModulus) -> Coefficient {
        self.modulus = Some(w);
        self
    }

    pub fn with_bounds(mut self, mu1: f64, mu2: f64) -> Coefficient {
        self.mu1 = mu1;
        self.mu2 = mu2;
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            CoefficientKind::Constant { c0 } => *c0,
            CoefficientKind::Piecewise { segments } => {
                let (seg, tt) = locate(segments, t);
                seg.shape.eval(tt)
            }
            CoefficientKind::Sampled { ts, cs } => {
                let n = ts.len();
                if t <= ts[0] {
                    return cs[0];
                }
                if t >= ts[n - 1] {
                    return cs[n - 1];
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                cs[i] + (cs[i + 1] - cs[i]) * (t - ts[i]) / (ts[i + 1] - ts[i])
            }
            CoefficientKind::Lacunary { alpha, amp, base_freq, phases } => {
                let mut s = 0.0;
                for (j, ph) in phases.iter().enumerate() {
                    let f = libm::ldexp(*base_freq, j as i32);
                    s += libm::exp2(-(j as f64) * alpha) * libm::cos(f * t + ph);
                }
                1.0 + amp * s
            }
            CoefficientKind::Combination { terms } => terms.iter().map(|(w, c)| w * c.eval(t)).sum(),
        }
    }

    /// `c(t)` using the formula of the piece containing `inside`; used by
    /// integrators so that stages on a boundary see the current piece.
    pub fn eval_in(&self, t: f64, inside: f64) -> f64 {
        if let CoefficientKind::Piecewise { segments } = &self.kind {
            let (seg, _) = locate(segments, inside);
            if t >= seg.start && t <= seg.end {
                return seg.shape.eval(t);
            }
        }
        self.eval(t)
    }

    /// `c'(t)`, one-sided from the right at breakpoints; zero outside the
    /// represented range.
    pub fn derivative(&self, t: f64) -> f64 {
        match &self.kind {
            CoefficientKind::Constant { .. } => 0.0,
            CoefficientKind::Piecewise { segments } => {
                let first = &segments[0];
                let last = &segments[segments.len() - 1];
                if t < first.start || t > last.end {
                    return 0.0;
                }
                let (seg, tt) = locate(segments, t);
                seg.shape.derivative(tt)
            }
            CoefficientKind::Sampled { ts, cs } => {
                let n = ts.len();
                if n < 2 || t < ts[0] || t >= ts[n - 1] {
                    return 0.0;
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                (cs[i + 1] - cs[i]) / (ts[i + 1] - ts[i])
            }
            CoefficientKind::Lacunary { alpha, amp, base_freq, phases } => {
                let mut s = 0.0;
                for (j, ph) in phases.iter().enumerate() {
                    let f = libm::ldexp(*base_freq, j as i32);
                    s -= libm::exp2(-(j as f64) * alpha) * f * libm::sin(f * t + ph);
                }
                amp * s
            }
            CoefficientKind::Combination { terms } => terms.iter().map(|(w, c)| w * c.derivative(t)).sum(),
        }
    }

    /// `int_a^b c(s) ds`, exact up to rounding for every kind.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        if a == b {
            return 0.0;
        }
        match &self.kind {
            CoefficientKind::Constant { c0 } => c0 * (b - a),
            CoefficientKind::Piecewise { segments } => {
                let first = &segments[0];
                let last = &segments[segments.len() - 1];
                let mut total = 0.0;
                if a < first.start {
                    let hi = b.min(first.start);
                    total += first.shape.eval(first.start) * (hi - a);
                }
                if b > last.end {
                    let lo = a.max(last.end);
                    total += last.shape.eval(last.end) * (b - lo);
                }
                for s in segments {
                    let lo = a.max(s.start);
                    let hi = b.min(s.end);
                    if hi > lo {
                        total += s.shape.integral(lo, hi);
                    }
                }
                total
            }
            CoefficientKind::Sampled { ts, .. } => {
                let mut pts = Vec::with_capacity(8);
                pts.push(a);
                let lo = ts.partition_point(|&x| x <= a);
                let hi = ts.partition_point(|&x| x < b);
                pts.extend_from_slice(&ts[lo..hi]);
                pts.push(b);
                pts.windows(2).map(|w| 0.5 * (self.eval(w[0]) + self.eval(w[1])) * (w[1] - w[0])).sum()
            }
            CoefficientKind::Lacunary { alpha, amp, base_freq, phases } => {
                let mut s = 0.0;
                for (j, ph) in phases.iter().enumerate() {
                    let f = libm::ldexp(*base_freq, j as i32);
                    s += libm::exp2(-(j as f64) * alpha) * (libm::sin(f * b + ph) - libm::sin(f * a + ph)) / f;
                }
                (b - a) + amp * s
            }
            CoefficientKind::Combination { terms } => terms.iter().map(|(w, c)| w * c.integral(a, b)).sum(),
        }
    }

    /// `int_a^b |c(s)| ds`; exact where the sign is known, adaptive Simpson
    /// otherwise.
    pub fn abs_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        if self.mu1 >= 0.0 {
            return self.integral(a, b);
        }
        let mut pts = Vec::new();
        pts.push(a);
        pts.extend(self.breakpoints().into_iter().filter(|&t| t > a && t < b));
        pts.push(b);
        let f = |t: f64| libm::fabs(self.eval(t));
        pts.windows(2)
            .map(|w| {
                let h = self.max_step(w[0]).unwrap_or(w[1] - w[0]);
                let pieces = libm::ceil((w[1] - w[0]) / h).clamp(1.0, 1e6) as usize;
                let dh = (w[1] - w[0]) / pieces as f64;
                (0..pieces)
                    .map(|i| {
                        let lo = w[0] + dh * i as f64;
                        adaptive_simpson(&f, lo, lo + dh, 1e-12, 30)
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Times where the representation switches formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            CoefficientKind::Piecewise { segments } => {
                let mut v: Vec<f64> = segments.iter().map(|s| s.start).collect();
                let last = segments[segments.len() - 1].end;
                if last.is_finite() {
                    v.push(last);
                }
                v
            }
            CoefficientKind::Sampled { ts, .. } => ts.clone(),
            CoefficientKind::Combination { terms } => {
                let mut v: Vec<f64> = terms.iter().flat_map(|(_, c)| c.breakpoints()).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
            _ => Vec::new(),
        }
    }

    /// Step cap resolving oscillations near `t`: a twentieth of the local
    /// shortest period. `None` when `c` does not oscillate there.
    pub fn max_step(&self, t: f64) -> Option<f64> {
        let f = match &self.kind {
            CoefficientKind::Piecewise { segments } => {
                let (seg, _) = locate(segments, t);
                let inside = t >= segments[0].start && t < segments[segments.len() - 1].end;
                if inside {
                    seg.shape.frequency()
                } else {
                    0.0
                }
            }
            CoefficientKind::Lacunary { base_freq, phases, .. } => {
                libm::ldexp(*base_freq, phases.len().saturating_sub(1) as i32)
            }
            CoefficientKind::Combination { terms } => terms
                .iter()
                .filter_map(|(_, c)| c.max_step(t))
                .map(|h| TAU / (20.0 * h))
                .fold(0.0, f64::max),
            _ => 0.0,
        };
        if f > 0.0 {
            Some(TAU / f / 20.0)
        } else {
            None
        }
    }

    /// The value of `c` if it is constant on `[a, b]`.
    pub fn constant_on(&self, a: f64, b: f64) -> Option<f64> {
        match &self.kind {
            CoefficientKind::Constant { c0 } => Some(*c0),
            CoefficientKind::Piecewise { segments } => {
                let first = &segments[0];
                let last = &segments[segments.len() - 1];
                if b <= first.start {
                    return Some(first.shape.eval(first.start));
                }
                if a >= last.end {
                    return Some(last.shape.eval(last.end));
                }
                let (seg, _) = locate(segments, 0.5 * (a + b));
                let covers = a >= seg.start && b <= seg.end;
                match seg.shape {
                    Shape::Constant { c } if covers => Some(c),
                    _ => None,
                }
            }
            CoefficientKind::Sampled { ts, cs } => {
                let n = ts.len();
                if b <= ts[0] {
                    Some(cs[0])
                } else if a >= ts[n - 1] {
                    Some(cs[n - 1])
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Enclosure of `c` on `[a, b]`, used to judge stiffness.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        match &self.kind {
            CoefficientKind::Constant { c0 } => (*c0, *c0),
            CoefficientKind::Piecewise { segments } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let first = &segments[0];
                let last = &segments[segments.len() - 1];
                if a < first.start {
                    let v = first.shape.eval(first.start);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if b > last.end {
                    let v = last.shape.eval(last.end);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                for s in segments {
                    let l = a.max(s.start);
                    let h = b.min(s.end);
                    if h >= l && l < s.end {
                        let (x, y) = s.shape.range_on(l, h);
                        lo = lo.min(x);
                        hi = hi.max(y);
                    }
                }
                (lo, hi)
            }
            _ => (self.mu1, self.mu2),
        }
    }
}

/// Segment containing `t` and the time at which to evaluate it (clamped to
/// the segment for the outer extensions).
fn locate(segments: &[Segment], t: f64) -> (&Segment, f64) {
    let first = &segments[0];
    if t < first.start {
        return (first, first.start);
    }
    let i = segments.partition_point(|s| s.start <= t).saturating_sub(1);
    let seg = &segments[i];
    if t > seg.end {
        (seg, seg.end)
    } else {
        (seg, t)
    }
}

/// Forward moving average `c_eps(t) = (1/eps) int_t^{t+eps} c`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedCoefficient {
    pub base: Coefficient,
    pub epsilon: f64,
}

impl RegularizedCoefficient {
    pub fn eval(&self, t: f64) -> f64 {
        if let CoefficientKind::Constant { c0 } = self.base.kind {
            return c0;
        }
        self.base.integral(t, t + self.epsilon) / self.epsilon
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if let CoefficientKind::Constant { .. } = self.base.kind {
            return 0.0;
        }
        (self.base.eval(t + self.epsilon) - self.base.eval(t)) / self.epsilon
    }
}

pub fn regularize(c: &Coefficient, eps: f64) -> Result<RegularizedCoefficient, CoefficientError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoefficientError::BadEpsilon(eps));
    }
    Ok(RegularizedCoefficient {
        base: c.clone(),
        epsilon: eps,
    })
}

/// Lacunary cosine series with Hoelder modulus `M' x^alpha`.
///
/// Levels `j = 0, 1, ...` are kept while the level's share of the spread
/// exceeds `1e-14` and its frequency stays below `max_frequency`.
pub fn synthesize_hoelder_capped(
    alpha: f64,
    spread: f64,
    seed: u64,
    base_freq: f64,
    max_frequency: f64,
) -> Result<Coefficient, CoefficientError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoefficientError::BadExponent(alpha));
    }
    if !(0.0..1.0).contains(&spread) {
        return Err(CoefficientError::SpreadTooLarge(spread));
    }
    if spread == 0.0 {
        return Ok(Coefficient::constant(1.0));
    }
    let decay = 1.0 - libm::exp2(-alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases = Vec::new();
    let mut norm = 0.0;
    let mut j = 0;
    loop {
        let w = libm::exp2(-(j as f64) * alpha);
        let f = libm::ldexp(base_freq, j);
        if j > 0 && (spread * w * decay < 1e-14 || f > max_frequency) {
            break;
        }
        phases.push(rng.gen_range(0.0..TAU));
        norm += w;
        j += 1;
    }
    let amp = spread / norm;
    let m_prime = (amp * libm::pow(base_freq, alpha)
        * (1.0 / (1.0 - libm::exp2(alpha - 1.0)) + 2.0 / decay))
        .max(f64::EPSILON);
    Ok(Coefficient {
        kind: CoefficientKind::Lacunary { alpha, amp, base_freq, phases },
        mu1: 1.0 - spread,
        mu2: 1.0 + spread,
        modulus: Some(ContinuityModulus::Hoelder { alpha, m: m_prime }),
    })
}

/// Default frequency cap of [`synthesize_hoelder`].
pub const DEFAULT_MAX_FREQUENCY: f64 = 1.0e4;

pub fn synthesize_hoelder(alpha: f64, spread: f64, seed: u64, base_freq: f64) -> Result<Coefficient, CoefficientError> {
    synthesize_hoelder_capped(alpha, spread, seed, base_freq, DEFAULT_MAX_FREQUENCY)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Hyperbolicity {
    Strict { mu1: f64, mu2: f64 },
    Degenerate { mu2: f64 },
    None { inf: f64 },
}

/// Classifies by the sampled infimum and supremum; values within `tol` of
/// zero count as zero.
pub fn hyperbolicity_class_tol(c: &Coefficient, grid: &[f64], tol: f64) -> Result<Hyperbolicity, CoefficientError> {
    if grid.is_empty() {
        return Err(CoefficientError::EmptyGrid);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &t in grid {
        let v = c.eval(t);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(if lo > tol {
        Hyperbolicity::Strict { mu1: lo, mu2: hi }
    } else if lo >= -tol {
        Hyperbolicity::Degenerate { mu2: hi }
    } else {
        Hyperbolicity::None { inf: lo }
    })
}

pub fn hyperbolicity_class(c: &Coefficient, grid: &[f64]) -> Result<Hyperbolicity, CoefficientError> {
    hyperbolicity_class_tol(c, grid, 1e-12)
}

/// Largest excursion of `c` outside `[mu1, mu2]` on `grid` (zero if inside).
pub fn bounds_excess(c: &Coefficient, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&t| {
            let v = c.eval(t);
            (c.mu1 - v).max(v - c.mu2).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::lin_space;

    #[test]
    fn constant_regularizes_exactly() {
        let c = Coefficient::constant(1.7);
        let r = regularize(&c, 0.3).unwrap();
        assert_eq!(r.eval(12.0), 1.7);
        assert_eq!(r.derivative(12.0), 0.0);
    }

    #[test]
    fn linear_average() {
        let c = Coefficient::piecewise(alloc::vec![Segment {
            start: -100.0,
            end: 100.0,
            shape: Shape::Affine { t0: 0.0, c0: 0.0, slope: 1.0 },
        }])
        .unwrap();
        let r = regularize(&c, 1.0).unwrap();
        for t in [0.0, 0.5, 3.25] {
            assert!((r.eval(t) - (t + 0.5)).abs() < 1e-12);
            assert!((r.derivative(t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_integral_matches_simpson() {
        let s = Shape::Gamma { base: 1.01, eps: 0.1, freq: 7.0, phase: 0.3 };
        let exact = s.integral(0.2, 1.9);
        let q = adaptive_simpson(&|t| s.eval(t), 0.2, 1.9, 1e-13, 40);
        assert!((exact - q).abs() < 1e-10);
        let h = 1e-6;
        let fd = (s.eval(0.7 + h) - s.eval(0.7 - h)) / (2.0 * h);
        assert!((fd - s.derivative(0.7)).abs() < 1e-5);
    }

    #[test]
    fn piecewise_rejects_gaps() {
        let segs = alloc::vec![
            Segment { start: 0.0, end: 1.0, shape: Shape::Constant { c: 1.0 } },
            Segment { start: 1.5, end: 2.0, shape: Shape::Constant { c: 1.0 } },
        ];
        assert_eq!(Coefficient::piecewise(segs), Err(CoefficientError::Gap(0, 1)));
    }

    #[test]
    fn synthesis_rules() {
        let c = synthesize_hoelder(0.3, 0.2, 1, 1.0).unwrap();
        assert!(c.mu1 >= 0.6);
        assert_eq!(synthesize_hoelder(0.5, 0.0, 3, 1.0).unwrap().eval(1.234), 1.0);
        assert_eq!(synthesize_hoelder(0.5, 1.0, 3, 1.0), Err(CoefficientError::SpreadTooLarge(1.0)));
        let grid = lin_space(0.0, 10.0, 5001);
        assert_eq!(bounds_excess(&c, &grid), 0.0);
    }

    #[test]
    fn classes() {
        let grid = lin_space(0.0, 3.0, 301);
        assert_eq!(
            hyperbolicity_class(&Coefficient::constant(1.0), &grid).unwrap(),
            Hyperbolicity::Strict { mu1: 1.0, mu2: 1.0 }
        );
        let sin2 = Coefficient::piecewise(alloc::vec![Segment {
            start: 0.0,
            end: 10.0,
            shape: Shape::Sine { offset: 0.5, amp: -0.5, freq: 2.0, phase: core::f64::consts::FRAC_PI_2 },
        }])
        .unwrap();
        let mut g = grid.clone();
        g.push(core::f64::consts::FRAC_PI_2);
        match hyperbolicity_class(&sin2, &g).unwrap() {
            Hyperbolicity::Degenerate { mu2 } => assert!((mu2 - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
