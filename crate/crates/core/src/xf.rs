//! Extended-exponent floating point.
//!
//! [`Xf`] stores an `f64` mantissa in `[0.5, 1)` (with sign) and an `i64`
//! binary exponent, so it represents magnitudes up to roughly `2^(9e18)`.
//! Precision is that of `f64`; only the range is extended. The resonant
//! counterexample needs frequencies like `2^(10^15)`, far past `f64::MAX`.

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use alloc::format;
use alloc::string::String;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const LN_2: f64 = core::f64::consts::LN_2;
const LOG10_2: f64 = core::f64::consts::LOG10_2;

/// Extended-range real number `m * 2^e`.
#[derive(Clone, Copy, Debug)]
pub struct Xf {
    m: f64,
    e: i64,
}

impl Xf {
    pub const ZERO: Xf = Xf { m: 0.0, e: 0 };
    pub const ONE: Xf = Xf { m: 0.5, e: 1 };

    fn norm(m: f64, e: i64) -> Xf {
        if m == 0.0 || !m.is_finite() {
            return Xf { m, e: 0 };
        }
        let (fm, fe) = libm::frexp(m);
        Xf {
            m: fm,
            e: e.saturating_add(fe as i64),
        }
    }

    /// Exact conversion from `f64`. Non-finite inputs are carried through
    /// unchanged and poison later arithmetic.
    pub fn new(x: f64) -> Xf {
        Xf::norm(x, 0)
    }

    /// `m * 2^e` for arbitrary finite `m`.
    pub fn from_parts(m: f64, e: i64) -> Xf {
        Xf::norm(m, e)
    }

    /// `2^k`.
    pub fn pow2(k: i64) -> Xf {
        Xf {
            m: 0.5,
            e: k.saturating_add(1),
        }
    }

    pub fn mantissa(self) -> f64 {
        self.m
    }

    pub fn exponent(self) -> i64 {
        self.e
    }

    pub fn is_zero(self) -> bool {
        self.m == 0.0
    }

    pub fn is_finite(self) -> bool {
        self.m.is_finite()
    }

    pub fn is_sign_negative(self) -> bool {
        self.m < 0.0
    }

    pub fn abs(self) -> Xf {
        Xf {
            m: libm::fabs(self.m),
            e: self.e,
        }
    }

    /// Nearest `f64`; overflows to infinity and underflows to zero.
    pub fn to_f64(self) -> f64 {
        if self.m == 0.0 || !self.m.is_finite() {
            return self.m;
        }
        let e = self.e.clamp(-2200, 2200) as i32;
        libm::ldexp(self.m, e)
    }

    /// Base-2 logarithm of the magnitude.
    pub fn log2(self) -> f64 {
        if self.m == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.e as f64 + libm::log2(libm::fabs(self.m))
    }

    /// Natural logarithm of the magnitude.
    pub fn ln(self) -> f64 {
        if self.m == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.e as f64 * LN_2 + libm::log(libm::fabs(self.m))
    }

    /// Base-10 logarithm of the magnitude.
    pub fn log10(self) -> f64 {
        self.log2() * LOG10_2
    }

    /// `e^x` for an `f64` exponent that may exceed the `f64` range of `e^x`.
    pub fn exp(x: f64) -> Xf {
        if x.is_nan() {
            return Xf::new(f64::NAN);
        }
        if x == f64::NEG_INFINITY {
            return Xf::ZERO;
        }
        let n = libm::floor(x / LN_2);
        let r = x - n * LN_2;
        Xf::norm(libm::exp(r), n as i64)
    }

    /// `e^x` for an extended exponent; saturates when `|x|` exceeds `i64`
    /// exponent range.
    pub fn exp_xf(x: Xf) -> Xf {
        let v = x.to_f64();
        if v.is_infinite() {
            return if v > 0.0 {
                Xf::pow2(i64::MAX / 2)
            } else {
                Xf::ZERO
            };
        }
        Xf::exp(v)
    }

    /// `self^p` for `self >= 0`. Exact in the exponent when `p` times the
    /// binary exponent is representable (e.g. dyadic `p`).
    pub fn powf(self, p: f64) -> Xf {
        if self.m < 0.0 {
            return Xf::new(f64::NAN);
        }
        if self.m == 0.0 {
            return if p > 0.0 {
                Xf::ZERO
            } else if p == 0.0 {
                Xf::ONE
            } else {
                Xf::new(f64::INFINITY)
            };
        }
        let pe = p * self.e as f64;
        let ip = libm::floor(pe);
        let frac = pe - ip;
        let tail = libm::exp2(frac + p * libm::log2(self.m));
        Xf::norm(tail, ip as i64)
    }

    pub fn sqrt(self) -> Xf {
        if self.m <= 0.0 {
            return if self.m == 0.0 {
                Xf::ZERO
            } else {
                Xf::new(f64::NAN)
            };
        }
        let (m, e) = if self.e % 2 != 0 {
            (self.m * 2.0, self.e - 1)
        } else {
            (self.m, self.e)
        };
        Xf::norm(libm::sqrt(m), e / 2)
    }

    /// Largest integer not above `self`.
    pub fn floor(self) -> Xf {
        if self.m == 0.0 || self.e >= 53 {
            return self;
        }
        if self.e <= 0 {
            return if self.m < 0.0 { Xf::new(-1.0) } else { Xf::ZERO };
        }
        Xf::new(libm::floor(libm::ldexp(self.m, self.e as i32)))
    }

    pub fn max(self, other: Xf) -> Xf {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Xf) -> Xf {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `ln(self / other)` for positive operands, accurate even when both are
    /// astronomically large.
    pub fn ln_ratio(self, other: Xf) -> f64 {
        (self / other).ln()
    }

    /// Compact exact text form `mantissa p exponent`, e.g. `0.75p1016`.
    pub fn to_exact_string(self) -> String {
        format!("{}p{}", self.m, self.e)
    }

    pub fn parse_exact(s: &str) -> Option<Xf> {
        let s = s.trim();
        match s.split_once('p') {
            Some((m, e)) => {
                let m: f64 = m.parse().ok()?;
                let e: i64 = e.parse().ok()?;
                Some(Xf::from_parts(m, e))
            }
            None => s.parse::<f64>().ok().map(Xf::new),
        }
    }
}

impl From<f64> for Xf {
    fn from(x: f64) -> Xf {
        Xf::new(x)
    }
}

impl Mul for Xf {
    type Output = Xf;
    fn mul(self, o: Xf) -> Xf {
        Xf::norm(self.m * o.m, self.e.saturating_add(o.e))
    }
}

impl Mul<f64> for Xf {
    type Output = Xf;
    fn mul(self, o: f64) -> Xf {
        self * Xf::new(o)
    }
}

impl Div for Xf {
    type Output = Xf;
    fn div(self, o: Xf) -> Xf {
        Xf::norm(self.m / o.m, self.e.saturating_sub(o.e))
    }
}

impl Div<f64> for Xf {
    type Output = Xf;
    fn div(self, o: f64) -> Xf {
        self / Xf::new(o)
    }
}

impl Add for Xf {
    type Output = Xf;
    fn add(self, o: Xf) -> Xf {
        if self.m == 0.0 {
            return o;
        }
        if o.m == 0.0 {
            return self;
        }
        let (big, small) = if self.e >= o.e { (self, o) } else { (o, self) };
        let shift = big.e - small.e;
        if shift > 64 {
            return big;
        }
        Xf::norm(big.m + libm::ldexp(small.m, -(shift as i32)), big.e)
    }
}

impl Add<f64> for Xf {
    type Output = Xf;
    fn add(self, o: f64) -> Xf {
        self + Xf::new(o)
    }
}

impl Sub for Xf {
    type Output = Xf;
    fn sub(self, o: Xf) -> Xf {
        self + (-o)
    }
}

impl Sub<f64> for Xf {
    type Output = Xf;
    fn sub(self, o: f64) -> Xf {
        self - Xf::new(o)
    }
}

impl Neg for Xf {
    type Output = Xf;
    fn neg(self) -> Xf {
        Xf {
            m: -self.m,
            e: self.e,
        }
    }
}

impl PartialEq for Xf {
    fn eq(&self, o: &Xf) -> bool {
        self.partial_cmp(o) == Some(Ordering::Equal)
    }
}

impl PartialOrd for Xf {
    fn partial_cmp(&self, o: &Xf) -> Option<Ordering> {
        if self.m.is_nan() || o.m.is_nan() {
            return None;
        }
        let sa = sign(self.m);
        let sb = sign(o.m);
        if sa != sb {
            return sa.partial_cmp(&sb);
        }
        if sa == 0 {
            return Some(Ordering::Equal);
        }
        let mag = match self.e.cmp(&o.e) {
            Ordering::Equal => libm::fabs(self.m).partial_cmp(&libm::fabs(o.m))?,
            ord => ord,
        };
        Some(if sa > 0 { mag } else { mag.reverse() })
    }
}

fn sign(m: f64) -> i8 {
    if m > 0.0 {
        1
    } else if m < 0.0 {
        -1
    } else {
        0
    }
}

impl fmt::Display for Xf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m == 0.0 || !self.m.is_finite() || self.e.abs() < 1000 {
            return write!(f, "{:e}", self.to_f64());
        }
        let l = self.log10();
        let d = libm::floor(l);
        let mant = libm::pow(10.0, l - d);
        let s = if self.m < 0.0 { "-" } else { "" };
        write!(f, "{s}{mant:.6}e{d}")
    }
}

impl Serialize for Xf {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_exact_string())
    }
}

impl<'de> Deserialize<'de> for Xf {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Xf, D::Error> {
        let s = String::deserialize(d)?;
        Xf::parse_exact(&s).ok_or_else(|| serde::de::Error::custom("invalid extended float"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_arithmetic() {
        let a = Xf::new(3.5);
        let b = Xf::new(-1.25);
        assert_eq!((a * b).to_f64(), -4.375);
        assert_eq!((a + b).to_f64(), 2.25);
        assert_eq!((a - b).to_f64(), 4.75);
        assert_eq!((a / b).to_f64(), -2.8);
        assert!(b < a && -a < b);
    }

    #[test]
    fn huge_powers_keep_exponent_exact() {
        let lam = Xf::pow2(1_000_000_000_000_000);
        let p = lam.powf(0.625);
        assert_eq!(p.log2(), 625_000_000_000_000.0);
        let q = lam.powf(-0.25);
        assert_eq!(q.log2(), -250_000_000_000_000.0);
        assert!((lam.sqrt().log2() - 5e14).abs() < 1e-3);
    }

    #[test]
    fn floor_of_large_value_is_identity() {
        let x = Xf::pow2(200) * 1.5;
        assert_eq!(x.floor(), x);
        assert_eq!(Xf::new(7.9).floor().to_f64(), 7.0);
        assert_eq!(Xf::new(-0.3).floor().to_f64(), -1.0);
    }

    #[test]
    fn exact_text_round_trip() {
        let x = Xf::pow2(123_456_789) * 0.8125;
        let y = Xf::parse_exact(&x.to_exact_string()).unwrap();
        assert_eq!(x.mantissa(), y.mantissa());
        assert_eq!(x.exponent(), y.exponent());
    }

    #[test]
    fn exp_and_ln_agree() {
        let x = Xf::exp(12345.678);
        assert!((x.ln() - 12345.678).abs() < 1e-9);
        assert!((Xf::exp(0.5).to_f64() - libm::exp(0.5)).abs() < 1e-15);
    }

    #[test]
    fn addition_drops_negligible_term() {
        let big = Xf::pow2(100);
        assert_eq!(big + Xf::ONE, big);
        assert!(Xf::ONE + Xf::pow2(-40) > Xf::ONE);
    }
}
