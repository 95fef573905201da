//! Small numerical kernels shared by the modules: log-domain sums,
//! adaptive Simpson quadrature, scalar bisection.

use alloc::vec::Vec;

/// `ln(sum(exp(x_i)))`; the empty sum gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let xs: Vec<f64> = terms.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| libm::exp(x - m)).sum();
    m + libm::log(s)
}

/// `ln(e^a + e^b)`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

/// `ln(x^2 + y^2)` without overflow or underflow of the squares.
pub fn log_hypot2(x: f64, y: f64) -> f64 {
    let ax = libm::fabs(x);
    let ay = libm::fabs(y);
    let m = ax.max(ay);
    if m == 0.0 {
        return f64::NEG_INFINITY;
    }
    let r = ax.min(ay) / m;
    2.0 * libm::log(m) + libm::log1p(r * r)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`, with recursion depth capped at `max_depth`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || libm::fabs(delta) <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred` holds on
/// an initial segment. Requires `pred(lo)`. Returns the lower bracket end,
/// so the answer always satisfies `pred`.
pub fn bisect_last_true<P: Fn(f64) -> bool>(pred: P, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    if pred(hi) {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..400 {
        if b - a <= rel_tol * libm::fabs(b).max(f64::MIN_POSITIVE) {
            break;
        }
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// `n` points log-spaced from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    let la = libm::log(a);
    let lb = libm::log(b);
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else if i == 0 {
                a
            } else {
                libm::exp(la + (lb - la) * i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// `n` points linearly spaced from `a` to `b` inclusive.
pub fn lin_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1).max(1) as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive() {
        let xs = [0.1, -3.0, 2.5];
        let naive = libm::log(xs.iter().map(|&x| libm::exp(x)).sum::<f64>());
        assert!((log_sum_exp(xs) - naive).abs() < 1e-14);
        assert_eq!(log_sum_exp(core::iter::empty()), f64::NEG_INFINITY);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn simpson_on_polynomial_and_trig() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12, 40);
        assert!((v - 4.0).abs() < 1e-12);
        let w = adaptive_simpson(&libm::sin, 0.0, core::f64::consts::PI, 1e-12, 40);
        assert!((w - 2.0).abs() < 1e-11);
    }

    #[test]
    fn bisection_stays_feasible() {
        let r = bisect_last_true(|x| x * x <= 2.0, 0.0, 4.0, 1e-12);
        assert!(r * r <= 2.0);
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn hypot_survives_extremes() {
        assert!((log_hypot2(1e300, 1e300) - (600.0 * core::f64::consts::LN_10 + core::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(log_hypot2(0.0, 0.0), f64::NEG_INFINITY);
    }
}
