//! Machine-readable list of the scale inequalities the construction relies
//! on, each evaluated in extended precision with a log margin.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DgcsInputs, Scale};
use crate::math::log_space;
use crate::Xf;

/// `lhs <= rhs` (or `lhs < rhs` when `strict`) at mode index `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub k: usize,
    pub lhs: Xf,
    pub rhs: Xf,
    /// `ln(rhs / lhs)`; `+inf` when `lhs <= 0`.
    pub margin: f64,
    pub strict: bool,
}

impl Inequality {
    pub fn new(name: &str, k: usize, lhs: Xf, rhs: Xf, strict: bool) -> Inequality {
        let margin = if lhs <= Xf::ZERO {
            f64::INFINITY
        } else {
            rhs.ln_ratio(lhs)
        };
        Inequality {
            name: name.to_string(),
            k,
            lhs,
            rhs,
            margin,
            strict,
        }
    }

    pub fn holds(&self) -> bool {
        if self.strict {
            self.lhs < self.rhs
        } else {
            self.lhs <= self.rhs
        }
    }
}

fn x(v: f64) -> Xf {
    Xf::new(v)
}

/// Conditions tying pick `k` to pick `k - 1`; the greedy selection takes the
/// least candidate for which all of them hold.
pub fn pair_conditions(inp: &DgcsInputs, k: usize, prev: &Scale, cur: &Scale) -> Vec<Inequality> {
    let s = inp.sigma;
    let d = x(inp.delta);
    let kk = x(k as f64);
    let pi2 = x(PI * PI);
    let lp = prev.lambda;
    let growth = cur.lambda.powf(1.0 + 2.0 * s) * cur.omega;
    let prev_weighted = lp * prev.weights * prev.omega;
    let quad = d * d * d * d / (pi2 * 1024.0) / lp.powf(2.0 - 8.0 * s) + kk * kk * 4.0 / pi2 * lp * lp;
    let small = smallness(inp, cur);
    alloc::vec![
        Inequality::new("lambda_ratio", k, lp * 4.0, cur.lambda, true),
        Inequality::new("separation_quadratic", k, quad, growth, false),
        Inequality::new("separation_growth", k, kk * kk * 4.0 / pi2 * lp * lp * prev_weighted, growth, false),
        Inequality::new("separation_monotone", k, prev_weighted, growth, false),
        Inequality::new("weights_below_spacing", k, small, pi2 / (kk * kk * 4.0) / (lp * lp), false),
    ]
}

/// `1 / (lambda^(1-2s) w) + phi / (lambda w) + psi / (lambda w)`.
fn smallness(inp: &DgcsInputs, sc: &Scale) -> Xf {
    let lw = sc.lambda * sc.omega;
    Xf::ONE / (sc.lambda.powf(1.0 - 2.0 * inp.sigma) * sc.omega) + (sc.phi + sc.psi) / lw
}

/// `sup { y^(1-2s) / omega(y) : 0 < y < t }` on `points` log-spaced values
/// in `[t 10^-12, t)`, times a safety factor 2.
pub fn knot_sup(inp: &DgcsInputs, t: Xf, points: usize) -> Xf {
    let mut best = Xf::ZERO;
    for f in log_space(1e-12, 1.0 - 1e-12, points) {
        let y = t * f;
        let w = inp.omega.eval_xf(y);
        if w > Xf::ZERO {
            best = best.max(y.powf(1.0 - 2.0 * inp.sigma) / w);
        }
    }
    best * 2.0
}

/// Conditions required for every certified index `k >= k0`; `prev` is pick
/// `k - 1`.
pub fn mode_conditions(inp: &DgcsInputs, k: usize, prev: &Scale, cur: &Scale, t_k: Xf) -> Vec<Inequality> {
    let s = inp.sigma;
    let d = x(inp.delta);
    let e = cur.eps;
    let l = cur.lambda;
    let base = d * d / l.powf(2.0 - 4.0 * s);
    let knot = d * d / x(4.0 * PI).powf(2.0 - 4.0 * s) * (t_k * 2.0).powf(1.0 - 2.0 * s) * knot_sup(inp, t_k, 1000);
    alloc::vec![
        Inequality::new("excursion_below_half", k, base + e * e * 16.0 + e * 8.0, x(0.5), false),
        Inequality::new("eps_below_quarter", k, e, x(0.25), false),
        Inequality::new(
            "backward_budget",
            k,
            e * (16.0 * PI) + d * (16.0 * PI) / l.powf(1.0 - 2.0 * s),
            x(2.0 * PI),
            false
        ),
        Inequality::new("weights_small", k, smallness(inp, cur), x(1.0 / (25.0 * 1024.0 * PI * PI)), false),
        Inequality::new("knot_modulus", k, knot, x(0.2), false),
        Inequality::new("resonance_vs_damping_sq", k, d * d, l.powf(1.0 - 2.0 * s) * cur.omega, false),
        Inequality::new(
            "affine_modulus",
            k,
            d * d * 2.0 / (prev.lambda.powf(2.0 - 4.0 * s) * prev.omega),
            x(0.2),
            false
        ),
    ]
}

/// Consequences of the pair and mode conditions, checked independently.
pub fn derived_conditions(inp: &DgcsInputs, k: usize, prev: &Scale, cur: &Scale, s_k: Xf) -> Vec<Inequality> {
    let s = inp.sigma;
    let d = x(inp.delta);
    let kk = x(k as f64);
    let el = cur.eps * cur.lambda;
    let pel = prev.eps * prev.lambda;
    let growth = el * s_k;
    alloc::vec![
        Inequality::new("resonance_vs_damping", k, d * cur.lambda.powf(2.0 * s), el, false),
        Inequality::new("window_modulus", k, cur.eps * (32.0 * PI) / cur.omega, x(0.2), false),
        Inequality::new("affine_slope", k, d * d / 32.0 / prev.lambda.powf(2.0 - 4.0 * s), growth, false),
        Inequality::new("growth_vs_index", k, kk * 2.0, growth, false),
        Inequality::new("growth_vs_previous", k, kk * 2.0 * pel, growth, false),
        Inequality::new("growth_vs_weights", k, kk * 2.0 * cur.weights, growth, false),
        Inequality::new("divergence_budget", k, kk * pel + kk * 2.0 * cur.weights + kk, growth * 2.0, false),
        Inequality::new("eps_lambda_monotone", k, pel, el, false),
    ]
}

/// `t_{k-1} / 4 <= s_k <= t_{k-1} / 2`.
pub fn window_conditions(k: usize, t_prev: Xf, s_k: Xf) -> Vec<Inequality> {
    alloc::vec![
        Inequality::new("window_start", k, t_prev / 4.0, s_k, false),
        Inequality::new("window_end", k, s_k, t_prev / 2.0, false),
    ]
}
