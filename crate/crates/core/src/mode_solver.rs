//! Integration of one mode `u'' + 2 delta lambda^(2 sigma) u' + lambda^2 c(t) u = 0`.
//!
//! The state is kept as a direction `(u_dir, v_dir)` times `exp(log_scale)`,
//! renormalized by exact powers of two after every step, so solutions that
//! grow or decay by thousands of orders of magnitude stay representable.
//!
//! Non-stiff spans use the Dormand-Prince 5(4) pair. When damping dominates
//! the oscillation (`delta lambda^(2 sigma) > 4 (lambda sqrt(c) + 1)`) the
//! explicit pair would need steps of order `1/delta lambda^(2 sigma)`, so
//! those spans are integrated with a fourth-order Magnus exponential
//! integrator instead.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{Coefficient, RegularizedCoefficient};
use crate::math::log_hypot2;

const LN_2: f64 = core::f64::consts::LN_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("mode frequency must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("time span must be finite")]
    BadSpan,
    #[error("step size underflow at t = {}", .last.t)]
    StepUnderflow { last: ModeState },
    #[error("non-finite state after t = {}", .last.t)]
    NonFinite { last: ModeState },
    #[error("step budget exhausted at t = {}", .last.t)]
    MaxSteps { last: ModeState },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub lambda: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl ModeParams {
    pub fn new(lambda: f64, sigma: f64, delta: f64) -> Result<ModeParams, SolverError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(SolverError::BadLambda(lambda));
        }
        Ok(ModeParams { lambda, sigma, delta })
    }

    /// `a = delta * lambda^(2 sigma)`, half the damping coefficient.
    pub fn damping(&self) -> f64 {
        self.delta * libm::pow(self.lambda, 2.0 * self.sigma)
    }
}

/// `(u, u') = exp(log_scale) * (u_dir, v_dir)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub t: f64,
    pub u_dir: f64,
    pub v_dir: f64,
    pub log_scale: f64,
}

impl ModeState {
    pub fn new(t: f64, u: f64, v: f64) -> ModeState {
        let mut s = ModeState {
            t,
            u_dir: u,
            v_dir: v,
            log_scale: 0.0,
        };
        s.renormalize();
        s
    }

    pub fn from_log(t: f64, log_scale: f64, u_dir: f64, v_dir: f64) -> ModeState {
        let mut s = ModeState {
            t,
            u_dir,
            v_dir,
            log_scale,
        };
        s.renormalize();
        s
    }

    pub fn is_zero(&self) -> bool {
        self.u_dir == 0.0 && self.v_dir == 0.0
    }

    /// Rescales by a power of two so that `max(|u_dir|, |v_dir|)` lies in
    /// `[1, 2)`. Exact: only the exponent changes.
    pub fn renormalize(&mut self) {
        let m = libm::fabs(self.u_dir).max(libm::fabs(self.v_dir));
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let (_, e) = libm::frexp(m);
        let k = e - 1;
        if k != 0 {
            self.u_dir = libm::ldexp(self.u_dir, -k);
            self.v_dir = libm::ldexp(self.v_dir, -k);
            self.log_scale += k as f64 * LN_2;
        }
    }

    /// Physical `u`; may overflow to infinity.
    pub fn u(&self) -> f64 {
        self.u_dir * libm::exp(self.log_scale)
    }

    /// Physical `u'`; may overflow to infinity.
    pub fn v(&self) -> f64 {
        self.v_dir * libm::exp(self.log_scale)
    }

    /// `ln |u|`.
    pub fn log_abs_u(&self) -> f64 {
        self.log_scale + libm::log(libm::fabs(self.u_dir))
    }

    /// `ln |u'|`.
    pub fn log_abs_v(&self) -> f64 {
        self.log_scale + libm::log(libm::fabs(self.v_dir))
    }

    /// `ln(u'^2 + lambda^2 u^2)`.
    pub fn log_energy(&self, lambda: f64) -> f64 {
        2.0 * self.log_scale + log_hypot2(self.v_dir, lambda * self.u_dir)
    }

    /// `ln(u'^2 + lambda^2 c u^2)`; `-inf` if the form is not positive.
    pub fn log_weighted_energy(&self, lambda: f64, c: f64) -> f64 {
        if c >= 0.0 {
            2.0 * self.log_scale + log_hypot2(self.v_dir, lambda * libm::sqrt(c) * self.u_dir)
        } else {
            let q = self.v_dir * self.v_dir + lambda * lambda * c * self.u_dir * self.u_dir;
            2.0 * self.log_scale + if q > 0.0 { libm::log(q) } else { f64::NEG_INFINITY }
        }
    }

    /// `ln((u' + a u)^2 + a^2 u^2)`.
    pub fn log_kova_energy(&self, a: f64) -> f64 {
        2.0 * self.log_scale + log_hypot2(self.v_dir + a * self.u_dir, a * self.u_dir)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `ln(u'^2 + lambda^2 u^2)`
    pub log_e_classic: f64,
    /// `ln(u'^2 + lambda^2 c(t) u^2)`
    pub log_f_weighted: f64,
    /// `ln((u' + a u)^2 + a^2 u^2)`
    pub log_e_kova: f64,
    /// The previous plus `lambda^2 c_eps(t) u^2`, when a regularization is set.
    pub log_e_approx: Option<f64>,
}

impl EnergyRecord {
    pub fn of(p: &ModeParams, c: &Coefficient, reg: Option<&RegularizedCoefficient>, s: &ModeState) -> EnergyRecord {
        let a = p.damping();
        let ct = c.eval(s.t);
        let log_e_approx = reg.map(|r| {
            let ce = r.eval(s.t);
            let w = s.v_dir + a * s.u_dir;
            let q = w * w + (a * a + p.lambda * p.lambda * ce) * s.u_dir * s.u_dir;
            2.0 * s.log_scale + libm::log(q)
        });
        EnergyRecord {
            t: s.t,
            log_e_classic: s.log_energy(p.lambda),
            log_f_weighted: s.log_weighted_energy(p.lambda, ct),
            log_e_kova: s.log_kova_energy(a),
            log_e_approx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Exponential stepping on stiff spans, Dormand-Prince elsewhere.
    Auto,
    Explicit,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative local error per step.
    pub tol: f64,
    pub stepper: Stepper,
    /// Jump across constant spans with [`closed_form_constant`].
    pub closed_form_segments: bool,
    pub max_steps: usize,
    /// Extra output times (hard stops, like segment boundaries).
    pub sample_times: Vec<f64>,
    /// Width of the moving average used for `log_e_approx`.
    pub regularization: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-11,
            stepper: Stepper::Auto,
            closed_form_segments: true,
            max_steps: 50_000_000,
            sample_times: Vec::new(),
            regularization: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<ModeState>,
    pub records: Vec<EnergyRecord>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &ModeState {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Integrates from physical data `init = (u, u')` at `span.0` to `span.1`.
/// Backward spans (`span.1 < span.0`) are allowed.
pub fn integrate(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    span: (f64, f64),
    opts: &SolverOptions,
) -> Result<Trajectory, SolverError> {
    integrate_state(p, c, ModeState::new(span.0, init.0, init.1), span.1, opts)
}

/// Like [`integrate`] but starting from a log-renormalized state.
pub fn integrate_state(
    p: &ModeParams,
    c: &Coefficient,
    start: ModeState,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory, SolverError> {
    ModeParams::new(p.lambda, p.sigma, p.delta)?;
    if !(opts.tol > 0.0) {
        return Err(SolverError::BadTolerance(opts.tol));
    }
    if !start.t.is_finite() || !t_end.is_finite() {
        return Err(SolverError::BadSpan);
    }
    let reg = match opts.regularization {
        Some(eps) => crate::coefficients::regularize(c, eps).ok(),
        None => None,
    };
    let t0 = start.t;
    let (lo, hi) = if t0 <= t_end { (t0, t_end) } else { (t_end, t0) };
    let mut stops: Vec<f64> = c
        .breakpoints()
        .into_iter()
        .chain(opts.sample_times.iter().copied())
        .filter(|&t| t > lo && t < hi)
        .collect();
    stops.push(t_end);
    if t_end >= t0 {
        stops.sort_by(f64::total_cmp);
    } else {
        stops.sort_by(|a, b| b.total_cmp(a));
    }
    stops.dedup();

    let mut traj = Trajectory {
        states: alloc::vec![start],
        records: alloc::vec![EnergyRecord::of(p, c, reg.as_ref(), &start)],
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut engine = Engine {
        p,
        c,
        opts,
        lam: p.lambda.max(1.0),
        a: p.damping(),
        k: p.lambda * p.lambda,
        h: 0.0,
    };
    let mut state = start;
    let mut ta = t0;
    for &tb in &stops {
        if tb == ta {
            continue;
        }
        let (sl, sh) = if ta < tb { (ta, tb) } else { (tb, ta) };
        state = match (opts.closed_form_segments, c.constant_on(sl, sh)) {
            (true, Some(c0)) if c0 > 0.0 => closed_form_constant(p, c0, &state, tb),
            _ => engine.segment(state, tb, &mut traj)?,
        };
        state.t = tb;
        traj.states.push(state);
        traj.records.push(EnergyRecord::of(p, c, reg.as_ref(), &state));
        ta = tb;
    }
    Ok(traj)
}

struct Engine<'a> {
    p: &'a ModeParams,
    c: &'a Coefficient,
    opts: &'a SolverOptions,
    lam: f64,
    a: f64,
    k: f64,
    /// Step size carried across segments (signed).
    h: f64,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct StepResult {
    u: f64,
    v: f64,
    /// Log factor multiplying `(u, v)`.
    log_gain: f64,
    err: f64,
}

impl Engine<'_> {
    fn coef(&self, t: f64, mid: f64) -> f64 {
        self.c.eval_in(t, mid)
    }

    fn segment(&mut self, mut s: ModeState, tb: f64, traj: &mut Trajectory) -> Result<ModeState, SolverError> {
        let ta = s.t;
        let span = tb - ta;
        let dir = if span > 0.0 { 1.0 } else { -1.0 };
        let mid = 0.5 * (ta + tb);
        let (_, cmax) = self.c.range_on(ta.min(tb), ta.max(tb));
        let osc = self.p.lambda * libm::sqrt(cmax.max(0.0));
        let stiff = self.a.abs() > 4.0 * (osc + 1.0);
        let exponential = match self.opts.stepper {
            Stepper::Auto => stiff,
            Stepper::Explicit => false,
            Stepper::Exponential => true,
        };
        let mut h = if self.h != 0.0 && self.h.signum() == dir {
            self.h.abs()
        } else {
            let rate = osc + 2.0 * self.a.abs() + 1.0;
            if exponential {
                (0.1 * libm::fabs(span)).min(1.0 / (osc + 1.0))
            } else {
                0.05 / rate
            }
        };
        let mut err_prev: f64 = 1e-4;
        if s.is_zero() {
            s.t = tb;
            return Ok(s);
        }
        loop {
            let remaining = tb - s.t;
            if remaining * dir <= 0.0 {
                break;
            }
            if let Some(cap) = self.c.max_step(mid) {
                h = h.min(cap);
            }
            let last = h >= libm::fabs(remaining) * (1.0 - 1e-12);
            let hs = if last { remaining } else { dir * h };
            if libm::fabs(hs) < 1e-15 * libm::fabs(s.t).max(1.0) && !last {
                return Err(SolverError::StepUnderflow { last: s });
            }
            if traj.accepted_steps + traj.rejected_steps >= self.opts.max_steps {
                return Err(SolverError::MaxSteps { last: s });
            }
            let r = if exponential {
                self.magnus_step(&s, hs, mid)
            } else {
                self.dp_step(&s, hs, mid)
            };
            if !(r.err.is_finite() && r.u.is_finite() && r.v.is_finite() && r.log_gain.is_finite()) {
                traj.rejected_steps += 1;
                h = 0.2 * libm::fabs(hs);
                if h < 1e-15 * libm::fabs(s.t).max(1.0) {
                    return Err(SolverError::NonFinite { last: s });
                }
                continue;
            }
            let order = if exponential { 3.0 } else { 5.0 };
            if r.err <= 1.0 {
                traj.accepted_steps += 1;
                s.u_dir = r.u;
                s.v_dir = r.v;
                s.log_scale += r.log_gain;
                s.t = if last { tb } else { s.t + hs };
                s.renormalize();
                let fac = if r.err == 0.0 {
                    5.0
                } else {
                    let (alpha, beta) = if exponential { (0.7 / order, 0.0) } else { (0.17, 0.04) };
                    (0.9 * libm::pow(r.err, -alpha) * libm::pow(err_prev, beta)).clamp(0.2, 5.0)
                };
                err_prev = r.err.max(1e-4);
                let hn = libm::fabs(hs) * fac;
                if !last || hn < h {
                    h = hn;
                }
                if s.is_zero() {
                    s.t = tb;
                    break;
                }
            } else {
                traj.rejected_steps += 1;
                h = libm::fabs(hs) * (0.9 * libm::pow(r.err, -1.0 / order)).clamp(0.2, 1.0);
            }
        }
        self.h = dir * h;
        Ok(s)
    }

    fn rhs(&self, t: f64, mid: f64, u: f64, v: f64) -> (f64, f64) {
        (v, -2.0 * self.a * v - self.k * self.coef(t, mid) * u)
    }

    fn dp_step(&self, s: &ModeState, h: f64, mid: f64) -> StepResult {
        let (t, u, v) = (s.t, s.u_dir, s.v_dir);
        let k1 = self.rhs(t, mid, u, v);
        let k2 = self.rhs(t + C2 * h, mid, u + h * A21 * k1.0, v + h * A21 * k1.1);
        let k3 = self.rhs(
            t + C3 * h,
            mid,
            u + h * (A31 * k1.0 + A32 * k2.0),
            v + h * (A31 * k1.1 + A32 * k2.1),
        );
        let k4 = self.rhs(
            t + C4 * h,
            mid,
            u + h * (A41 * k1.0 + A42 * k2.0 + A43 * k3.0),
            v + h * (A41 * k1.1 + A42 * k2.1 + A43 * k3.1),
        );
        let k5 = self.rhs(
            t + C5 * h,
            mid,
            u + h * (A51 * k1.0 + A52 * k2.0 + A53 * k3.0 + A54 * k4.0),
            v + h * (A51 * k1.1 + A52 * k2.1 + A53 * k3.1 + A54 * k4.1),
        );
        let k6 = self.rhs(
            t + h,
            mid,
            u + h * (A61 * k1.0 + A62 * k2.0 + A63 * k3.0 + A64 * k4.0 + A65 * k5.0),
            v + h * (A61 * k1.1 + A62 * k2.1 + A63 * k3.1 + A64 * k4.1 + A65 * k5.1),
        );
        let un = u + h * (B1 * k1.0 + B3 * k3.0 + B4 * k4.0 + B5 * k5.0 + B6 * k6.0);
        let vn = v + h * (B1 * k1.1 + B3 * k3.1 + B4 * k4.1 + B5 * k5.1 + B6 * k6.1);
        let k7 = self.rhs(t + h, mid, un, vn);
        let eu = h * (E1 * k1.0 + E3 * k3.0 + E4 * k4.0 + E5 * k5.0 + E6 * k6.0 + E7 * k7.0);
        let ev = h * (E1 * k1.1 + E3 * k3.1 + E4 * k4.1 + E5 * k5.1 + E6 * k6.1 + E7 * k7.1);
        let lam = self.lam;
        let scale = (lam * libm::fabs(u))
            .max(libm::fabs(v))
            .max(lam * libm::fabs(un))
            .max(libm::fabs(vn));
        let err = (lam * libm::fabs(eu)).max(libm::fabs(ev)) / (self.opts.tol * scale);
        StepResult {
            u: un,
            v: vn,
            log_gain: 0.0,
            err,
        }
    }

    fn generator(&self, t: f64, mid: f64) -> [f64; 4] {
        [0.0, 1.0, -self.k * self.coef(t, mid), -2.0 * self.a]
    }

    fn magnus_step(&self, s: &ModeState, h: f64, mid: f64) -> StepResult {
        const G: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
        let a1 = self.generator(s.t + (0.5 - G) * h, mid);
        let a2 = self.generator(s.t + (0.5 + G) * h, mid);
        let am = self.generator(s.t + 0.5 * h, mid);
        // Omega4 = h/2 (A1 + A2) + sqrt(3)/12 h^2 [A2, A1]
        let comm = commutator(&a2, &a1);
        let w = 2.0 * G * 0.5 * h * h; // sqrt(3)/12 h^2
        let mut o4 = [0.0; 4];
        let mut o2 = [0.0; 4];
        for i in 0..4 {
            o4[i] = 0.5 * h * (a1[i] + a2[i]) + w * comm[i];
            o2[i] = h * am[i];
        }
        let (g4, m4) = expm2(&o4);
        let (g2, m2) = expm2(&o2);
        let (u, v) = (s.u_dir, s.v_dir);
        let u4 = m4[0] * u + m4[1] * v;
        let v4 = m4[2] * u + m4[3] * v;
        let r = libm::exp(g2 - g4);
        let u2 = r * (m2[0] * u + m2[1] * v);
        let v2 = r * (m2[2] * u + m2[3] * v);
        let lam = self.lam;
        let scale = (lam * libm::fabs(u4)).max(libm::fabs(v4));
        let err = (lam * libm::fabs(u4 - u2)).max(libm::fabs(v4 - v2)) / (self.opts.tol * scale);
        StepResult {
            u: u4,
            v: v4,
            log_gain: g4,
            err,
        }
    }
}

fn commutator(x: &[f64; 4], y: &[f64; 4]) -> [f64; 4] {
    let xy = mul2(x, y);
    let yx = mul2(y, x);
    [xy[0] - yx[0], xy[1] - yx[1], xy[2] - yx[2], xy[3] - yx[3]]
}

fn mul2(x: &[f64; 4], y: &[f64; 4]) -> [f64; 4] {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

/// `exp(M) = exp(g) * N` for a real 2x2 matrix `M` (row-major), with the
/// dominant exponential growth factored into `g`.
pub fn expm2(m: &[f64; 4]) -> (f64, [f64; 4]) {
    let half_tr = 0.5 * (m[0] + m[3]);
    let n = [m[0] - half_tr, m[1], m[2], m[3] - half_tr];
    // N^2 = q2 I
    let q2 = n[0] * n[0] + n[1] * n[2];
    if q2 > 0.0 {
        let q = libm::sqrt(q2);
        // exp(N) = e^q [ (1 + e^-2q)/2 I + (1 - e^-2q)/(2q) N ]
        let em = libm::exp(-2.0 * q);
        if q < 0.5 {
            let ch = 0.5 * (1.0 + em);
            let sh = 0.5 * (-libm::expm1(-2.0 * q)) / q;
            return (half_tr + q, [ch + sh * n[0], sh * n[1], sh * n[2], ch + sh * n[3]]);
        }
        // Diagonal entries are ((q +- n0) + em (q -+ n0)) / 2q; the smaller of
        // q +- n0 comes from (q + n0)(q - n0) = n1 n2 without cancellation.
        let (qp, qm) = if n[0] >= 0.0 {
            let qp = q + n[0];
            (qp, n[1] * n[2] / qp)
        } else {
            let qm = q - n[0];
            (n[1] * n[2] / qm, qm)
        };
        let sh = 0.5 * (1.0 - em) / q;
        let d0 = 0.5 * (qp + em * qm) / q;
        let d1 = 0.5 * (qm + em * qp) / q;
        // half_tr + q = -det(M) / (q - half_tr) when half_tr < 0.
        let gain = if half_tr < 0.0 {
            let det = m[0] * m[3] - m[1] * m[2];
            -det / (q - half_tr)
        } else {
            half_tr + q
        };
        (gain, [d0, sh * n[1], sh * n[2], d1])
    } else {
        let th = libm::sqrt(-q2);
        let (c, s) = if th < 1e-8 {
            (1.0 + 0.5 * q2, 1.0 + q2 / 6.0)
        } else {
            (libm::cos(th), libm::sin(th) / th)
        };
        (half_tr, [c + s * n[0], s * n[1], s * n[2], c + s * n[3]])
    }
}

/// Exact propagation with constant coefficient `c0` from `init` to time `t`
/// (either direction).
///
/// Characteristic roots are `-a +- sqrt(a^2 - lambda^2 c0)`; the double-root
/// formula is used when the discriminant is below `1e-12 lambda^2 c0` in
/// magnitude. The dominant exponential goes into the log scale.
pub fn closed_form_constant(p: &ModeParams, c0: f64, init: &ModeState, t: f64) -> ModeState {
    let dt = t - init.t;
    // Backward time: reverse (a -> -a, u' -> -u').
    let (a, d, vs) = if dt >= 0.0 {
        (p.damping(), dt, 1.0)
    } else {
        (-p.damping(), -dt, -1.0)
    };
    let k = p.lambda * p.lambda * c0;
    let u0 = init.u_dir;
    let u1 = vs * init.v_dir;
    let disc = a * a - k;
    let (gain, u, v) = if libm::fabs(disc) < 1e-12 * k {
        (-a * d, u0 * (1.0 + a * d) + u1 * d, u1 * (1.0 - a * d) - u0 * a * a * d)
    } else if disc < 0.0 {
        let w = libm::sqrt(-disc);
        let (s, c) = (libm::sin(w * d), libm::cos(w * d));
        let sw = s / w;
        (
            -a * d,
            u0 * (c + a * sw) + u1 * sw,
            u1 * (c - a * sw) - u0 * k * sw,
        )
    } else {
        let kap = libm::sqrt(disc);
        if kap * d < 0.5 {
            let ch = libm::cosh(kap * d);
            let sk = libm::sinh(kap * d) / kap;
            (-a * d, u0 * (ch + a * sk) + u1 * sk, u1 * (ch - a * sk) - u0 * k * sk)
        } else {
            // Stable roots: r_plus > r_minus, r_plus * r_minus = k.
            let (rp, rm) = if a > 0.0 {
                (-k / (a + kap), -a - kap)
            } else {
                let rp = -a + kap;
                (rp, k / rp)
            };
            let aa = (u1 - rm * u0) / (2.0 * kap);
            let bb = (rp * u0 - u1) / (2.0 * kap);
            let dec = libm::exp(-2.0 * kap * d);
            (rp * d, aa + bb * dec, rp * aa + rm * bb * dec)
        }
    };
    ModeState::from_log(t, init.log_scale + gain, u, vs * v)
}

/// Convenience form of [`closed_form_constant`] on physical values from
/// time 0.
pub fn closed_form_constant_values(p: &ModeParams, c0: f64, init: (f64, f64), t: f64) -> (f64, f64) {
    let s = closed_form_constant(p, c0, &ModeState::new(0.0, init.0, init.1), t);
    (s.u(), s.v())
}

/// `w = sin(lambda t) exp(b)` and `w'` in direction/log form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    /// `b(eps, lambda, t) = (2 eps lambda - delta lambda^(2 sigma)) t - eps sin(2 lambda t)`
    pub b: f64,
    /// `b'(t)`
    pub b_prime: f64,
    /// `sin(lambda t)`
    pub w_dir: f64,
    /// `lambda cos(lambda t) + sin(lambda t) b'(t)`
    pub wp_dir: f64,
}

impl GammaSolution {
    pub fn state(&self, t: f64) -> ModeState {
        ModeState::from_log(t, self.b, self.w_dir, self.wp_dir)
    }
}

/// Explicit solution of the mode equation when `c` is the resonant
/// coefficient `1 + delta^2 / lambda^(2 - 4 sigma) - 16 eps^2 sin^4(lambda t)
/// - 8 eps sin(2 lambda t)`.
pub fn closed_form_gamma(eps: f64, lambda: f64, delta: f64, sigma: f64, t: f64) -> GammaSolution {
    let d = delta * libm::pow(lambda, 2.0 * sigma);
    let x = lambda * t;
    let s = libm::sin(x);
    let b = (2.0 * eps * lambda - d) * t - eps * libm::sin(2.0 * x);
    let bp = 2.0 * eps * lambda - d - 2.0 * eps * lambda * libm::cos(2.0 * x);
    GammaSolution {
        b,
        b_prime: bp,
        w_dir: s,
        wp_dir: lambda * libm::cos(x) + s * bp,
    }
}

/// Fixed-step classical RK4 with compensated summation, for cross-checks.
pub fn oracle_integrate(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    span: (f64, f64),
    steps: usize,
) -> ModeState {
    let steps = steps.max(1);
    let a = p.damping();
    let k = p.lambda * p.lambda;
    let h = (span.1 - span.0) / steps as f64;
    let mut s = ModeState::new(span.0, init.0, init.1);
    let (mut cu, mut cv) = (0.0, 0.0);
    let f = |t: f64, u: f64, v: f64| (v, -2.0 * a * v - k * c.eval(t) * u);
    for i in 0..steps {
        let t = span.0 + h * i as f64;
        let (u, v) = (s.u_dir, s.v_dir);
        let k1 = f(t, u, v);
        let k2 = f(t + 0.5 * h, u + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
        let k3 = f(t + 0.5 * h, u + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
        let k4 = f(t + h, u + h * k3.0, v + h * k3.1);
        let du = h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        let dv = h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        let yu = du - cu;
        let nu = u + yu;
        cu = (nu - u) - yu;
        let yv = dv - cv;
        let nv = v + yv;
        cv = (nv - v) - yv;
        s.u_dir = nu;
        s.v_dir = nv;
        let before = s.log_scale;
        s.renormalize();
        let r = libm::exp(before - s.log_scale);
        cu *= r;
        cv *= r;
    }
    s.t = span.1;
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions {
            closed_form_segments: false,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let p = ModeParams::new(1.0, 0.0, 0.0).unwrap();
        let tr = integrate(&p, &Coefficient::constant(1.0), (0.0, 1.0), (0.0, core::f64::consts::FRAC_PI_2), &opts())
            .unwrap();
        assert!((tr.last().u() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn critical_damping() {
        let p = ModeParams::new(1.0, 0.5, 1.0).unwrap();
        let tr = integrate(&p, &Coefficient::constant(1.0), (0.0, 1.0), (0.0, 1.0), &opts()).unwrap();
        assert!((tr.last().u() - libm::exp(-1.0)).abs() < 1e-9);
        let (u, _) = closed_form_constant_values(&p, 1.0, (0.0, 1.0), 1.0);
        assert!((u - libm::exp(-1.0)).abs() < 1e-14);
    }

    #[test]
    fn closed_form_backward_inverts_forward() {
        for (sigma, delta, lambda, c0) in [(0.75, 2.0, 5.0, 1.3), (1.0, 1.0, 10.0, 1.0), (0.0, 0.3, 4.0, 0.5)] {
            let p = ModeParams::new(lambda, sigma, delta).unwrap();
            let s0 = ModeState::new(0.0, 0.3, -1.1);
            let s1 = closed_form_constant(&p, c0, &s0, 0.05);
            let back = closed_form_constant(&p, c0, &s1, 0.0);
            assert!((back.u() - 0.3).abs() < 1e-9, "{sigma} {back:?}");
            assert!((back.v() + 1.1).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_matches_closed_form() {
        let p = ModeParams::new(5.0, 0.75, 2.0).unwrap();
        let s = oracle_integrate(&p, &Coefficient::constant(1.3), (1.0, 0.0), (0.0, 1.0), 100_000);
        let (u, v) = closed_form_constant_values(&p, 1.3, (1.0, 0.0), 1.0);
        assert!((s.u() - u).abs() < 1e-8 * u.abs().max(1e-300) + 1e-14, "{} {}", s.u(), u);
        assert!((s.v() - v).abs() < 1e-8 * v.abs() + 1e-14);
    }

    #[test]
    fn exponential_stepper_on_stiff_constant() {
        let p = ModeParams::new(100.0, 1.5, 4.0).unwrap();
        let o = SolverOptions {
            stepper: Stepper::Exponential,
            ..opts()
        };
        let tr = integrate(&p, &Coefficient::constant(1.0), (1.0, 2.0), (0.0, 1.0), &o).unwrap();
        let cf = closed_form_constant(&p, 1.0, &ModeState::new(0.0, 1.0, 2.0), 1.0);
        let l = tr.last().log_energy(100.0) - cf.log_energy(100.0);
        assert!(l.abs() < 1e-9, "{l}");
    }

    #[test]
    fn gamma_at_activation_time() {
        let (eps, lam) = (0.1, 50.0);
        let g = closed_form_gamma(eps, lam, 1.0, 0.25, 4.0 * core::f64::consts::PI / lam);
        assert!(g.w_dir.abs() < 1e-12);
        assert!((g.wp_dir.abs() - lam).abs() < 1e-9);
        assert_eq!(closed_form_gamma(eps, lam, 1.0, 0.25, 0.0).b, 0.0);
    }

    #[test]
    fn expm2_matches_series() {
        let m = [0.1, 0.4, -0.3, -0.2];
        let (g, n) = expm2(&m);
        let mut term = [1.0, 0.0, 0.0, 1.0];
        let mut sum = term;
        for i in 1..30 {
            term = mul2(&term, &m);
            for x in term.iter_mut() {
                *x /= i as f64;
            }
            for j in 0..4 {
                sum[j] += term[j];
            }
        }
        for j in 0..4 {
            assert!((libm::exp(g) * n[j] - sum[j]).abs() < 1e-14);
        }
    }
}
