//! Per-mode propagation and the two series tests.
//!
//! Energies are reported normalized by `lambda_k^2`, i.e. in scaled time.
//! On `[0, t_k]` the mode is integrated backward numerically. Across its own
//! window it follows the closed form, checked against the integrator on the
//! first periods. Beyond `s_k` the number of periods is astronomical, so
//! `ln F` is carried as a rigorous bracket built piece by piece from
//! `F' = -4 a u'^2 + lambda^2 c' u^2`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DgcsConstruction, DgcsError, ModeWindow, PieceKind};
use crate::coefficients::{Coefficient, Segment, Shape};
use crate::exec::ParallelMap;
use crate::math::lin_space;
use crate::mode_solver::{closed_form_gamma, integrate, integrate_state, ModeParams, ModeState, SolverOptions};
use crate::Xf;

use super::coefficient::CoefficientAudit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    pub t_eval: f64,
    pub r_grid: Vec<f64>,
    pub big_r_grid: Vec<f64>,
    /// Number of trailing modes over which the series terms must be
    /// strictly monotone.
    pub tail: usize,
    pub slack: f64,
    /// Length of the numeric window check, in periods of `sin(tau)`.
    pub window_periods: usize,
    pub omega_pairs: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            t_eval: 0.1,
            r_grid: alloc::vec![0.1, 1.0, 10.0],
            big_r_grid: alloc::vec![0.1, 1.0, 10.0],
            tail: 3,
            slack: 1e-7,
            window_periods: 8,
            omega_pairs: 100_000,
            seed: 7,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCertificate {
    pub k: usize,
    pub lambda: Xf,
    /// `ln E_k(0) - 2 ln lambda_k` from the backward integration.
    pub log_e0: f64,
    /// Bound on the effect of excess dropped from the scaled view.
    pub dropped: f64,
    /// `ln E_k(0) <= 2 ln lambda_k + 4 pi`, as `4 pi - log_e0 - dropped`.
    pub initial_margin: f64,
    /// Backward envelope `(4 a + lambda / 2) t_k` minus the measured change.
    pub envelope_margin: f64,
    /// `ln F_k(s_k) - 2 ln lambda_k = 2 b(s_k)`.
    pub log_f_window: Xf,
    /// `log_f_window - 2 eps_k lambda_k s_k`.
    pub growth_margin: Xf,
    /// Bracket of `ln F_k(t_eval) - 2 ln lambda_k`.
    pub log_f_eval_lo: Xf,
    pub log_f_eval_hi: Xf,
    /// `2 eps_k lambda_k s_k - 8 a t - 64 eps_{k-1} lambda_{k-1} t` at
    /// `t_eval`, the persistence lower bound (normalized).
    pub persistence_bound: Xf,
    /// Largest log-energy discrepancy between the closed form and the
    /// integrator on the start of the window.
    pub window_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesCheck {
    /// `r` (convergent series) or `R` (divergent series).
    pub param: f64,
    pub ks: Vec<usize>,
    pub terms: Vec<Xf>,
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub mode: Option<usize>,
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub t_eval: f64,
    pub k0: usize,
    pub certified_modes: usize,
    pub modes: Vec<ModeCertificate>,
    pub coefficient: CoefficientAudit,
    /// `ln(a_k^2 E_k(0)) + 2 r phi(lambda_k)` per `r`; strictly decreasing
    /// over the tail.
    pub convergent: Vec<SeriesCheck>,
    /// `ln(a_k^2 F_k(t_eval)) - 2 R psi(lambda_k)` per `R` (lower bracket);
    /// strictly increasing over the tail.
    pub divergent: Vec<SeriesCheck>,
    /// Every last divergent term is at least `K - 2 ln K`.
    pub final_term_ok: bool,
    pub defects: Vec<Defect>,
}

impl DivergenceReport {
    pub fn passed(&self) -> bool {
        self.defects.is_empty()
    }
}

fn x(v: f64) -> Xf {
    Xf::new(v)
}

/// Bracket of the change of `ln F_k` from `s_k` to `t_eval`: `(drop, rise)`.
fn forward_bracket(cons: &DgcsConstruction, m: &ModeWindow, t_eval: Xf) -> (Xf, Xf) {
    let inp = &cons.inputs;
    let a = m.lambda.powf(2.0 * inp.sigma) * inp.delta;
    let pieces = &cons.coefficient.pieces;
    let own = pieces
        .iter()
        .position(|p| p.kind == PieceKind::Window { k: m.k })
        .expect("every certified mode has a window");
    let (mut drop, mut rise) = (Xf::ZERO, Xf::ZERO);
    for p in &pieces[own + 1..] {
        if p.start >= t_eval {
            break;
        }
        let room = t_eval - p.start;
        let dt = match p.len {
            Some(l) if l < room => l,
            _ => room,
        };
        drop = drop + a * dt * 4.0;
        match p.kind {
            PieceKind::Window { .. } => {
                let gmin = x(1.0) + p.excess_start - p.eps * p.eps * 16.0 - p.eps * 8.0;
                let v = p.eps * (x(1.0) + p.eps) * 32.0 / gmin;
                let periods = (p.lambda * dt / PI).floor() + 1.0;
                drop = drop + periods * v;
                rise = rise + periods * v;
            }
            PieceKind::Affine { .. } | PieceKind::Ramp => {
                let frac = dt / p.len.unwrap_or(Xf::ONE);
                let dc = (p.excess_end - p.excess_start) * frac;
                let cmin = x(1.0) + p.excess_start.min(p.excess_end);
                if dc > Xf::ZERO {
                    rise = rise + dc / cmin;
                } else {
                    drop = drop - dc / cmin;
                }
            }
            PieceKind::Tail => {}
        }
    }
    (drop, rise)
}

fn certify_mode(cons: &DgcsConstruction, m: &ModeWindow, opts: &CertifyOptions) -> Result<ModeCertificate, DgcsError> {
    let inp = &cons.inputs;
    let dp = m.lambda.powf(2.0 * inp.sigma - 1.0) * inp.delta;
    let dp_f = dp.to_f64();
    let eps_f = m.eps.to_f64();
    let scaled = ModeParams {
        lambda: 1.0,
        sigma: 0.0,
        delta: dp_f,
    };
    let tau0 = 4.0 * PI;

    // Backward on [0, t_k].
    let (view, dropped) = cons.coefficient.scaled_view(m.k, m.lambda, m.start, tau0)?;
    let b0 = closed_form_gamma(eps_f, 1.0, dp_f, 0.0, tau0);
    let start = ModeState::from_log(tau0, b0.b, 0.0, 1.0);
    let back = integrate_state(&scaled, &view, start, 0.0, &opts.solver)?;
    let log_e0 = back.last().log_energy(1.0);
    let log_et = 2.0 * b0.b;
    let envelope = (4.0 * dp_f + 0.5) * tau0;
    let envelope_margin = envelope - (log_e0 - log_et) - dropped;
    let initial_margin = 4.0 * PI - log_e0 - dropped;

    // Start of the window: integrator against the closed form.
    let w_end = tau0 + PI * opts.window_periods as f64;
    let gamma = Coefficient::piecewise(alloc::vec![Segment {
        start: tau0,
        end: w_end,
        shape: Shape::Gamma {
            base: 1.0 + dp_f * dp_f,
            eps: eps_f,
            freq: 1.0,
            phase: 0.0,
        },
    }])
    .map_err(|_| DgcsError::Unresolvable { k: m.k, piece: 0 })?;
    let samples = lin_space(tau0, w_end, 16 * opts.window_periods + 1);
    let sopts = SolverOptions {
        sample_times: samples.clone(),
        ..opts.solver.clone()
    };
    let tr = integrate(&scaled, &gamma, (0.0, libm::exp(b0.b)), (tau0, w_end), &sopts)?;
    let mut window_error = 0.0f64;
    for s in &tr.states {
        let exact = closed_form_gamma(eps_f, 1.0, dp_f, 0.0, s.t).state(s.t).log_energy(1.0);
        window_error = window_error.max(libm::fabs(s.log_energy(1.0) - exact));
    }

    // Window end: u(s_k) = 0, ln F - 2 ln lambda = 2 b(s_k).
    let n_pi = m.half_periods * PI;
    let log_f_window = (m.eps * 2.0 - dp) * n_pi * 2.0;
    let growth = m.eps * n_pi * 2.0;
    let growth_margin = log_f_window - growth;

    let t_eval = x(opts.t_eval);
    let (drop, rise) = forward_bracket(cons, m, t_eval);
    let a = m.lambda.powf(2.0 * inp.sigma) * inp.delta;
    let persistence_bound = growth - a * t_eval * 8.0 - m.prev_eps_lambda * t_eval * 64.0;
    Ok(ModeCertificate {
        k: m.k,
        lambda: m.lambda,
        log_e0,
        dropped,
        initial_margin,
        envelope_margin,
        log_f_window,
        growth_margin,
        log_f_eval_lo: log_f_window - drop,
        log_f_eval_hi: log_f_window + rise,
        persistence_bound,
        window_error,
    })
}

fn strictly(terms: &[Xf], tail: usize, increasing: bool) -> bool {
    let n = terms.len();
    if n < tail.max(2) {
        return false;
    }
    terms[n - tail..].windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

/// Propagates every certified mode (through `exec`) and runs the
/// coefficient audits and series tests.
pub fn certify<M: ParallelMap>(
    cons: &DgcsConstruction,
    opts: &CertifyOptions,
    exec: &M,
) -> Result<DivergenceReport, DgcsError> {
    if !(opts.t_eval > 0.0) {
        return Err(DgcsError::BadInput("t_eval must be positive".to_string()));
    }
    let results = exec.map(&cons.modes, |m| certify_mode(cons, m, opts));
    let modes: Vec<ModeCertificate> = results.into_iter().collect::<Result<_, _>>()?;
    let coefficient = cons.coefficient.audit(opts.omega_pairs, opts.seed);
    let mut defects = Vec::new();
    let mut defect = |mode: Option<usize>, check: &str, detail: String| {
        defects.push(Defect {
            mode,
            check: check.to_string(),
            detail,
        })
    };

    for q in cons.ledger_failures() {
        defect(Some(q.k), "ledger", alloc::format!("{} margin {}", q.name, q.margin));
    }
    if coefficient.junction_max_gap > 1e-12 {
        defect(None, "junction", alloc::format!("gap {}", coefficient.junction_max_gap));
    }
    if !coefficient.strictly_hyperbolic() {
        defect(None, "hyperbolicity", alloc::format!("range [{}, {}]", coefficient.min_c, coefficient.max_c));
    }
    if coefficient.slope_worst_ratio > 1.0 {
        defect(None, "slope", alloc::format!("ratio {}", coefficient.slope_worst_ratio));
    }
    if !coefficient.omega.passed() {
        defect(None, "modulus", alloc::format!("ratio {}", coefficient.omega.worst_ratio));
    }
    for mc in &modes {
        let k = Some(mc.k);
        if mc.window_error > 1e-7 {
            defect(k, "window_closed_form", alloc::format!("[t_k, s_k] error {}", mc.window_error));
        }
        if mc.envelope_margin < -opts.slack {
            defect(k, "backward_envelope", alloc::format!("[0, t_k] margin {}", mc.envelope_margin));
        }
        if mc.initial_margin < -opts.slack {
            defect(k, "initial_energy", alloc::format!("[0, t_k] margin {}", mc.initial_margin));
        }
        if mc.growth_margin < x(-opts.slack) {
            defect(k, "window_growth", alloc::format!("[t_k, s_k] margin {}", mc.growth_margin));
        }
    }

    let ks: Vec<usize> = modes.iter().map(|m| m.k).collect();
    let lnk = |k: usize| libm::log(k as f64);
    let convergent: Vec<SeriesCheck> = opts
        .r_grid
        .iter()
        .map(|&r| {
            let terms: Vec<Xf> = cons
                .modes
                .iter()
                .zip(&modes)
                .map(|(w, mc)| w.phi * (2.0 * (r - w.k as f64)) + (mc.log_e0 + mc.dropped - 2.0 * lnk(w.k)))
                .collect();
            SeriesCheck {
                param: r,
                ks: ks.clone(),
                monotone: strictly(&terms, opts.tail, false),
                terms,
            }
        })
        .collect();
    let divergent: Vec<SeriesCheck> = opts
        .big_r_grid
        .iter()
        .map(|&big_r| {
            let terms: Vec<Xf> = cons
                .modes
                .iter()
                .zip(&modes)
                .map(|(w, mc)| mc.log_f_eval_lo - w.phi * (2.0 * w.k as f64) - w.psi * (2.0 * big_r) - 2.0 * lnk(w.k))
                .collect();
            SeriesCheck {
                param: big_r,
                ks: ks.clone(),
                monotone: strictly(&terms, opts.tail, true),
                terms,
            }
        })
        .collect();
    let last_k = ks.last().copied().unwrap_or(1);
    let floor = x(last_k as f64 - 2.0 * lnk(last_k));
    let final_term_ok = divergent.iter().all(|s| s.terms.last().is_some_and(|&t| t >= floor));
    for s in &convergent {
        if !s.monotone {
            defect(None, "convergent_series", alloc::format!("r = {} not decreasing over the tail", s.param));
        }
    }
    for s in &divergent {
        if !s.monotone {
            defect(None, "divergent_series", alloc::format!("R = {} not increasing over the tail", s.param));
        }
    }
    if !final_term_ok {
        defect(None, "divergent_series", alloc::format!("last term below {floor}"));
    }
    Ok(DivergenceReport {
        t_eval: opts.t_eval,
        k0: cons.k0,
        certified_modes: cons.modes.len(),
        modes,
        coefficient,
        convergent,
        divergent,
        final_term_ok,
        defects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgcs_builder::{build, DgcsInputs};
    use crate::exec::Sequential;

    #[test]
    fn preset_certifies() {
        let cons = build(&DgcsInputs::preset()).unwrap();
        let opts = CertifyOptions {
            omega_pairs: 5_000,
            ..CertifyOptions::default()
        };
        let rep = certify(&cons, &opts, &Sequential).unwrap();
        assert!(rep.passed(), "{:?}", rep.defects);
        for m in &rep.modes {
            assert!(m.log_f_eval_lo <= m.log_f_eval_hi);
        }
    }
}
