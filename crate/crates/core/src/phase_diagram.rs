//! Growth-regime sweep over `(sigma, alpha, delta)`.
//!
//! Each cell integrates probe modes against random Hölder coefficients and,
//! below the line `alpha = 1 - 2 sigma`, against one resonant window tuned
//! to a single frequency. The measured growth exponent is compared with the
//! two competing scales `lambda^(1 - alpha)` (resonance, `lambda
//! omega(1/lambda)` for `omega(x) = x^alpha`) and `lambda^(2 sigma)`
//! (damping).

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::{synthesize_hoelder, Coefficient};
use crate::exec::ParallelMap;
use crate::math::lin_space;
use crate::mode_solver::{integrate, ModeParams, SolverError, SolverOptions, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("invalid sweep configuration: {0}")]
    BadConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sigma_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub lambda_probe: Vec<f64>,
    pub horizon: f64,
    /// Random Hölder coefficients per cell.
    pub trials: usize,
    pub seed: u64,
    /// `mu2 - mu1` of the synthesized coefficients.
    pub spread: f64,
    pub base_freq: f64,
    /// Length of the resonant probe, in periods of the coefficient.
    pub resonant_periods: usize,
    /// Slope above which growth counts as sustained.
    pub threshold: f64,
    /// Half-width of the band around `alpha = 1 - 2 sigma` reported as
    /// borderline.
    pub borderline_band: f64,
    pub solver: SolverOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sigma_grid: alloc::vec![0.0, 0.1, 0.25, 0.4, 0.6],
            alpha_grid: alloc::vec![0.1, 0.3, 0.5, 0.7, 0.9],
            delta_grid: alloc::vec![1.0],
            lambda_probe: alloc::vec![10.0, 100.0, 1000.0],
            horizon: 2.0,
            trials: 1,
            seed: 1,
            spread: 0.25,
            base_freq: 1.0,
            resonant_periods: 64,
            threshold: 1e-3,
            borderline_band: 0.02,
            solver: SolverOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), PhaseError> {
        let bad = |m: &str| Err(PhaseError::BadConfig(m.to_string()));
        if self.sigma_grid.is_empty() || self.alpha_grid.is_empty() || self.delta_grid.is_empty() {
            return bad("grids must be nonempty");
        }
        if self.lambda_probe.is_empty() || self.lambda_probe.iter().any(|&l| !(l > 0.0)) {
            return bad("probe frequencies must be positive");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.delta_grid.iter().any(|&d| !(d >= 0.0)) {
            return bad("delta must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    DampingDominates,
    ResonanceDominates,
    Borderline,
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::DampingDominates => "damping-dominates",
            Classification::ResonanceDominates => "resonance-dominates",
            Classification::Borderline => "borderline",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind {
    Hoelder { seed: u64 },
    /// One resonant window of amplitude `eps` at this frequency.
    Resonant { eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub lambda: f64,
    #[serde(flatten)]
    pub kind: ProbeKind,
    /// Growth rate of `ln E` per unit time.
    pub growth: f64,
    /// `growth / lambda^(1 - alpha)`
    pub slope_res: f64,
    /// `growth / lambda^(2 sigma)`
    pub slope_damp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellVerdict {
    pub sigma: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Largest measured growth rate over the probes.
    pub growth_exponent: f64,
    pub slope_res: f64,
    pub slope_damp: f64,
    pub classification: Classification,
    pub probes: Vec<ProbeResult>,
    pub error: Option<String>,
}

/// `(max_{t >= T/2} ln E(t) - ln E(0)) / T` over the records of a run on
/// `[t0, t0 + T]`. Insensitive to the scale of the initial data.
pub fn growth_rate(tr: &Trajectory) -> f64 {
    let r = &tr.records;
    let (t0, t1) = (r[0].t, r[r.len() - 1].t);
    let mid = 0.5 * (t0 + t1);
    let top = r
        .iter()
        .filter(|x| x.t >= mid)
        .map(|x| x.log_e_classic)
        .fold(f64::NEG_INFINITY, f64::max);
    (top - r[0].log_e_classic) / (t1 - t0)
}

/// Frequency and amplitude of the resonant probe for a cell with
/// `alpha < 1 - 2 sigma`: `eps = lambda^(-alpha) / 20`, and `lambda` the
/// smallest power of ten at least the largest probe with
/// `lambda^(1 - alpha - 2 sigma) >= 20 delta`, so that the growth rate
/// `4 eps lambda - 2 delta lambda^(2 sigma)` is positive.
pub fn tuned_resonance(sigma: f64, alpha: f64, delta: f64, probes: &[f64]) -> (f64, f64) {
    let gap = 1.0 - alpha - 2.0 * sigma;
    let top = probes.iter().copied().fold(1.0, f64::max);
    let need = if delta > 0.0 {
        libm::pow(20.0 * delta, 1.0 / gap)
    } else {
        1.0
    };
    let lam = libm::pow(10.0, libm::ceil(libm::log10(need.max(top))));
    (lam, libm::pow(lam, -alpha) / 20.0)
}

/// Growth rate of one resonant window, measured in scaled time `tau =
/// lambda t` where the equation is `w'' + 2 d w' + gamma w = 0` with `d =
/// delta lambda^(2 sigma - 1)` and `gamma - 1 = d^2 - 16 eps^2 sin^4 tau - 8
/// eps sin 2tau`.
///
/// Uses the Prüfer form `w = rho sin phi`, `w' = rho cos phi`:
/// `phi' = 1 + (gamma - 1) sin^2 phi + d sin 2phi`,
/// `(ln rho^2)' = -4 d cos^2 phi - (gamma - 1) sin 2phi`.
/// The log-energy derivative is `O(eps + d)`, so rates far below the f64
/// resolution of `ln E` itself keep their relative accuracy.
pub fn resonant_growth(sigma: f64, delta: f64, lambda: f64, eps: f64, periods: usize) -> f64 {
    let d = delta * libm::pow(lambda, 2.0 * sigma - 1.0);
    let rhs = |tau: f64, phi: f64| {
        let s = libm::sin(tau);
        let g1 = d * d - 16.0 * eps * eps * s * s * s * s - 8.0 * eps * libm::sin(2.0 * tau);
        let (sp, cp) = (libm::sin(phi), libm::cos(phi));
        (1.0 + g1 * sp * sp + 2.0 * d * sp * cp, -4.0 * d * cp * cp - 2.0 * g1 * sp * cp)
    };
    let per = 256;
    let n = per * periods.max(1);
    let h = PI / per as f64;
    let end = PI * periods.max(1) as f64;
    let (mut phi, mut ell) = (0.0, 0.0);
    let mut top = f64::NEG_INFINITY;
    for i in 0..n {
        let tau = i as f64 * h;
        let k1 = rhs(tau, phi);
        let k2 = rhs(tau + 0.5 * h, phi + 0.5 * h * k1.0);
        let k3 = rhs(tau + 0.5 * h, phi + 0.5 * h * k2.0);
        let k4 = rhs(tau + h, phi + h * k3.0);
        phi += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        ell += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if 2 * (i + 1) >= n {
            top = top.max(ell);
        }
    }
    top / end * lambda
}

/// Hölder probe: `(1, 0)` data, physical time.
fn hoelder_growth(p: &ModeParams, c: &Coefficient, horizon: f64, solver: &SolverOptions) -> Result<f64, SolverError> {
    let opts = SolverOptions {
        sample_times: lin_space(0.0, horizon, 201),
        ..solver.clone()
    };
    let tr = integrate(p, c, (1.0, 0.0), (0.0, horizon), &opts)?;
    Ok(growth_rate(&tr))
}

fn classify(cfg: &SweepConfig, sigma: f64, alpha: f64, probes: &[ProbeResult]) -> Classification {
    if sigma < 0.5 && libm::fabs(alpha - (1.0 - 2.0 * sigma)) <= cfg.borderline_band {
        return Classification::Borderline;
    }
    let res = probes.iter().map(|p| p.slope_res).fold(f64::NEG_INFINITY, f64::max);
    let damp = probes.iter().map(|p| p.slope_damp).fold(f64::NEG_INFINITY, f64::max);
    if res > cfg.threshold {
        Classification::ResonanceDominates
    } else if damp <= cfg.threshold {
        Classification::DampingDominates
    } else {
        Classification::Inconclusive
    }
}

fn run_cell(cfg: &SweepConfig, (sigma, alpha, delta): (f64, f64, f64), cell_seed: u64) -> CellVerdict {
    let mut probes = Vec::new();
    let mut error = None;
    let slopes = |lambda: f64, growth: f64| {
        (growth / libm::pow(lambda, 1.0 - alpha), growth / libm::pow(lambda, 2.0 * sigma))
    };
    'trials: for trial in 0..cfg.trials {
        let seed = cell_seed.wrapping_add(trial as u64);
        let c = match synthesize_hoelder(alpha, cfg.spread, seed, cfg.base_freq) {
            Ok(c) => c,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        for &lambda in &cfg.lambda_probe {
            let p = ModeParams { lambda, sigma, delta };
            match hoelder_growth(&p, &c, cfg.horizon, &cfg.solver) {
                Ok(g) => {
                    let (slope_res, slope_damp) = slopes(lambda, g);
                    probes.push(ProbeResult {
                        lambda,
                        kind: ProbeKind::Hoelder { seed },
                        growth: g,
                        slope_res,
                        slope_damp,
                    });
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break 'trials;
                }
            }
        }
    }
    if error.is_none() && alpha < 1.0 - 2.0 * sigma {
        let (lambda, eps) = tuned_resonance(sigma, alpha, delta, &cfg.lambda_probe);
        match Some(resonant_growth(sigma, delta, lambda, eps, cfg.resonant_periods)).filter(|g| g.is_finite()) {
            Some(g) => {
                let (slope_res, slope_damp) = slopes(lambda, g);
                probes.push(ProbeResult {
                    lambda,
                    kind: ProbeKind::Resonant { eps },
                    growth: g,
                    slope_res,
                    slope_damp,
                });
            }
            None => error = Some("resonant probe diverged".to_string()),
        }
    }
    let classification = if error.is_some() {
        Classification::Inconclusive
    } else {
        classify(cfg, sigma, alpha, &probes)
    };
    let max_of = |f: fn(&ProbeResult) -> f64| probes.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    CellVerdict {
        sigma,
        alpha,
        delta,
        growth_exponent: max_of(|p| p.growth),
        slope_res: max_of(|p| p.slope_res),
        slope_damp: max_of(|p| p.slope_damp),
        classification,
        probes,
        error,
    }
}

/// Runs every cell through `exec`; cells are ordered sigma-major, then
/// alpha, then delta. A failing cell is reported inconclusive.
pub fn sweep<M: ParallelMap>(cfg: &SweepConfig, exec: &M) -> Result<Vec<CellVerdict>, PhaseError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &s in &cfg.sigma_grid {
        for &a in &cfg.alpha_grid {
            for &d in &cfg.delta_grid {
                cells.push((s, a, d));
            }
        }
    }
    let seeded: Vec<((f64, f64, f64), u64)> = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, cfg.seed.wrapping_mul(1_000_003).wrapping_add(1000 * i as u64)))
        .collect();
    Ok(exec.map(&seeded, |&(cell, seed)| run_cell(cfg, cell, seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mode_solver::closed_form_gamma;

    #[test]
    fn resonant_growth_matches_closed_form() {
        let (sigma, delta, lambda) = (0.25, 1.0, 1e6);
        let eps = libm::pow(lambda, -0.25) / 20.0;
        let g = resonant_growth(sigma, delta, lambda, eps, 64);
        let expect = 4.0 * eps * lambda - 2.0 * delta * libm::pow(lambda, 2.0 * sigma);
        assert!(g > 0.0);
        assert!(libm::fabs(g / expect - 1.0) < 0.01, "{g} vs {expect}");
    }

    #[test]
    fn window_growth_matches_gamma_closed_form() {
        // Includes tuned frequencies where ln E moves by ~1e-10 per period.
        for &(sigma, alpha, lambda) in &[(0.25, 0.25, 1e6), (0.0, 0.9, 1e13), (0.4, 0.1, 1e13)] {
            let eps = libm::pow(lambda, -alpha) / 20.0;
            let d = libm::pow(lambda, 2.0 * sigma - 1.0);
            let end = PI * 64.0;
            let expect = 2.0 * closed_form_gamma(eps, 1.0, d, 0.0, end).b / end * lambda;
            let g = resonant_growth(sigma, 1.0, lambda, eps, 64);
            assert!(libm::fabs(g / expect - 1.0) < 0.01, "{g} vs {expect}");
        }
    }

    #[test]
    fn supercritical_cell_is_damped() {
        let cfg = SweepConfig {
            lambda_probe: alloc::vec![10.0, 100.0],
            ..SweepConfig::default()
        };
        let v = run_cell(&cfg, (0.8, 0.1, 1.0), 3);
        assert_eq!(v.classification, Classification::DampingDominates);
    }

    #[test]
    fn smooth_cell_has_no_growth() {
        let cfg = SweepConfig {
            lambda_probe: alloc::vec![10.0, 100.0],
            ..SweepConfig::default()
        };
        let v = run_cell(&cfg, (0.25, 0.9, 0.5), 5);
        assert_eq!(v.classification, Classification::DampingDominates);
        assert!(v.growth_exponent <= 0.0);
    }

    #[test]
    fn tuned_frequency_clears_damping() {
        let (lam, eps) = tuned_resonance(0.4, 0.1, 1.0, &[10.0, 100.0, 1000.0]);
        assert!(4.0 * eps * lam > 2.0 * libm::pow(lam, 0.8));
    }
}
