//! Numerical audits of the per-mode energy lemmas and their summed,
//! family-level versions.
//!
//! Every bound is compared in log space: an audit stores `ln lhs`, `ln rhs`
//! and the margin `ln(rhs / lhs)`, so a passing audit has margin `>= -slack`.
//! Operator powers act per mode as `A^(1/2) -> lambda`, `A^alpha ->
//! lambda^(2 alpha)`; squared norms therefore carry `lambda^(4 alpha)`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficients::Coefficient;
use crate::exec::ParallelMap;
use crate::math::{bisect_last_true, log_space, log_sum_exp};
use crate::mode_solver::{integrate, EnergyRecord, ModeParams, ModeState, SolverError, SolverOptions};
use crate::spaces::{norm_squared, ModeVector, WeightFunction, WeightedNorm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("precondition `{name}` fails: {lhs} < {rhs}")]
    Precondition { name: String, lhs: f64, rhs: f64 },
    #[error("frequency split {nu} is below threshold: `{name}` fails at lambda = {lambda}")]
    Threshold { name: String, nu: f64, lambda: f64 },
    #[error("initial data vectors do not match the spectrum")]
    DataMismatch,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn precondition(name: &str, lhs: f64, rhs: f64) -> VerifyError {
    VerifyError::Precondition {
        name: name.to_string(),
        lhs,
        rhs,
    }
}

/// One bound checked at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub bound: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub params: BTreeMap<String, f64>,
}

/// `ln(rhs / lhs)`, with `+inf` for a vanishing left side (`0` if both
/// sides vanish).
pub fn log_margin(lhs: f64, rhs: f64) -> f64 {
    if lhs == f64::NEG_INFINITY {
        if rhs == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        rhs - lhs
    }
}

impl BoundAudit {
    pub fn new(bound: &str, t: f64, lhs: f64, rhs: f64, params: &BTreeMap<String, f64>) -> BoundAudit {
        BoundAudit {
            bound: bound.to_string(),
            t,
            lhs,
            rhs,
            margin: log_margin(lhs, rhs),
            params: params.clone(),
        }
    }

    pub fn passes(&self, slack: f64) -> bool {
        self.margin >= -slack
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedAudit {
    pub bound: String,
    pub reason: String,
    /// Measured gap of the failing condition, when there is one.
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub r: Option<f64>,
    pub audits: Vec<BoundAudit>,
    pub skipped: Vec<SkippedAudit>,
}

impl LemmaReport {
    pub fn worst_margin(&self) -> f64 {
        self.audits.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn failures(&self, slack: f64) -> impl Iterator<Item = &BoundAudit> {
        self.audits.iter().filter(move |a| !a.passes(slack))
    }

    pub fn passed(&self, slack: f64) -> bool {
        self.failures(slack).next().is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifierOptions {
    /// Accepted negative log margin.
    pub slack: f64,
    /// Log-spaced sample times per horizon.
    pub samples: usize,
    pub solver: SolverOptions,
}

impl Default for VerifierOptions {
    fn default() -> Self {
        VerifierOptions {
            slack: 1e-7,
            samples: 256,
            solver: SolverOptions::default(),
        }
    }
}

/// `0`, `samples` log-spaced times in `[1e-6 H, H]`, and the breakpoints of
/// `c` inside `(0, H)`.
pub fn sample_times(horizon: f64, samples: usize, c: &Coefficient) -> Vec<f64> {
    let mut ts = alloc::vec![0.0];
    if samples > 0 {
        ts.extend(log_space(1e-6 * horizon, horizon, samples.max(2)));
    }
    ts.extend(c.breakpoints().into_iter().filter(|&t| t > 0.0 && t < horizon));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

fn run_mode(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    times: &[f64],
    solver: &SolverOptions,
) -> Result<(Vec<ModeState>, Vec<EnergyRecord>), SolverError> {
    let horizon = times.last().copied().unwrap_or(0.0);
    let opts = SolverOptions {
        sample_times: times.to_vec(),
        ..solver.clone()
    };
    let tr = integrate(p, c, init, (0.0, horizon), &opts)?;
    Ok((tr.states, tr.records))
}

/// `2 ln|x|`, `-inf` at zero.
fn log_sq(x: f64) -> f64 {
    if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * libm::log(libm::fabs(x))
    }
}

fn log_u2(s: &ModeState) -> f64 {
    if s.u_dir == 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * s.log_abs_u()
    }
}

fn log_v2(s: &ModeState) -> f64 {
    if s.v_dir == 0.0 {
        f64::NEG_INFINITY
    } else {
        2.0 * s.log_abs_v()
    }
}

/// `ln(sum_i w_i x_i^2)` from `(ln w_i, 2 ln|x_i|)` pairs.
fn weighted_log<const N: usize>(terms: [(f64, f64); N]) -> f64 {
    log_sum_exp(terms.iter().map(|&(lw, lx)| lw + lx))
}

fn base_params(p: &ModeParams, c: &Coefficient) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("lambda".to_string(), p.lambda);
    m.insert("sigma".to_string(), p.sigma);
    m.insert("delta".to_string(), p.delta);
    m.insert("mu1".to_string(), c.mu1);
    m.insert("mu2".to_string(), c.mu2);
    m
}

/// `4 delta^2 lambda^(4 sigma - 2) >= mu2`.
pub fn super_threshold_holds(p: &ModeParams, mu2: f64) -> bool {
    4.0 * p.delta * p.delta * libm::pow(p.lambda, 4.0 * p.sigma - 2.0) >= mu2
}

/// Whether `r` satisfies the three supercritical decay constraints:
/// `delta lambda^(4s-2) > r mu2`, `2 delta r <= 1`,
/// `4 delta^2 lambda^(4s-2) >= (1 + 2 r delta) mu2`.
pub fn super_r_feasible(p: &ModeParams, mu2: f64, r: f64) -> bool {
    let g = libm::pow(p.lambda, 4.0 * p.sigma - 2.0);
    let d = p.delta;
    d * g > r * mu2 && 2.0 * d * r <= 1.0 && 4.0 * d * d * g >= (1.0 + 2.0 * r * d) * mu2
}

/// Largest feasible supercritical decay rate, to relative `1e-10` and
/// rounded toward smaller `r`. `None` when no `r > 0` is feasible.
pub fn super_r_star(p: &ModeParams, mu2: f64) -> Option<f64> {
    if !(p.delta > 0.0) || !super_r_feasible(p, mu2, 0.0) {
        return None;
    }
    let r = bisect_last_true(|r| super_r_feasible(p, mu2, r), 0.0, 0.5 / p.delta, 1e-10);
    (r > 0.0).then_some(r)
}

/// `lambda^(1 - 2 sigma) omega(1 / lambda)`.
pub fn big_lambda(p: &ModeParams, c: &Coefficient) -> Option<f64> {
    let w = c.modulus.as_ref()?;
    Some(libm::pow(p.lambda, 1.0 - 2.0 * p.sigma) * w.eval(1.0 / p.lambda))
}

/// `4 delta^2 mu1 - L^2 - 2 delta L`, nonnegative when the subcritical
/// threshold holds at this frequency.
pub fn sub_threshold_gap(p: &ModeParams, mu1: f64, l: f64) -> f64 {
    4.0 * p.delta * p.delta * mu1 - l * l - 2.0 * p.delta * l
}

/// `4 (delta - r)(delta mu1 - r mu2) - L^2 - 2 delta (1 + 2r) L - 8 r delta^3`.
pub fn sub_decay_gap(p: &ModeParams, mu1: f64, mu2: f64, l: f64, r: f64) -> f64 {
    let d = p.delta;
    4.0 * (d - r) * (d * mu1 - r * mu2) - l * l - 2.0 * d * (1.0 + 2.0 * r) * l - 8.0 * r * d * d * d
}

/// Largest `r in (0, delta)` with nonnegative [`sub_decay_gap`]. The gap is
/// convex in `r` and negative at `r = delta`, so the feasible set is an
/// initial segment.
pub fn sub_r_star(p: &ModeParams, mu1: f64, mu2: f64, l: f64) -> Option<f64> {
    if !(p.delta > 0.0) || sub_decay_gap(p, mu1, mu2, l, 0.0) < 0.0 {
        return None;
    }
    let hi = p.delta * (1.0 - 1e-12);
    let r = bisect_last_true(|r| sub_decay_gap(p, mu1, mu2, l, r) >= 0.0, 0.0, hi, 1e-10);
    (r > 0.0).then_some(r)
}

/// Supercritical lemma: displacement and velocity bounds, the weighted
/// `(alpha, beta)` bound and the Gevrey-type decay bound, plus monotonicity
/// of the Kovalevskian energy between samples.
#[allow(clippy::too_many_arguments)]
pub fn verify_sup_lemma(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    horizon: f64,
    alpha: f64,
    beta: f64,
    r: Option<f64>,
    opts: &VerifierOptions,
) -> Result<LemmaReport, VerifyError> {
    if c.mu1 < 0.0 {
        return Err(precondition("degenerate_hyperbolicity", c.mu1, 0.0));
    }
    let mu2 = c.mu2;
    let (lam, sig, del) = (p.lambda, p.sigma, p.delta);
    let g = libm::pow(lam, 4.0 * sig - 2.0);
    if !super_threshold_holds(p, mu2) {
        return Err(precondition("super_threshold", 4.0 * del * del * g, mu2));
    }
    let times = sample_times(horizon, opts.samples, c);
    let (states, records) = run_mode(p, c, init, &times, &opts.solver)?;
    let (u0, u1) = init;
    let (lu0, lu1) = (log_sq(u0), log_sq(u1));
    let ln = libm::log;
    let mut params = base_params(p, c);
    let mut audits = Vec::new();
    let mut skipped = Vec::new();

    let rhs_u = weighted_log([(ln(2.0 / (del * del * libm::pow(lam, 4.0 * sig))), lu1), (ln(3.0), lu0)]);
    let rhs_v = weighted_log([
        (ln(2.0 + mu2 * mu2 / ((del * del * del * del) * libm::pow(lam, 8.0 * sig - 4.0))), lu1),
        (ln(1.5 * mu2 * mu2 / (del * del * libm::pow(lam, 4.0 * sig - 4.0))), lu0),
    ]);
    for s in &states {
        audits.push(BoundAudit::new("sup_lemma.displacement", s.t, log_u2(s), rhs_u, &params));
        audits.push(BoundAudit::new("sup_lemma.velocity", s.t, log_v2(s), rhs_v, &params));
    }
    for w in records.windows(2) {
        audits.push(BoundAudit::new(
            "sup_lemma.kova_nonincreasing",
            w[1].t,
            w[1].log_e_kova,
            w[0].log_e_kova,
            &params,
        ));
    }

    let gap = alpha - beta;
    let abs_ok = lam >= 1.0 && sig >= 0.5 && 1.0 - sig <= gap && gap <= sig;
    params.insert("alpha".to_string(), alpha);
    params.insert("beta".to_string(), beta);
    let (l4a, l4b) = (4.0 * alpha * ln(lam), 4.0 * beta * ln(lam));
    let lhs_w = |s: &ModeState| weighted_log([(l4b, log_v2(s)), (l4a, log_u2(s))]);
    if abs_ok {
        let rhs = weighted_log([
            (ln(2.0 + 2.0 / (del * del) + mu2 * mu2 / (del * del * del * del)) + l4b, lu1),
            (ln(3.0 * (1.0 + mu2 * mu2 / (2.0 * del * del))) + l4a, lu0),
        ]);
        for s in &states {
            audits.push(BoundAudit::new("sup_lemma.weighted", s.t, lhs_w(s), rhs, &params));
        }
    } else {
        skipped.push(SkippedAudit {
            bound: "sup_lemma.weighted".to_string(),
            reason: "needs lambda >= 1, sigma >= 1/2 and 1 - sigma <= alpha - beta <= sigma".to_string(),
            gap: None,
        });
    }

    let r_used = match r {
        Some(r) if super_r_feasible(p, mu2, r) && r > 0.0 => Some(r),
        Some(r) => {
            skipped.push(SkippedAudit {
                bound: "sup_lemma.gevrey_decay".to_string(),
                reason: "supplied decay rate violates the rate constraints".to_string(),
                gap: Some(r),
            });
            None
        }
        None => super_r_star(p, mu2),
    };
    match (abs_ok, r_used) {
        (true, Some(r)) => {
            params.insert("r".to_string(), r);
            let base = weighted_log([
                (ln(2.0 * (1.0 + 2.0 * mu2 * mu2 / (del * del * del * del) + 1.0 / (del * del))) + l4b, lu1),
                (ln(3.0 * (1.0 + 2.0 * mu2 * mu2 / (del * del))) + l4a, lu0),
            ]);
            let rate = 2.0 * r * libm::pow(lam, 2.0 * (1.0 - sig));
            for s in &states {
                let rhs = base - rate * c.integral(0.0, s.t);
                audits.push(BoundAudit::new("sup_lemma.gevrey_decay", s.t, lhs_w(s), rhs, &params));
            }
        }
        (true, None) if r.is_none() => skipped.push(SkippedAudit {
            bound: "sup_lemma.gevrey_decay".to_string(),
            reason: "no positive decay rate satisfies the rate constraints".to_string(),
            gap: Some(4.0 * del * del * g - mu2),
        }),
        (false, Some(_)) => skipped.push(SkippedAudit {
            bound: "sup_lemma.gevrey_decay".to_string(),
            reason: "requires the weighted-bound hypotheses".to_string(),
            gap: None,
        }),
        _ => {}
    }
    Ok(LemmaReport {
        lemma: "sup".to_string(),
        r: r_used,
        audits,
        skipped,
    })
}

/// Subcritical lemma: the energy bound and, when a rate exists, its
/// exponentially decaying version.
pub fn verify_sub_lemma(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    horizon: f64,
    r: Option<f64>,
    opts: &VerifierOptions,
) -> Result<LemmaReport, VerifyError> {
    let (lam, sig, del) = (p.lambda, p.sigma, p.delta);
    if !(c.mu1 > 0.0) {
        return Err(precondition("strict_hyperbolicity", c.mu1, 0.0));
    }
    if !(0.0..=0.5).contains(&sig) {
        return Err(precondition("sub_sigma_range", sig, 0.5));
    }
    let l = big_lambda(p, c).ok_or_else(|| precondition("modulus_declared", 0.0, 0.0))?;
    let (mu1, mu2) = (c.mu1, c.mu2);
    let gap0 = sub_threshold_gap(p, mu1, l);
    if gap0 < 0.0 {
        return Err(precondition("sub_threshold", 4.0 * del * del * mu1, l * l + 2.0 * del * l));
    }
    let times = sample_times(horizon, opts.samples, c);
    let (states, _) = run_mode(p, c, init, &times, &opts.solver)?;
    let ln = libm::log;
    let (lu0, lu1) = (log_sq(init.0), log_sq(init.1));
    let mut params = base_params(p, c);
    params.insert("big_lambda".to_string(), l);
    let lhs = |s: &ModeState| weighted_log([(0.0, log_v2(s)), (ln(2.0 * lam * lam * mu1), log_u2(s))]);
    let rhs = weighted_log([
        (ln(4.0), lu1),
        (ln(2.0 * (3.0 * del * del * libm::pow(lam, 4.0 * sig) + lam * lam * mu2)), lu0),
    ]);
    let mut audits: Vec<BoundAudit> = states
        .iter()
        .map(|s| BoundAudit::new("sub_lemma.energy", s.t, lhs(s), rhs, &params))
        .collect();
    let mut skipped = Vec::new();
    let r_used = if lam < 1.0 {
        skipped.push(SkippedAudit {
            bound: "sub_lemma.decay".to_string(),
            reason: "needs lambda >= 1".to_string(),
            gap: None,
        });
        None
    } else {
        match r {
            Some(r) if r > 0.0 && r < del && sub_decay_gap(p, mu1, mu2, l, r) >= 0.0 => Some(r),
            Some(r) => {
                skipped.push(SkippedAudit {
                    bound: "sub_lemma.decay".to_string(),
                    reason: "supplied decay rate violates the rate inequality".to_string(),
                    gap: Some(sub_decay_gap(p, mu1, mu2, l, r)),
                });
                None
            }
            None => {
                let found = sub_r_star(p, mu1, mu2, l);
                if found.is_none() {
                    skipped.push(SkippedAudit {
                        bound: "sub_lemma.decay".to_string(),
                        reason: "no rate in (0, delta) satisfies the rate inequality".to_string(),
                        gap: Some(sub_decay_gap(p, mu1, mu2, l, 0.0)),
                    });
                }
                found
            }
        }
    };
    if let Some(r) = r_used {
        params.insert("r".to_string(), r);
        let rate = 2.0 * r * libm::pow(lam, 2.0 * sig);
        for s in &states {
            audits.push(BoundAudit::new("sub_lemma.decay", s.t, lhs(s), rhs - rate * s.t, &params));
        }
    }
    Ok(LemmaReport {
        lemma: "sub".to_string(),
        r: r_used,
        audits,
        skipped,
    })
}

/// Low-frequency envelope `u'^2 + lambda^2 u^2 <= (u1^2 + lambda^2 u0^2)
/// exp(lambda t + lambda int_0^t |c|)`.
pub fn verify_low_frequency(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    horizon: f64,
    opts: &VerifierOptions,
) -> Result<Vec<BoundAudit>, VerifyError> {
    let times = sample_times(horizon, opts.samples, c);
    let (_, records) = run_mode(p, c, init, &times, &opts.solver)?;
    let lam = p.lambda;
    let e0 = weighted_log([(0.0, log_sq(init.1)), (2.0 * libm::log(lam), log_sq(init.0))]);
    let params = base_params(p, c);
    Ok(records
        .iter()
        .map(|r| {
            let rhs = e0 + lam * r.t + lam * c.abs_integral(0.0, r.t);
            BoundAudit::new("low_frequency.envelope", r.t, r.log_e_classic, rhs, &params)
        })
        .collect())
}

/// At `sigma = 1/2` both lemmas apply under different hypotheses; runs
/// whichever of the two has its preconditions met.
pub fn verify_half_sigma(
    p: &ModeParams,
    c: &Coefficient,
    init: (f64, f64),
    horizon: f64,
    opts: &VerifierOptions,
) -> (Result<LemmaReport, VerifyError>, Result<LemmaReport, VerifyError>) {
    let q = ModeParams { sigma: 0.5, ..*p };
    (
        verify_sup_lemma(&q, c, init, horizon, 0.5, 0.0, None, opts),
        verify_sub_lemma(&q, c, init, horizon, None, opts),
    )
}

/// One frequency of the exploration run for a coefficient whose
/// `lambda^(1 - 2 sigma) omega(1 / lambda)` stays bounded but exceeds the
/// subcritical threshold. No bound is claimed; the record is descriptive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalProbe {
    pub lambda: f64,
    pub big_lambda: f64,
    /// `4 delta^2 mu1 - L^2 - 2 delta L`; negative outside the proved range.
    pub threshold_gap: f64,
    /// `ln E(T) - ln E(0)`.
    pub log_energy_change: f64,
}

/// Integrates `(1, 0)` data at each frequency and reports the energy
/// change next to the threshold gap.
pub fn explore_critical(
    sigma: f64,
    delta: f64,
    c: &Coefficient,
    lambdas: &[f64],
    horizon: f64,
    solver: &SolverOptions,
) -> Result<Vec<CriticalProbe>, VerifyError> {
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let p = ModeParams::new(lambda, sigma, delta)?;
        let l = big_lambda(&p, c).ok_or_else(|| precondition("modulus_declared", 0.0, 0.0))?;
        let (_, records) = run_mode(&p, c, (1.0, 0.0), &[0.0, horizon], solver)?;
        let first = records.first().map_or(0.0, |r| r.log_e_classic);
        let last = records.last().map_or(0.0, |r| r.log_e_classic);
        out.push(CriticalProbe {
            lambda,
            big_lambda: l,
            threshold_gap: sub_threshold_gap(&p, c.mu1, l),
            log_energy_change: last - first,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    SupReg,
    SubReg,
    SupGevrey,
    SubGevrey,
}

impl Theorem {
    pub fn name(&self) -> &'static str {
        match self {
            Theorem::SupReg => "family.sup_reg",
            Theorem::SubReg => "family.sub_reg",
            Theorem::SupGevrey => "family.sup_gevrey",
            Theorem::SubGevrey => "family.sub_gevrey",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub sigma: f64,
    pub delta: f64,
    /// Sobolev exponents of the data (`u0` in `D(A^alpha)`, `u1` in
    /// `D(A^beta)`); used by the supercritical theorems.
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
    /// Number of sample times (log-spaced, plus `t = 0`).
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub t: f64,
    /// Squared norm of `u(t)` in the theorem's space, as a log.
    pub log_norm_u: f64,
    /// Squared norm of `u'(t)`, as a log.
    pub log_norm_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub theorem: Theorem,
    pub nu: f64,
    pub high_modes: usize,
    pub r: Option<f64>,
    pub constant: f64,
    pub audits: Vec<BoundAudit>,
    pub norms: Vec<NormSample>,
}

impl FamilyReport {
    pub fn worst_margin(&self) -> f64 {
        self.audits.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Summed bound over all modes with `lambda_k >= nu`.
pub fn verify_family<M: ParallelMap>(
    theorem: Theorem,
    c: &Coefficient,
    data: (&ModeVector, &ModeVector),
    nu: f64,
    fp: &FamilyParams,
    solver: &SolverOptions,
    exec: &M,
) -> Result<FamilyReport, VerifyError> {
    let (u0v, u1v) = data;
    if u0v.components.len() != u1v.components.len()
        || u0v.components.iter().zip(&u1v.components).any(|(a, b)| a.0 != b.0)
    {
        return Err(VerifyError::DataMismatch);
    }
    let (sig, del, mu1, mu2) = (fp.sigma, fp.delta, c.mu1, c.mu2);
    let high: Vec<(f64, f64, f64)> = u0v
        .components
        .iter()
        .zip(&u1v.components)
        .filter(|(a, _)| a.0 >= nu)
        .map(|(a, b)| (a.0, a.1, b.1))
        .collect();
    let mp = |lambda: f64| ModeParams {
        lambda,
        sigma: sig,
        delta: del,
    };
    let threshold = |name: &str, lambda: f64| VerifyError::Threshold {
        name: name.to_string(),
        nu,
        lambda,
    };
    if nu < 1.0 {
        return Err(threshold("nu_at_least_one", nu));
    }
    // Hypotheses and rate.
    let mut r = None;
    match theorem {
        Theorem::SupReg | Theorem::SupGevrey => {
            if c.mu1 < 0.0 {
                return Err(precondition("degenerate_hyperbolicity", c.mu1, 0.0));
            }
            let ok = sig > 0.5 || (sig == 0.5 && 4.0 * del * del >= mu2);
            if !ok {
                return Err(precondition("supercritical_regime", sig, 0.5));
            }
            if !super_threshold_holds(&mp(nu), mu2) {
                return Err(threshold("super_threshold", nu));
            }
            if let Some(&(l, _, _)) = high.iter().find(|&&(l, _, _)| !super_threshold_holds(&mp(l), mu2)) {
                return Err(threshold("super_threshold", l));
            }
            if theorem == Theorem::SupGevrey {
                let gev = (sig > 0.5 && sig < 1.0) || (sig == 0.5 && 4.0 * del * del > mu2);
                if !gev {
                    return Err(precondition("gevrey_supercritical_regime", sig, 1.0));
                }
                let mut rr = f64::INFINITY;
                for &(l, _, _) in &high {
                    match super_r_star(&mp(l), mu2) {
                        Some(x) => rr = rr.min(x),
                        None => return Err(threshold("super_rate", l)),
                    }
                }
                r = rr.is_finite().then_some(rr);
            }
        }
        Theorem::SubReg | Theorem::SubGevrey => {
            if !(mu1 > 0.0) {
                return Err(precondition("strict_hyperbolicity", mu1, 0.0));
            }
            let range_ok = if theorem == Theorem::SubReg {
                (0.0..=0.5).contains(&sig)
            } else {
                sig > 0.0 && sig <= 0.5
            };
            if !range_ok {
                return Err(precondition("sub_sigma_range", sig, 0.5));
            }
            for &(l, _, _) in &high {
                let bl = big_lambda(&mp(l), c).ok_or_else(|| precondition("modulus_declared", 0.0, 0.0))?;
                if sub_threshold_gap(&mp(l), mu1, bl) < 0.0 {
                    return Err(threshold("sub_threshold", l));
                }
                if theorem == Theorem::SubGevrey {
                    match sub_r_star(&mp(l), mu1, mu2, bl) {
                        Some(x) => r = Some(r.map_or(x, |y: f64| y.min(x))),
                        None => return Err(threshold("sub_rate", l)),
                    }
                }
            }
        }
    }

    let mut times = alloc::vec![0.0];
    times.extend(log_space(1e-3 * fp.horizon, fp.horizon, fp.samples.max(2) - 1));
    let opts = SolverOptions {
        sample_times: times.clone(),
        ..solver.clone()
    };
    let runs: Vec<Result<Vec<ModeState>, SolverError>> = exec.map(&high, |&(l, u0, u1)| {
        let tr = integrate(&mp(l), c, (u0, u1), (0.0, fp.horizon), &opts)?;
        // Keep exactly the requested sample times.
        Ok(tr
            .states
            .into_iter()
            .filter(|s| times.binary_search_by(|x| x.total_cmp(&s.t)).is_ok())
            .collect())
    });
    let runs: Vec<Vec<ModeState>> = runs.into_iter().collect::<Result<_, _>>()?;

    let ln = libm::log;
    let (a, b) = (fp.alpha, fp.beta);
    let w = |g: f64| 1.0f64.max(libm::exp2(4.0 * g));
    let constant = match theorem {
        Theorem::SupReg => (2.0 + 2.0 / (del * del) + mu2 * mu2 / (del * del * del * del)).max(3.0 * (1.0 + mu2 * mu2 / (2.0 * del * del))),
        Theorem::SubReg => (4.0f64).max(2.0 * (3.0 * del * del + mu2)),
        Theorem::SupGevrey => {
            let k1 = 2.0 * (1.0 + 2.0 * mu2 * mu2 / (del * del * del * del) + 1.0 / (del * del));
            let k2 = 3.0 * (1.0 + 2.0 * mu2 * mu2 / (del * del));
            k1.max(k2) * w(a).max(w(b))
        }
        Theorem::SubGevrey => (1.0f64).max(2.0 / mu1) * (4.0f64).max(2.0 * (3.0 * del * del + mu2)),
    };
    let rhs = match theorem {
        Theorem::SupReg => log_sum_exp(high.iter().flat_map(|&(l, u0, u1)| {
            [
                ln(2.0 + 2.0 / (del * del) + mu2 * mu2 / (del * del * del * del)) + 4.0 * b * ln(l) + log_sq(u1),
                ln(3.0 * (1.0 + mu2 * mu2 / (2.0 * del * del))) + 4.0 * a * ln(l) + log_sq(u0),
            ]
        })),
        Theorem::SubReg => log_sum_exp(high.iter().flat_map(|&(l, u0, u1)| {
            [ln(4.0) + log_sq(u1), ln(2.0 * (3.0 * del * del + mu2)) + 2.0 * ln(l) + log_sq(u0)]
        })),
        Theorem::SupGevrey => {
            ln(constant)
                + log_sum_exp(
                    high.iter()
                        .flat_map(|&(l, u0, u1)| [4.0 * b * ln(l) + log_sq(u1), 4.0 * a * ln(l) + log_sq(u0)]),
                )
        }
        Theorem::SubGevrey => {
            ln(constant) + log_sum_exp(high.iter().flat_map(|&(l, u0, u1)| [log_sq(u1), 2.0 * ln(l) + log_sq(u0)]))
        }
    };

    let mut params = BTreeMap::new();
    params.insert("sigma".to_string(), sig);
    params.insert("delta".to_string(), del);
    params.insert("nu".to_string(), nu);
    params.insert("mu1".to_string(), mu1);
    params.insert("mu2".to_string(), mu2);
    if let Some(r) = r {
        params.insert("r".to_string(), r);
    }
    let mut audits = Vec::new();
    let mut norms = Vec::new();
    let n_t = runs.first().map_or(0, |v| v.len());
    for i in 0..n_t {
        let t = runs[0][i].t;
        let states: Vec<&ModeState> = runs.iter().map(|v| &v[i]).collect();
        let (lhs, norm_u, norm_v) = match theorem {
            Theorem::SupReg => {
                let lhs = log_sum_exp(high.iter().zip(&states).flat_map(|(&(l, _, _), s)| {
                    [4.0 * b * ln(l) + log_v2(s), 4.0 * a * ln(l) + log_u2(s)]
                }));
                let nu_ = log_sum_exp(high.iter().zip(&states).map(|(&(l, _, _), s)| 4.0 * a * ln(l) + log_u2(s)));
                let nv_ = log_sum_exp(high.iter().zip(&states).map(|(&(l, _, _), s)| 4.0 * b * ln(l) + log_v2(s)));
                (lhs, nu_, nv_)
            }
            Theorem::SubReg => {
                let lhs = log_sum_exp(
                    high.iter()
                        .zip(&states)
                        .flat_map(|(&(l, _, _), s)| [log_v2(s), ln(2.0 * mu1 * l * l) + log_u2(s)]),
                );
                let nu_ = log_sum_exp(high.iter().zip(&states).map(|(&(l, _, _), s)| 2.0 * ln(l) + log_u2(s)));
                let nv_ = log_sum_exp(states.iter().map(|s| log_v2(s)));
                (lhs, nu_, nv_)
            }
            Theorem::SupGevrey | Theorem::SubGevrey => {
                let (phi, radius, su, sv) = if theorem == Theorem::SupGevrey {
                    (WeightFunction::power(2.0 * (1.0 - sig)), r.unwrap_or(0.0) * c.integral(0.0, t), a, b)
                } else {
                    (WeightFunction::power(2.0 * sig), r.unwrap_or(0.0) * t, 0.5, 0.0)
                };
                let nu_ = gevrey_log_norm(&high, &states, &phi, radius, su, false);
                let nv_ = gevrey_log_norm(&high, &states, &phi, radius, sv, true);
                (crate::math::log_add(nu_, nv_), nu_, nv_)
            }
        };
        audits.push(BoundAudit::new(theorem.name(), t, lhs, rhs, &params));
        norms.push(NormSample {
            t,
            log_norm_u: norm_u,
            log_norm_v: norm_v,
        });
    }
    Ok(FamilyReport {
        theorem,
        nu,
        high_modes: high.len(),
        r,
        constant,
        audits,
        norms,
    })
}

/// `ln ||x||^2_{phi, s, radius}` of the mode values, via [`norm_squared`]
/// on direction-scaled components when they fit in `f64` and directly in
/// log space otherwise.
fn gevrey_log_norm(
    high: &[(f64, f64, f64)],
    states: &[&ModeState],
    phi: &WeightFunction,
    radius: f64,
    s: f64,
    velocity: bool,
) -> f64 {
    let norm = WeightedNorm::gevrey(phi.clone(), radius, s);
    let logs: Vec<f64> = states.iter().map(|st| if velocity { log_v2(st) } else { log_u2(st) }).collect();
    let finite_max = logs.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if finite_max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Factor out the largest amplitude so the components are O(1).
    let comps: Vec<(f64, f64)> = high
        .iter()
        .zip(&logs)
        .map(|(&(l, _, _), &lx)| (l, libm::exp(0.5 * (lx - finite_max))))
        .collect();
    match norm_squared(&ModeVector::new(comps), &norm) {
        Ok(v) => v.log_value + finite_max,
        Err(_) => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::spaces::ContinuityModulus;

    #[test]
    fn sup_example_passes() {
        let p = ModeParams::new(4.0, 0.75, 1.0).unwrap();
        let rep = verify_sup_lemma(&p, &Coefficient::constant(1.0), (1.0, 1.0), 10.0, 0.75, 0.25, None, &VerifierOptions::default())
            .unwrap();
        assert!(rep.passed(1e-7), "{}", rep.worst_margin());
        assert!(rep.audits.iter().any(|a| a.bound == "sup_lemma.weighted"));
        assert!(rep.audits.iter().any(|a| a.bound == "sup_lemma.gevrey_decay"));
    }

    #[test]
    fn zero_data_has_infinite_margins() {
        let p = ModeParams::new(4.0, 0.75, 1.0).unwrap();
        let rep =
            verify_sup_lemma(&p, &Coefficient::constant(1.0), (0.0, 0.0), 1.0, 0.75, 0.25, None, &VerifierOptions::default())
                .unwrap();
        assert!(rep.audits.iter().all(|a| a.lhs == f64::NEG_INFINITY));
    }

    #[test]
    fn sup_threshold_rejected() {
        let p = ModeParams::new(1.0, 0.75, 0.1).unwrap();
        let e = verify_sup_lemma(&p, &Coefficient::constant(1.0), (1.0, 0.0), 1.0, 0.75, 0.25, None, &VerifierOptions::default());
        assert!(matches!(e, Err(VerifyError::Precondition { ref name, .. }) if name == "super_threshold"));
    }

    #[test]
    fn sub_example_passes() {
        let p = ModeParams::new(9.0, 0.25, 1.0).unwrap();
        let c = Coefficient::constant(1.0).with_modulus(ContinuityModulus::Lipschitz { l: 1e-12 });
        let rep = verify_sub_lemma(&p, &c, (1.0, 0.0), 50.0, None, &VerifierOptions::default()).unwrap();
        assert!(rep.passed(1e-7), "{}", rep.worst_margin());
        assert!(rep.r.is_some());
    }

    #[test]
    fn r_star_closed_form() {
        let p = ModeParams::new(4.0, 0.75, 1.0).unwrap();
        let mu2 = 1.0;
        let g = libm::pow(4.0, 1.0);
        let expect = (0.5f64).min(g / mu2).min((4.0 * g / mu2 - 1.0) / 2.0);
        let r = super_r_star(&p, mu2).unwrap();
        assert!(r <= expect && (expect - r) / expect < 1e-9);
    }

    #[test]
    fn single_mode_family_is_the_lemma() {
        let c = Coefficient::constant(1.0);
        let u0 = ModeVector::new(alloc::vec![(4.0, 1.0)]);
        let u1 = ModeVector::new(alloc::vec![(4.0, 0.5)]);
        let fp = FamilyParams {
            sigma: 0.75,
            delta: 1.0,
            alpha: 0.75,
            beta: 0.25,
            horizon: 2.0,
            samples: 20,
        };
        let fam = verify_family(Theorem::SupReg, &c, (&u0, &u1), 1.0, &fp, &SolverOptions::default(), &Sequential).unwrap();
        let p = ModeParams::new(4.0, 0.75, 1.0).unwrap();
        let lem = verify_sup_lemma(&p, &c, (1.0, 0.5), 2.0, 0.75, 0.25, None, &VerifierOptions::default()).unwrap();
        let w: Vec<&BoundAudit> = lem.audits.iter().filter(|a| a.bound == "sup_lemma.weighted").collect();
        assert!((fam.audits[0].rhs - w[0].rhs).abs() < 1e-12);
        assert!((fam.audits[0].lhs - w[0].lhs).abs() < 1e-12);
    }
}
