//! Resonant counterexample: a coefficient `c(t)`, continuous with a given
//! modulus, for which a Gevrey-small initial datum leaves every
//! ultradistribution class instantly.
//!
//! Frequencies reach `2^(10^15)`, so the construction is carried out in
//! [`Xf`] and each mode is propagated in its own scaled time
//! `tau = lambda_k t`, where the equation becomes
//! `U'' + 2 delta lambda_k^(2 sigma - 1) U' + c(tau / lambda_k) U = 0`.
//!
//! Pipeline: [`select_subsequence`] picks frequencies greedily,
//! [`find_k0`] locates the first certified index, [`build`] assembles the
//! piece table and [`certify`] propagates every mode and tests the two
//! series.

mod coefficient;
mod ledger;
mod propagate;

pub use coefficient::{
    window_excess, window_slope, CoefficientAudit, DgcsCoefficient, OmegaAudit, OmegaCategory, Piece, PieceKind,
};
pub use ledger::{derived_conditions, knot_sup, mode_conditions, pair_conditions, window_conditions, Inequality};
pub use propagate::{certify, CertifyOptions, Defect, DivergenceReport, ModeCertificate, SeriesCheck};

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mode_solver::SolverError;
use crate::spaces::{ContinuityModulus, SpectralSequence, WeightFunction};
use crate::Xf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DgcsError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("precheck `{name}` failed: {detail}")]
    Precheck { name: String, detail: String },
    #[error("base pool gives only {picks} usable frequencies")]
    TooFewPicks { picks: usize },
    #[error("no admissible starting index: `{failing}` fails at k = {k}")]
    NoAdmissibleK0 { failing: String, k: usize },
    #[error("coefficient jumps by {gap} at piece {index}")]
    JunctionMismatch { index: usize, gap: f64 },
    #[error("piece {piece} cannot be resolved in the scaled time of mode {k}")]
    Unresolvable { k: usize, piece: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Candidate frequencies for the greedy selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasePool {
    /// `2^j` for `j >= start`; searched by galloping, so picks may be
    /// astronomically large.
    PowersOfTwo { start: i64 },
    Explicit { lambdas: SpectralSequence },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgcsInputs {
    pub sigma: f64,
    pub delta: f64,
    pub omega: ContinuityModulus,
    pub phi: WeightFunction,
    pub psi: WeightFunction,
    pub pool: BasePool,
    /// Index of the last pick; picks are `lambda_0 .. lambda_{k_max}`.
    pub k_max: usize,
}

impl DgcsInputs {
    /// `sigma = 1/4`, `omega(x) = x^(1/4)`, `phi = psi = x^(5/8)`,
    /// `delta = 1`, pool `2^j`.
    pub fn preset() -> DgcsInputs {
        DgcsInputs {
            sigma: 0.25,
            delta: 1.0,
            omega: ContinuityModulus::Hoelder { alpha: 0.25, m: 1.0 },
            phi: WeightFunction::power(0.625),
            psi: WeightFunction::power(0.625),
            pool: BasePool::PowersOfTwo { start: 0 },
            k_max: 13,
        }
    }

    /// Range checks plus the two divergence prechecks: `omega(e) /
    /// e^(1 - 2 sigma)` and `x omega(1/x) / phi(x)` (and `/ psi`) must grow
    /// along a grid running off to the limit.
    pub fn validate(&self) -> Result<(), DgcsError> {
        if !(0.0..0.5).contains(&self.sigma) {
            return Err(DgcsError::BadInput("sigma must lie in [0, 1/2)".to_string()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(DgcsError::BadInput("delta must be positive".to_string()));
        }
        if self.k_max < 1 {
            return Err(DgcsError::BadInput("k_max must be at least 1".to_string()));
        }
        let grid: Vec<i64> = (1..=12).map(|i| 4i64.pow(i)).collect();
        let modulus: Vec<Xf> = grid
            .iter()
            .map(|&n| {
                let e = Xf::pow2(-n);
                self.omega.eval_xf(e) / e.powf(1.0 - 2.0 * self.sigma)
            })
            .collect();
        check_growth("modulus_beats_damping", &modulus)?;
        for (name, w) in [("modulus_beats_phi", &self.phi), ("modulus_beats_psi", &self.psi)] {
            let r: Vec<Xf> = grid
                .iter()
                .map(|&n| {
                    let x = Xf::pow2(n);
                    x * self.omega.eval_xf(Xf::ONE / x) / w.eval_xf(x)
                })
                .collect();
            check_growth(name, &r)?;
        }
        Ok(())
    }
}

fn check_growth(name: &str, v: &[Xf]) -> Result<(), DgcsError> {
    let increasing = v.windows(2).all(|w| w[1] > w[0]);
    let first = v[0];
    let last = v[v.len() - 1];
    if increasing && last > first * 10.0 {
        Ok(())
    } else {
        Err(DgcsError::Precheck {
            name: name.to_string(),
            detail: alloc::format!("ratio goes from {first} to {last} along the grid"),
        })
    }
}

/// Quantities attached to one picked frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub index: usize,
    /// Exponent when the pick is `2^j`.
    pub j: Option<i64>,
    pub lambda: Xf,
    /// `omega(1 / lambda)`
    pub omega: Xf,
    pub phi: Xf,
    pub psi: Xf,
    /// `lambda^(2 sigma) + phi + psi`
    pub weights: Xf,
    /// `(weights omega / lambda)^(1/2)`
    pub eps: Xf,
}

impl Scale {
    pub fn new(inp: &DgcsInputs, index: usize, j: Option<i64>, lambda: Xf) -> Scale {
        let omega = inp.omega.eval_xf(Xf::ONE / lambda);
        let phi = inp.phi.eval_xf(lambda);
        let psi = inp.psi.eval_xf(lambda);
        let weights = lambda.powf(2.0 * inp.sigma) + phi + psi;
        let eps = (weights * omega / lambda).sqrt();
        Scale {
            index,
            j,
            lambda,
            omega,
            phi,
            psi,
            weights,
            eps,
        }
    }

    pub fn eps_lambda(&self) -> Xf {
        self.eps * self.lambda
    }
}

/// `t_k = 4 pi / lambda_k`.
pub fn window_start(lambda: Xf) -> Xf {
    Xf::new(4.0 * PI) / lambda
}

/// `floor(2 lambda_k / lambda_{k-1})`, the window end in units of
/// `pi / lambda_k`.
pub fn half_periods(lambda: Xf, prev: Xf) -> Xf {
    (lambda * 2.0 / prev).floor()
}

/// `s_k = pi floor(2 lambda_k / lambda_{k-1}) / lambda_k`.
pub fn window_end(lambda: Xf, prev: Xf) -> Xf {
    half_periods(lambda, prev) * PI / lambda
}

/// `ln a_k = -ln k - ln lambda_k - k phi(lambda_k)`.
pub fn log_amplitude(k: usize, lambda: Xf, phi: Xf) -> Xf {
    -(phi * k as f64) - (libm::log(k as f64) + lambda.ln())
}

/// `ln u_k'(t_k) = ln lambda_k + 8 pi eps_k - 4 pi delta lambda_k^(2 sigma - 1)`.
pub fn log_initial_velocity(lambda: Xf, eps: Xf, delta: f64, sigma: f64) -> Xf {
    eps * (8.0 * PI) - lambda.powf(2.0 * sigma - 1.0) * (4.0 * PI * delta) + lambda.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub picks: Vec<Scale>,
    /// The pool ran out before `k_max` picks.
    pub exhausted: bool,
    /// Pair conditions of every pick `k >= 1` against its predecessor.
    pub ledger: Vec<Inequality>,
}

/// Greedy scan: `lambda_0` is the least pool element, then each pick is the
/// least element above its predecessor satisfying [`pair_conditions`].
/// Powers of two are searched by galloping and bisection on the exponent,
/// which assumes the conditions stay true once they hold.
pub fn select_subsequence(inp: &DgcsInputs) -> Result<Selection, DgcsError> {
    let mut picks: Vec<Scale> = Vec::new();
    let mut ledger = Vec::new();
    let mut exhausted = false;
    match &inp.pool {
        BasePool::PowersOfTwo { start } => {
            picks.push(Scale::new(inp, 0, Some(*start), Xf::pow2(*start)));
            for k in 1..=inp.k_max {
                let prev = picks[k - 1].clone();
                let jp = prev.j.expect("powers of two carry exponents");
                let ok = |j: i64| {
                    let cur = Scale::new(inp, k, Some(j), Xf::pow2(j));
                    pair_conditions(inp, k, &prev, &cur).iter().all(Inequality::holds)
                };
                let mut lo = jp;
                let mut step = 1i64;
                let hi = loop {
                    if ok(jp + step) {
                        break Some(jp + step);
                    }
                    lo = jp + step;
                    if step > 1i64 << 56 {
                        break None;
                    }
                    step *= 2;
                };
                let Some(mut hi) = hi else {
                    exhausted = true;
                    break;
                };
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if ok(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let cur = Scale::new(inp, k, Some(hi), Xf::pow2(hi));
                ledger.extend(pair_conditions(inp, k, &prev, &cur));
                picks.push(cur);
            }
        }
        BasePool::Explicit { lambdas } => {
            let mut pool = lambdas.lambdas().iter();
            match pool.next() {
                Some(&l) => picks.push(Scale::new(inp, 0, None, Xf::new(l))),
                None => return Err(DgcsError::TooFewPicks { picks: 0 }),
            }
            for k in 1..=inp.k_max {
                let prev = picks[k - 1].clone();
                let found = pool.by_ref().find_map(|&l| {
                    let cur = Scale::new(inp, k, None, Xf::new(l));
                    let conds = pair_conditions(inp, k, &prev, &cur);
                    conds.iter().all(Inequality::holds).then_some((cur, conds))
                });
                match found {
                    Some((cur, conds)) => {
                        ledger.extend(conds);
                        picks.push(cur);
                    }
                    None => {
                        exhausted = true;
                        break;
                    }
                }
            }
        }
    }
    if picks.len() < 2 {
        return Err(DgcsError::TooFewPicks { picks: picks.len() });
    }
    Ok(Selection {
        picks,
        exhausted,
        ledger,
    })
}

/// Least `k0 >= 1` such that [`mode_conditions`] hold for every pick from
/// `k0` on; returns it with the conditions of the certified range.
pub fn find_k0(inp: &DgcsInputs, sel: &Selection) -> Result<(usize, Vec<Inequality>), DgcsError> {
    let last = sel.picks.len() - 1;
    let per_k: Vec<Vec<Inequality>> = (1..=last)
        .map(|k| mode_conditions(inp, k, &sel.picks[k - 1], &sel.picks[k], window_start(sel.picks[k].lambda)))
        .collect();
    let mut k0 = last + 1;
    for k in (1..=last).rev() {
        if per_k[k - 1].iter().all(Inequality::holds) {
            k0 = k;
        } else {
            break;
        }
    }
    if k0 > last {
        let failing = per_k[last - 1]
            .iter()
            .find(|q| !q.holds())
            .map(|q| q.name.clone())
            .unwrap_or_default();
        return Err(DgcsError::NoAdmissibleK0 { failing, k: last });
    }
    let ledger = per_k.into_iter().skip(k0 - 1).flatten().collect();
    Ok((k0, ledger))
}

/// Per-mode window data for a certified index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeWindow {
    pub k: usize,
    pub j: Option<i64>,
    pub lambda: Xf,
    pub eps: Xf,
    pub phi: Xf,
    pub psi: Xf,
    /// `t_k`
    pub start: Xf,
    /// `s_k`
    pub end: Xf,
    /// `floor(2 lambda_k / lambda_{k-1})`
    pub half_periods: Xf,
    /// `delta^2 / lambda_k^(2 - 4 sigma)`, the value of `c - 1` at both
    /// window ends.
    pub base_excess: Xf,
    pub log_amplitude: Xf,
    pub log_initial_velocity: Xf,
    /// `eps_{k-1} lambda_{k-1}`
    pub prev_eps_lambda: Xf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgcsConstruction {
    pub inputs: DgcsInputs,
    pub picks: Vec<Scale>,
    pub exhausted: bool,
    pub k0: usize,
    pub modes: Vec<ModeWindow>,
    pub ledger: Vec<Inequality>,
    pub coefficient: DgcsCoefficient,
}

impl DgcsConstruction {
    pub fn certified_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn worst_margin(&self) -> f64 {
        self.ledger.iter().map(|q| q.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn ledger_failures(&self) -> impl Iterator<Item = &Inequality> {
        self.ledger.iter().filter(|q| !q.holds())
    }
}

/// Selection, `k0`, ledger, window data and coefficient assembly.
pub fn build(inp: &DgcsInputs) -> Result<DgcsConstruction, DgcsError> {
    inp.validate()?;
    let sel = select_subsequence(inp)?;
    let (k0, mode_ledger) = find_k0(inp, &sel)?;
    let last = sel.picks.len() - 1;
    let mut ledger = sel.ledger.clone();
    for k in 1..=last {
        let (p, c) = (&sel.picks[k - 1], &sel.picks[k]);
        ledger.extend(window_conditions(k, window_start(p.lambda), window_end(c.lambda, p.lambda)));
    }
    ledger.extend(mode_ledger);
    let mut modes = Vec::new();
    for k in k0..=last {
        let (p, c) = (&sel.picks[k - 1], &sel.picks[k]);
        let end = window_end(c.lambda, p.lambda);
        ledger.extend(derived_conditions(inp, k, p, c, end));
        modes.push(ModeWindow {
            k,
            j: c.j,
            lambda: c.lambda,
            eps: c.eps,
            phi: c.phi,
            psi: c.psi,
            start: window_start(c.lambda),
            end,
            half_periods: half_periods(c.lambda, p.lambda),
            base_excess: Xf::new(inp.delta * inp.delta) / c.lambda.powf(2.0 - 4.0 * inp.sigma),
            log_amplitude: log_amplitude(k, c.lambda, c.phi),
            log_initial_velocity: log_initial_velocity(c.lambda, c.eps, inp.delta, inp.sigma),
            prev_eps_lambda: p.eps_lambda(),
        });
    }
    let coefficient = DgcsCoefficient::assemble(inp, &modes);
    if let Some((index, gap)) = coefficient
        .junction_gaps()
        .into_iter()
        .enumerate()
        .find(|&(_, g)| !(g <= 1e-12))
    {
        return Err(DgcsError::JunctionMismatch { index, gap });
    }
    Ok(DgcsConstruction {
        inputs: inp.clone(),
        picks: sel.picks,
        exhausted: sel.exhausted,
        k0,
        modes,
        ledger,
        coefficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_picks() {
        let sel = select_subsequence(&DgcsInputs::preset()).unwrap();
        let js: Vec<i64> = sel.picks.iter().map(|s| s.j.unwrap()).collect();
        assert_eq!(&js[..4], &[0, 3, 62, 1015]);
        assert!(sel.ledger.iter().all(Inequality::holds));
        for w in sel.picks.windows(2) {
            assert!(w[1].lambda > w[0].lambda * 4.0);
        }
    }

    #[test]
    fn preset_builds_with_k0_three() {
        let c = build(&DgcsInputs::preset()).unwrap();
        assert_eq!(c.k0, 3);
        assert_eq!(c.certified_modes(), 11);
        assert!(c.worst_margin() >= 0.0, "{:?}", c.ledger_failures().next());
    }

    #[test]
    fn lipschitz_at_sigma_zero_is_rejected() {
        let mut inp = DgcsInputs::preset();
        inp.sigma = 0.0;
        inp.omega = ContinuityModulus::Lipschitz { l: 1.0 };
        assert!(matches!(inp.validate(), Err(DgcsError::Precheck { ref name, .. }) if name == "modulus_beats_damping"));
    }

    #[test]
    fn amplitude_formula() {
        let la = log_amplitude(1, Xf::new(10.0), Xf::new(10f64.powf(0.625)));
        let expect = -libm::log(10.0) - 10f64.powf(0.625);
        assert!((la.to_f64() - expect).abs() < 1e-12);
    }

    #[test]
    fn initial_velocity_formula() {
        let (l, e) = (Xf::new(1e6), Xf::new(0.01));
        let got = log_initial_velocity(l, e, 1.0, 0.25).to_f64();
        let expect = libm::log(1e6) + (2.0 * 0.01 * 1e6 - 1e6f64.powf(0.5)) * 4.0 * PI / 1e6;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn explicit_pool_exhausts() {
        let mut inp = DgcsInputs::preset();
        inp.pool = BasePool::Explicit {
            lambdas: SpectralSequence::new(alloc::vec![1.0, 8.0, 16.0]).unwrap(),
        };
        let sel = select_subsequence(&inp).unwrap();
        assert!(sel.exhausted);
        assert_eq!(sel.picks.len(), 2);
    }
}
