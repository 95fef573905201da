//! Executes a resolved scenario: JSON report, CSV/JSONL traces and the list
//! of failed unconditional audits.

use std::collections::BTreeMap;

use anyhow::anyhow;
use hypdamp_core::coefficients::Coefficient;
use hypdamp_core::dgcs_builder::{build, certify, DgcsConstruction, DgcsError, DivergenceReport};
use hypdamp_core::exec::ParallelMap;
use hypdamp_core::math::lin_space;
use hypdamp_core::mode_solver::{integrate, ModeParams, SolverOptions};
use hypdamp_core::phase_diagram::{growth_rate, sweep, CellVerdict, Classification, ProbeKind, SweepConfig};
use hypdamp_core::spaces::{ModeVector, SpectralSequence};
use hypdamp_core::theorem_verifier::{
    explore_critical, verify_family, verify_half_sigma, verify_low_frequency, verify_sub_lemma, verify_sup_lemma,
    BoundAudit, FamilyParams, FamilyReport, LemmaReport, VerifyError,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::{DgcsParams, LemmaChoice, Params, Scenario, SimulateParams, VerifyParams};

#[derive(Debug, Error)]
pub enum RunError {
    /// Parameters rejected before or at the start of the computation.
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

fn invalid<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Invalid(e.to_string())
}

/// A file to be written into the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// A failed unconditional audit, named by its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub bound: String,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    /// `report.json`; contains no wall-clock data.
    pub report: Value,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
    /// One-line human summary.
    pub summary: String,
}

/// What to do with a `dgcs` scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DgcsMode {
    /// Follow the scenario's `certify` field.
    FromScenario,
    Build,
    Certify,
}

/// SHA-256 over the operation, seed and parameters (not the name or the
/// output directory).
pub fn config_hash(sc: &Scenario) -> String {
    let v = json!({ "seed": sc.seed, "params": &sc.params, "schema_version": sc.schema_version });
    hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("scenario serializes")))
}

pub fn run<M: ParallelMap>(sc: &Scenario, dgcs_mode: DgcsMode, exec: &M) -> Result<Outcome, RunError> {
    let (result, artifacts, failures, summary) = match &sc.params {
        Params::Simulate(p) => simulate(sc, p)?,
        Params::Verify(p) => verify(sc, p, exec)?,
        Params::Dgcs(p) => {
            let cert = match dgcs_mode {
                DgcsMode::FromScenario => p.certify,
                DgcsMode::Build => false,
                DgcsMode::Certify => true,
            };
            dgcs(sc, p, cert, exec)?
        }
        Params::Sweep(c) => run_sweep(sc, c, exec)?,
    };
    let mut params = serde_json::to_value(&sc.params).map_err(|e| anyhow!(e))?;
    let report = json!({
        "name": sc.name,
        "schema_version": sc.schema_version,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash(sc),
        "seed": sc.seed,
        "operation": sc.params.operation().as_str(),
        "parameters": params["parameters"].take(),
        "passed": failures.is_empty(),
        "failures": failures,
        "result": result,
    });
    Ok(Outcome {
        report,
        artifacts,
        failures,
        summary,
    })
}

type Parts = (Value, Vec<Artifact>, Vec<Failure>, String);

fn csv_artifact(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| anyhow!(e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| anyhow!(e))?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn json_artifact<T: Serialize>(name: &str, v: &T) -> Result<Artifact, RunError> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| anyhow!(e))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn simulate(sc: &Scenario, p: &SimulateParams) -> Result<Parts, RunError> {
    let c = p.coefficient.build(sc.seed).map_err(invalid)?;
    let mp = ModeParams::new(p.lambda, p.sigma, p.delta).map_err(invalid)?;
    let opts = SolverOptions {
        sample_times: lin_space(0.0, p.horizon, p.samples),
        ..p.solver.clone()
    };
    let tr = integrate(&mp, &c, (p.u0, p.u1), (0.0, p.horizon), &opts).map_err(|e| anyhow!(e))?;
    let rows = tr
        .states
        .iter()
        .zip(&tr.records)
        .map(|(s, r)| {
            vec![
                f(r.t),
                f(s.u_dir),
                f(s.v_dir),
                f(s.log_scale),
                f(r.log_e_classic),
                f(r.log_f_weighted),
                f(r.log_e_kova),
            ]
        })
        .collect();
    let trace = csv_artifact(
        "trace.csv",
        &["t", "u_dir", "v_dir", "log_scale", "log_e", "log_f", "log_e_kova"],
        rows,
    )?;
    let first = tr.records[0].log_e_classic;
    let last = tr.records[tr.records.len() - 1].log_e_classic;
    let g = growth_rate(&tr);
    let result = json!({
        "damping": mp.damping(),
        "accepted_steps": tr.accepted_steps,
        "rejected_steps": tr.rejected_steps,
        "log_e_initial": first,
        "log_e_final": last,
        "growth_rate": g,
        "coefficient": c,
    });
    let summary = format!(
        "simulated lambda = {} to t = {}: ln E {:.6} -> {:.6} ({} steps)",
        p.lambda, p.horizon, first, last, tr.accepted_steps
    );
    Ok((result, vec![trace], Vec::new(), summary))
}

#[derive(Serialize)]
struct ModeOutcome {
    lambda: f64,
    lemma: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<LemmaReport>,
    /// Precondition that excluded this mode; not a failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    rejected: Option<String>,
}

fn lemma_outcomes(
    p: &VerifyParams,
    c: &Coefficient,
    lambda: f64,
) -> Result<Vec<ModeOutcome>, RunError> {
    let mp = ModeParams::new(lambda, p.sigma, p.delta).map_err(invalid)?;
    let init = (p.u0, p.u1);
    let opts = &p.options;
    let choice = match p.lemma {
        LemmaChoice::Auto if p.sigma > 0.5 => LemmaChoice::Sup,
        LemmaChoice::Auto if p.sigma < 0.5 => LemmaChoice::Sub,
        LemmaChoice::Auto => LemmaChoice::HalfSigma,
        other => other,
    };
    let wrap = |lemma: &str, r: Result<LemmaReport, VerifyError>| -> Result<ModeOutcome, RunError> {
        match r {
            Ok(rep) => Ok(ModeOutcome {
                lambda,
                lemma: lemma.to_string(),
                report: Some(rep),
                rejected: None,
            }),
            Err(e @ (VerifyError::Precondition { .. } | VerifyError::Threshold { .. })) => Ok(ModeOutcome {
                lambda,
                lemma: lemma.to_string(),
                report: None,
                rejected: Some(e.to_string()),
            }),
            Err(e) => Err(anyhow!(e).into()),
        }
    };
    let h = p.horizon;
    Ok(match choice {
        LemmaChoice::Sup => vec![wrap(
            "sup_lemma",
            verify_sup_lemma(&mp, c, init, h, p.alpha, p.beta, p.r, opts),
        )?],
        LemmaChoice::Sub => vec![wrap("sub_lemma", verify_sub_lemma(&mp, c, init, h, p.r, opts))?],
        LemmaChoice::LowFrequency => {
            let r = verify_low_frequency(&mp, c, init, h, opts).map(|audits| LemmaReport {
                lemma: "low_frequency".to_string(),
                r: None,
                audits,
                skipped: Vec::new(),
            });
            vec![wrap("low_frequency", r)?]
        }
        LemmaChoice::HalfSigma => {
            let (a, b) = verify_half_sigma(&mp, c, init, h, opts);
            vec![wrap("sup_lemma", a)?, wrap("sub_lemma", b)?]
        }
        LemmaChoice::Auto | LemmaChoice::Explore => unreachable!("resolved above"),
    })
}

/// JSON number, or `"inf"`, `"-inf"`, `"nan"`.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn audit_line(lemma: &str, lambda: f64, a: &BoundAudit) -> String {
    let v = json!({
        "lemma": lemma,
        "lambda": lambda,
        "bound": a.bound,
        "t": a.t,
        "lhs": num(a.lhs),
        "rhs": num(a.rhs),
        "margin": num(a.margin),
    });
    v.to_string()
}

fn audit_failure(lambda: f64, a: &BoundAudit) -> Failure {
    Failure {
        bound: a.bound.clone(),
        detail: format!("lambda = {lambda}, t = {}, margin = {:e}", a.t, a.margin),
    }
}

fn verify<M: ParallelMap>(sc: &Scenario, p: &VerifyParams, exec: &M) -> Result<Parts, RunError> {
    let c = p.coefficient.build(sc.seed).map_err(invalid)?;
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut note = |bound: &str, m: f64| {
        let e = worst.entry(bound.to_string()).or_insert(f64::INFINITY);
        *e = e.min(m);
    };
    let mut result = serde_json::Map::new();

    if p.lemma == LemmaChoice::Explore {
        let probes = explore_critical(p.sigma, p.delta, &c, &p.lambdas, p.horizon, &p.options.solver)
            .map_err(|e| match e {
                VerifyError::Solver(s) => RunError::Other(anyhow!(s)),
                other => invalid(other),
            })?;
        result.insert("exploration".into(), json!(probes));
    } else if !p.lambdas.is_empty() {
        let per_mode = exec.map(&p.lambdas, |&l| lemma_outcomes(p, &c, l));
        let mut modes = Vec::new();
        for r in per_mode {
            modes.extend(r?);
        }
        for m in &modes {
            if let Some(rep) = &m.report {
                for a in &rep.audits {
                    lines.push(audit_line(&m.lemma, m.lambda, a));
                    note(&a.bound, a.margin);
                    if !a.passes(p.options.slack) {
                        failures.push(audit_failure(m.lambda, a));
                    }
                }
            }
        }
        let checked = modes.iter().filter(|m| m.report.is_some()).count();
        result.insert("modes_checked".into(), json!(checked));
        result.insert("modes_rejected".into(), json!(modes.len() - checked));
        result.insert("modes".into(), json!(modes));
    }

    if let Some(fam) = &p.family {
        let spec = SpectralSequence::powers_of_two(fam.k_max);
        let data = |x: f64| {
            ModeVector::new(
                spec.lambdas()
                    .iter()
                    .map(|&l| (l, x * l.powf(-fam.decay)))
                    .collect(),
            )
        };
        let (u0v, u1v) = (data(p.u0), data(p.u1));
        let fp = FamilyParams {
            sigma: p.sigma,
            delta: p.delta,
            alpha: p.alpha,
            beta: p.beta,
            horizon: p.horizon,
            samples: fam.samples,
        };
        let attempt = |nu: f64| verify_family(fam.theorem, &c, (&u0v, &u1v), nu, &fp, &p.options.solver, exec);
        let rep: FamilyReport = match fam.nu {
            Some(nu) => attempt(nu).map_err(family_err)?,
            None => {
                let mut found = None;
                for &nu in spec.lambdas() {
                    match attempt(nu) {
                        Ok(r) => {
                            found = Some(r);
                            break;
                        }
                        Err(VerifyError::Threshold { .. }) => continue,
                        Err(e) => return Err(family_err(e)),
                    }
                }
                found.ok_or_else(|| RunError::Invalid("no frequency split in the spectrum meets the threshold".into()))?
            }
        };
        for a in &rep.audits {
            lines.push(audit_line(fam.theorem.name(), rep.nu, a));
            note(&a.bound, a.margin);
            if !a.passes(fam.slack) {
                failures.push(audit_failure(rep.nu, a));
            }
        }
        result.insert("family".into(), json!(rep));
    }
    result.insert("worst_margins".into(), json!(worst));

    let mut jsonl = lines.join("\n").into_bytes();
    if !jsonl.is_empty() {
        jsonl.push(b'\n');
    }
    let summary = format!(
        "verified {} audits over {} bounds; {} failed",
        lines.len(),
        worst.len(),
        failures.len()
    );
    Ok((
        Value::Object(result),
        vec![Artifact {
            name: "audits.jsonl".into(),
            bytes: jsonl,
        }],
        failures,
        summary,
    ))
}

fn family_err(e: VerifyError) -> RunError {
    match e {
        VerifyError::Solver(s) => RunError::Other(anyhow!(s)),
        other => invalid(other),
    }
}

fn segments_csv(cons: &DgcsConstruction) -> Result<Artifact, RunError> {
    let rows = cons
        .coefficient
        .pieces
        .iter()
        .map(|pc| {
            let (kind, k) = match pc.kind {
                hypdamp_core::dgcs_builder::PieceKind::Ramp => ("ramp", String::new()),
                hypdamp_core::dgcs_builder::PieceKind::Window { k } => ("window", k.to_string()),
                hypdamp_core::dgcs_builder::PieceKind::Affine { k } => ("affine", k.to_string()),
                hypdamp_core::dgcs_builder::PieceKind::Tail => ("tail", String::new()),
            };
            vec![
                kind.to_string(),
                k,
                pc.start.to_string(),
                pc.len.map(|l| l.to_string()).unwrap_or_default(),
                pc.excess_start.to_string(),
                pc.excess_end.to_string(),
                pc.lambda.to_string(),
                pc.eps.to_string(),
                pc.periods.to_string(),
            ]
        })
        .collect();
    csv_artifact(
        "segments.csv",
        &["kind", "k", "start", "len", "excess_start", "excess_end", "lambda", "eps", "periods"],
        rows,
    )
}

fn ledger_csv(cons: &DgcsConstruction) -> Result<Artifact, RunError> {
    let rows = cons
        .ledger
        .iter()
        .map(|q| {
            vec![
                q.name.clone(),
                q.k.to_string(),
                q.lhs.to_string(),
                q.rhs.to_string(),
                f(q.margin),
                q.strict.to_string(),
                q.holds().to_string(),
            ]
        })
        .collect();
    csv_artifact("ledger.csv", &["name", "k", "lhs", "rhs", "margin", "strict", "holds"], rows)
}

fn divergence_csv(rep: &DivergenceReport) -> Result<Artifact, RunError> {
    let mut header: Vec<String> = ["k", "ln_lambda", "log_e0", "log_f_eval_lo", "log_f_eval_hi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(rep.convergent.iter().map(|s| format!("series_r_{}", s.param)));
    header.extend(rep.divergent.iter().map(|s| format!("series_big_r_{}", s.param)));
    let term = |s: &hypdamp_core::dgcs_builder::SeriesCheck, k: usize| {
        s.ks.iter()
            .position(|&x| x == k)
            .map(|i| s.terms[i].to_string())
            .unwrap_or_default()
    };
    let rows = rep
        .modes
        .iter()
        .map(|m| {
            let mut r = vec![
                m.k.to_string(),
                f(m.lambda.ln()),
                f(m.log_e0),
                m.log_f_eval_lo.to_string(),
                m.log_f_eval_hi.to_string(),
            ];
            r.extend(rep.convergent.iter().map(|s| term(s, m.k)));
            r.extend(rep.divergent.iter().map(|s| term(s, m.k)));
            r
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_artifact("divergence.csv", &h, rows)
}

fn certificate_failures(rep: &DivergenceReport) -> Vec<Failure> {
    let mut out: Vec<Failure> = rep
        .defects
        .iter()
        .map(|d| Failure {
            bound: d.check.clone(),
            detail: match d.mode {
                Some(k) => format!("mode {k}: {}", d.detail),
                None => d.detail.clone(),
            },
        })
        .collect();
    for (name, series) in [("series.convergent", &rep.convergent), ("series.divergent", &rep.divergent)] {
        for s in series.iter().filter(|s| !s.monotone) {
            out.push(Failure {
                bound: name.to_string(),
                detail: format!("not strictly monotone over the tail for parameter {}", s.param),
            });
        }
    }
    if !rep.final_term_ok {
        out.push(Failure {
            bound: "series.final_term".into(),
            detail: "last divergent term below K - 2 ln K".into(),
        });
    }
    if !rep.coefficient.strictly_hyperbolic() {
        out.push(Failure {
            bound: "coefficient.hyperbolicity".into(),
            detail: format!("range [{}, {}]", rep.coefficient.min_c, rep.coefficient.max_c),
        });
    }
    if !rep.coefficient.omega.passed() {
        out.push(Failure {
            bound: "coefficient.omega".into(),
            detail: format!("worst ratio {:e}", rep.coefficient.omega.worst_ratio),
        });
    }
    if out.is_empty() && !rep.passed() {
        out.push(Failure {
            bound: "certificate".into(),
            detail: "report did not pass".into(),
        });
    }
    out
}

fn dgcs<M: ParallelMap>(sc: &Scenario, p: &DgcsParams, cert: bool, exec: &M) -> Result<Parts, RunError> {
    let inputs = p.inputs();
    let cons = match build(&inputs) {
        Ok(c) => c,
        Err(e @ (DgcsError::BadInput(_) | DgcsError::Precheck { .. })) => return Err(invalid(e)),
        Err(DgcsError::NoAdmissibleK0 { failing, k }) => {
            let f = Failure {
                bound: failing.clone(),
                detail: format!("no admissible starting index; fails at k = {k}"),
            };
            return Ok((json!({ "built": false }), Vec::new(), vec![f], format!("construction failed: `{failing}`")));
        }
        Err(DgcsError::TooFewPicks { picks }) => {
            let f = Failure {
                bound: "base_pool".into(),
                detail: format!("only {picks} usable frequencies"),
            };
            return Ok((json!({ "built": false }), Vec::new(), vec![f], "construction failed: base pool".into()));
        }
        Err(e) => return Err(anyhow!(e).into()),
    };
    let mut failures: Vec<Failure> = cons
        .ledger_failures()
        .map(|q| Failure {
            bound: q.name.clone(),
            detail: format!("k = {}: {} vs {}", q.k, q.lhs, q.rhs),
        })
        .collect();
    let mut artifacts = vec![
        json_artifact("construction.json", &cons)?,
        segments_csv(&cons)?,
        ledger_csv(&cons)?,
    ];
    let mut result = json!({
        "built": true,
        "k0": cons.k0,
        "k_max": inputs.k_max,
        "certified_modes": cons.certified_modes(),
        "picks": cons.picks.iter().map(|s| s.j).collect::<Vec<_>>(),
        "worst_ledger_margin": cons.worst_margin(),
        "ledger_inequalities": cons.ledger.len(),
    });
    let mut summary = format!(
        "built {} certified modes (k0 = {}), worst ledger margin {:e}",
        cons.certified_modes(),
        cons.k0,
        cons.worst_margin()
    );
    if cert {
        let mut opts = p.options.clone();
        opts.seed = sc.seed;
        let rep = certify(&cons, &opts, exec).map_err(|e| match e {
            DgcsError::BadInput(_) => invalid(e),
            other => RunError::Other(anyhow!(other)),
        })?;
        failures.extend(certificate_failures(&rep));
        artifacts.push(json_artifact("divergence.json", &rep)?);
        artifacts.push(divergence_csv(&rep)?);
        result["certificate"] = json!({
            "passed": rep.passed(),
            "t_eval": rep.t_eval,
            "defects": rep.defects.len(),
            "convergent_monotone": rep.convergent.iter().all(|s| s.monotone),
            "divergent_monotone": rep.divergent.iter().all(|s| s.monotone),
            "final_term_ok": rep.final_term_ok,
            "strictly_hyperbolic": rep.coefficient.strictly_hyperbolic(),
            "omega_pairs": rep.coefficient.omega.pairs,
            "omega_worst_ratio": rep.coefficient.omega.worst_ratio,
        });
        summary.push_str(&format!("; certificate {}", if rep.passed() { "passed" } else { "FAILED" }));
    }
    Ok((result, artifacts, failures, summary))
}

fn probe_name(k: &ProbeKind) -> &'static str {
    match k {
        ProbeKind::Hoelder { .. } => "hoelder",
        ProbeKind::Resonant { .. } => "resonant",
    }
}

fn sweep_tables(cells: &[CellVerdict]) -> Result<(Artifact, Artifact), RunError> {
    let mut wide = Vec::new();
    let mut long = Vec::new();
    for c in cells {
        let key = [f(c.sigma), f(c.alpha), f(c.delta)];
        for p in &c.probes {
            let mut row = key.to_vec();
            row.extend([
                f(p.lambda),
                f(p.slope_res),
                f(p.slope_damp),
                c.classification.as_str().to_string(),
            ]);
            wide.push(row);
            for (metric, v) in [("growth", p.growth), ("slope_res", p.slope_res), ("slope_damp", p.slope_damp)] {
                let mut row = key.to_vec();
                row.extend([probe_name(&p.kind).to_string(), f(p.lambda), metric.to_string(), f(v)]);
                long.push(row);
            }
        }
    }
    Ok((
        csv_artifact(
            "sweep.csv",
            &["sigma", "alpha", "delta", "lambda", "slope_res", "slope_damp", "class"],
            wide,
        )?,
        csv_artifact(
            "sweep_long.csv",
            &["sigma", "alpha", "delta", "probe", "lambda", "metric", "value"],
            long,
        )?,
    ))
}

fn run_sweep<M: ParallelMap>(sc: &Scenario, cfg: &SweepConfig, exec: &M) -> Result<Parts, RunError> {
    let cfg = SweepConfig {
        seed: sc.seed,
        ..cfg.clone()
    };
    let cells = sweep(&cfg, exec).map_err(invalid)?;
    let (wide, long) = sweep_tables(&cells)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &cells {
        *counts.entry(c.classification.as_str()).or_default() += 1;
    }
    let inconclusive = counts.get(Classification::Inconclusive.as_str()).copied().unwrap_or(0);
    let summary = format!(
        "swept {} cells: {}",
        cells.len(),
        counts
            .iter()
            .map(|(k, v)| format!("{v} {k}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let result = json!({
        "counts": counts,
        "inconclusive": inconclusive,
        "cells": cells,
    });
    Ok((result, vec![wide, long], Vec::new(), summary))
}
