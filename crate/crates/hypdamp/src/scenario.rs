//! Scenario files: a versioned TOML document naming one operation and its
//! parameters.
//!
//! ```toml
//! schema_version = 1
//! name = "sup-check"
//! operation = "verify"
//! output_dir = "out/sup-check"
//! seed = 7
//!
//! [parameters]
//! sigma = 0.75
//! delta = 1.0
//! coefficient = { kind = "constant", c0 = 1.0 }
//! ```
//!
//! Values resolve as command-line overrides, then the file, then defaults.

use std::path::{Path, PathBuf};

use hypdamp_core::coefficients::{synthesize_hoelder, Coefficient, CoefficientError, Segment};
use hypdamp_core::dgcs_builder::{BasePool, CertifyOptions, DgcsInputs};
use hypdamp_core::mode_solver::SolverOptions;
use hypdamp_core::phase_diagram::SweepConfig;
use hypdamp_core::spaces::{ContinuityModulus, WeightFunction};
use hypdamp_core::theorem_verifier::{Theorem, VerifierOptions};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { origin: String, found: i64 },
    #[error("{origin}: scenario is for `{found}`, not `{expected}`")]
    WrongOperation {
        origin: String,
        found: String,
        expected: String,
    },
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Simulate,
    Verify,
    Dgcs,
    Sweep,
}

impl Operation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Operation::Simulate => "simulate",
            Operation::Verify => "verify",
            Operation::Dgcs => "dgcs",
            Operation::Sweep => "sweep",
        }
    }
}

/// Coefficient description used by `simulate` and `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        c0: f64,
    },
    /// Random lacunary Hölder coefficient; `seed` defaults to the scenario
    /// seed.
    Hoelder {
        alpha: f64,
        #[serde(default = "default_spread")]
        spread: f64,
        #[serde(default = "one")]
        base_freq: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Piecewise {
        segments: Vec<Segment>,
        #[serde(default)]
        modulus: Option<ContinuityModulus>,
    },
    Sampled {
        ts: Vec<f64>,
        cs: Vec<f64>,
        #[serde(default)]
        modulus: Option<ContinuityModulus>,
    },
}

fn default_spread() -> f64 {
    0.25
}

fn one() -> f64 {
    1.0
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec::Constant { c0: 1.0 }
    }
}

impl CoefficientSpec {
    pub fn build(&self, seed: u64) -> Result<Coefficient, CoefficientError> {
        let with = |c: Coefficient, m: &Option<ContinuityModulus>| match m {
            Some(w) => c.with_modulus(w.clone()),
            None => c,
        };
        match self {
            CoefficientSpec::Constant { c0 } => Ok(Coefficient::constant(*c0)),
            CoefficientSpec::Hoelder {
                alpha,
                spread,
                base_freq,
                seed: s,
            } => synthesize_hoelder(*alpha, *spread, s.unwrap_or(seed), *base_freq),
            CoefficientSpec::Piecewise { segments, modulus } => {
                Ok(with(Coefficient::piecewise(segments.clone())?, modulus))
            }
            CoefficientSpec::Sampled { ts, cs, modulus } => {
                Ok(with(Coefficient::sampled(ts.clone(), cs.clone())?, modulus))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub lambda: f64,
    pub sigma: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub u0: f64,
    #[serde(default)]
    pub u1: f64,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    /// Evenly spaced output times, endpoints included.
    #[serde(default = "default_trace_points")]
    pub samples: usize,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_trace_points() -> usize {
    201
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaChoice {
    /// Supercritical above `sigma = 1/2`, subcritical below, both at it.
    #[default]
    Auto,
    Sup,
    Sub,
    LowFrequency,
    HalfSigma,
    /// Descriptive run past the subcritical threshold; never fails.
    Explore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub theorem: Theorem,
    /// Spectrum `2^k`, `k = 0..=k_max`.
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    /// Frequency split; the least admissible `2^k` when absent.
    #[serde(default)]
    pub nu: Option<f64>,
    /// Data coefficients `u0 lambda^-decay`, `u1 lambda^-decay`.
    #[serde(default = "one")]
    pub decay: f64,
    #[serde(default = "default_family_samples")]
    pub samples: usize,
    #[serde(default = "default_family_slack")]
    pub slack: f64,
}

fn default_k_max() -> u32 {
    12
}

fn default_family_samples() -> usize {
    100
}

fn default_family_slack() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    pub sigma: f64,
    pub delta: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub u0: f64,
    #[serde(default)]
    pub u1: f64,
    /// Sobolev exponents for the weighted bound; need `1 - sigma <= alpha -
    /// beta <= sigma`.
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// Decay rate; the largest admissible one when absent.
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub lemma: LemmaChoice,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub options: VerifierOptions,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}

fn half() -> f64 {
    0.5
}

/// Construction inputs; absent fields take the preset values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgcsParams {
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub omega: Option<ContinuityModulus>,
    pub phi: Option<WeightFunction>,
    pub psi: Option<WeightFunction>,
    pub pool: Option<BasePool>,
    pub k_max: Option<usize>,
    /// Propagate and certify after building.
    #[serde(default = "yes")]
    pub certify: bool,
    #[serde(default)]
    pub options: CertifyOptions,
}

fn yes() -> bool {
    true
}

impl DgcsParams {
    pub fn inputs(&self) -> DgcsInputs {
        let p = DgcsInputs::preset();
        DgcsInputs {
            sigma: self.sigma.unwrap_or(p.sigma),
            delta: self.delta.unwrap_or(p.delta),
            omega: self.omega.clone().unwrap_or(p.omega),
            phi: self.phi.clone().unwrap_or(p.phi),
            psi: self.psi.clone().unwrap_or(p.psi),
            pool: self.pool.clone().unwrap_or(p.pool),
            k_max: self.k_max.unwrap_or(p.k_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "operation", content = "parameters", rename_all = "snake_case")]
pub enum Params {
    Simulate(SimulateParams),
    Verify(VerifyParams),
    Dgcs(DgcsParams),
    Sweep(SweepConfig),
}

impl Params {
    pub fn operation(&self) -> Operation {
        match self {
            Params::Simulate(_) => Operation::Simulate,
            Params::Verify(_) => Operation::Verify,
            Params::Dgcs(_) => Operation::Dgcs,
            Params::Sweep(_) => Operation::Sweep,
        }
    }
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(flatten)]
    pub params: Params,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document<P> {
    schema_version: u32,
    #[serde(default = "default_name")]
    name: String,
    #[serde(default)]
    #[allow(dead_code)]
    operation: Option<Operation>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    seed: u64,
    parameters: P,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("hypdamp-out")
}

/// One `key=value` override; `key` is dotted from the document root and
/// `value` is read as a TOML value, or as a bare string if that fails.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub key: Vec<String>,
    pub value: toml::Value,
}

impl Override {
    pub fn parse(s: &str) -> Result<Override, ScenarioError> {
        let (k, v) = s.split_once('=').ok_or_else(|| ScenarioError::Override(s.to_string()))?;
        let key: Vec<String> = k.trim().split('.').map(|p| p.trim().to_string()).collect();
        if key.iter().any(|p| p.is_empty()) {
            return Err(ScenarioError::Override(s.to_string()));
        }
        Ok(Override {
            key,
            value: parse_value(v.trim()),
        })
    }

    pub fn new(key: &str, value: toml::Value) -> Override {
        Override {
            key: key.split('.').map(str::to_string).collect(),
            value,
        }
    }

    fn apply(&self, root: &mut toml::Table) -> Result<(), ScenarioError> {
        let (last, path) = self.key.split_last().expect("override keys are nonempty");
        let mut t = root;
        for p in path {
            let entry = t
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            t = entry
                .as_table_mut()
                .ok_or_else(|| ScenarioError::Override(format!("{} is not a table", self.key.join("."))))?;
        }
        t.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

fn parse_value(v: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()))
}

/// Raw document plus where it came from.
pub struct Source {
    pub origin: String,
    pub text: Option<String>,
}

impl Source {
    pub fn file(path: &Path) -> Result<Source, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Source {
            origin: path.display().to_string(),
            text: Some(text),
        })
    }

    pub fn text(origin: &str, text: &str) -> Source {
        Source {
            origin: origin.to_string(),
            text: Some(text.to_string()),
        }
    }

    /// No file: defaults plus overrides only.
    pub fn empty() -> Source {
        Source {
            origin: "<command line>".to_string(),
            text: None,
        }
    }
}

/// Parses `src`, applies `overrides`, and checks the result against the
/// schema of `expected` (or of the operation the file names).
pub fn resolve(src: &Source, expected: Option<Operation>, overrides: &[Override]) -> Result<Scenario, ScenarioError> {
    let origin = src.origin.clone();
    let parse_err = |message: String| ScenarioError::Parse {
        origin: origin.clone(),
        message,
    };
    let mut table: toml::Table = match &src.text {
        Some(t) => toml::from_str(t).map_err(|e| parse_err(e.to_string()))?,
        None => toml::Table::new(),
    };
    if src.text.is_none() {
        table.insert("schema_version".into(), toml::Value::Integer(SCHEMA_VERSION as i64));
    }
    match table.get("schema_version") {
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION as i64 => {}
        Some(toml::Value::Integer(v)) => {
            return Err(ScenarioError::Version {
                origin,
                found: *v,
            })
        }
        Some(_) => return Err(parse_err("schema_version must be an integer".into())),
        None => return Err(parse_err("missing field `schema_version`".into())),
    }
    let op = match (table.get("operation"), expected) {
        (None, Some(e)) => {
            table.insert("operation".into(), toml::Value::String(e.as_str().into()));
            e
        }
        (None, None) => return Err(parse_err("missing field `operation`".into())),
        (Some(v), e) => {
            let found: Operation = v
                .clone()
                .try_into()
                .map_err(|err: toml::de::Error| parse_err(format!("operation: {}", err.message())))?;
            if let Some(e) = e.filter(|&e| e != found) {
                return Err(ScenarioError::WrongOperation {
                    origin,
                    found: found.as_str().into(),
                    expected: e.as_str().into(),
                });
            }
            found
        }
    };
    table
        .entry("parameters")
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    // Typed pass over the file text first so errors carry line and column.
    if let Some(text) = src.text.as_deref().filter(|t| has_parameters(t)) {
        typed_check(op, text).map_err(parse_err)?;
    }
    for o in overrides {
        o.apply(&mut table)?;
    }
    let origin_ov = if overrides.is_empty() {
        origin.clone()
    } else {
        format!("{origin} (with overrides)")
    };
    let merged = toml::Value::Table(table);
    let err = |e: toml::de::Error| ScenarioError::Parse {
        origin: origin_ov.clone(),
        message: e.message().to_string(),
    };
    let (params, header) = match op {
        Operation::Simulate => split(merged, Params::Simulate).map_err(err)?,
        Operation::Verify => split(merged, Params::Verify).map_err(err)?,
        Operation::Dgcs => split(merged, Params::Dgcs).map_err(err)?,
        Operation::Sweep => split(merged, Params::Sweep).map_err(err)?,
    };
    let sc = Scenario {
        schema_version: header.0,
        name: header.1,
        output_dir: header.2,
        seed: header.3,
        params,
    };
    validate(&sc)?;
    Ok(sc)
}

fn has_parameters(text: &str) -> bool {
    toml::from_str::<toml::Table>(text).is_ok_and(|t| t.contains_key("parameters"))
}

fn typed_check(op: Operation, text: &str) -> Result<(), String> {
    fn go<P: DeserializeOwned>(text: &str) -> Result<(), String> {
        toml::from_str::<Document<P>>(text).map(|_| ()).map_err(|e| e.to_string())
    }
    match op {
        Operation::Simulate => go::<SimulateParams>(text),
        Operation::Verify => go::<VerifyParams>(text),
        Operation::Dgcs => go::<DgcsParams>(text),
        Operation::Sweep => go::<SweepConfig>(text),
    }
}

type Header = (u32, String, PathBuf, u64);

fn split<P: DeserializeOwned>(v: toml::Value, wrap: fn(P) -> Params) -> Result<(Params, Header), toml::de::Error> {
    let d: Document<P> = v.try_into()?;
    Ok((wrap(d.parameters), (d.schema_version, d.name, d.output_dir, d.seed)))
}

/// Range checks that need no computation.
pub fn validate(sc: &Scenario) -> Result<(), ScenarioError> {
    let bad = |m: String| Err(ScenarioError::Invalid(m));
    let mode = |sigma: f64, delta: f64| -> Result<(), ScenarioError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {sigma}"));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return bad(format!("delta must be nonnegative, got {delta}"));
        }
        Ok(())
    };
    match &sc.params {
        Params::Simulate(p) => {
            mode(p.sigma, p.delta)?;
            if !(p.lambda > 0.0) || !(p.horizon > 0.0) {
                return bad("lambda and horizon must be positive".into());
            }
            if p.samples < 2 {
                return bad("samples must be at least 2".into());
            }
        }
        Params::Verify(p) => {
            mode(p.sigma, p.delta)?;
            if p.lambdas.is_empty() && p.family.is_none() {
                return bad("lambdas must be nonempty".into());
            }
            if p.lambdas.iter().any(|&l| !(l > 0.0)) || !(p.horizon > 0.0) {
                return bad("lambdas and horizon must be positive".into());
            }
            if p.options.samples == 0 {
                return bad("options.samples must be positive".into());
            }
        }
        Params::Dgcs(p) => {
            p.inputs().validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if !(p.options.t_eval > 0.0) {
                return bad("options.t_eval must be positive".into());
            }
        }
        Params::Sweep(c) => c.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const VERIFY: &str = r#"
schema_version = 1
name = "v"
operation = "verify"
seed = 3

[parameters]
sigma = 0.75
delta = 1.0
"#;

    #[test]
    fn defaults_fill_in() {
        let sc = resolve(&Source::text("t", VERIFY), Some(Operation::Verify), &[]).unwrap();
        let Params::Verify(p) = &sc.params else { panic!() };
        assert_eq!(p.lambdas, vec![1.0, 10.0, 100.0]);
        assert_eq!(p.coefficient, CoefficientSpec::Constant { c0: 1.0 });
        assert_eq!(sc.seed, 3);
    }

    #[test]
    fn overrides_win() {
        let ov = [
            Override::parse("parameters.sigma=0.9").unwrap(),
            Override::parse("seed=11").unwrap(),
        ];
        let sc = resolve(&Source::text("t", VERIFY), None, &ov).unwrap();
        let Params::Verify(p) = &sc.params else { panic!() };
        assert_eq!(p.sigma, 0.9);
        assert_eq!(sc.seed, 11);
    }

    #[test]
    fn type_error_has_location() {
        let bad = VERIFY.replace("sigma = 0.75", "sigma = \"x\"");
        let e = resolve(&Source::text("t", &bad), None, &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 8"), "{msg}");
    }

    #[test]
    fn unknown_field_rejected() {
        let bad = VERIFY.replace("delta = 1.0", "delta = 1.0\ngamma = 2");
        assert!(matches!(
            resolve(&Source::text("t", &bad), None, &[]),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn version_checked() {
        let bad = VERIFY.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(
            resolve(&Source::text("t", &bad), None, &[]),
            Err(ScenarioError::Version { found: 9, .. })
        ));
    }

    #[test]
    fn wrong_operation() {
        assert!(matches!(
            resolve(&Source::text("t", VERIFY), Some(Operation::Sweep), &[]),
            Err(ScenarioError::WrongOperation { .. })
        ));
    }

    #[test]
    fn flags_only() {
        let ov = [Override::new("parameters.k_max", toml::Value::Integer(10))];
        let sc = resolve(&Source::empty(), Some(Operation::Dgcs), &ov).unwrap();
        let Params::Dgcs(p) = &sc.params else { panic!() };
        assert_eq!(p.inputs().k_max, 10);
        assert!(p.certify);
    }

    #[test]
    fn bare_strings() {
        let o = Override::parse("parameters.lemma=sub").unwrap();
        assert_eq!(o.value, toml::Value::String("sub".into()));
    }
}
