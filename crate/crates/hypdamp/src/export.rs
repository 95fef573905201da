//! `export`: coefficient samples or the DGCS construction, without running
//! the scenario's operation.

use hypdamp_core::dgcs_builder::build;
use hypdamp_core::math::lin_space;
use serde::{Deserialize, Serialize};

use crate::ops::{Artifact, RunError};
use crate::scenario::{Params, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportOptions {
    pub format: Format,
    /// Sample count for coefficient CSV.
    pub points: usize,
    /// Sampling horizon; defaults to the scenario horizon.
    pub t_end: Option<f64>,
}

pub fn export(sc: &Scenario, o: &ExportOptions) -> Result<Artifact, RunError> {
    let bad = |e: &dyn std::fmt::Display| RunError::Invalid(e.to_string());
    let (spec, horizon) = match &sc.params {
        Params::Simulate(p) => (&p.coefficient, p.horizon),
        Params::Verify(p) => (&p.coefficient, p.horizon),
        Params::Dgcs(p) => {
            let cons = build(&p.inputs()).map_err(|e| bad(&e))?;
            return Ok(match o.format {
                Format::Json => Artifact {
                    name: "construction.json".into(),
                    bytes: serde_json::to_vec_pretty(&cons).map_err(|e| bad(&e))?,
                },
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["kind", "start", "len", "excess_start", "excess_end"])
                        .map_err(|e| bad(&e))?;
                    for pc in &cons.coefficient.pieces {
                        let kind = serde_json::to_value(pc.kind).map_err(|e| bad(&e))?;
                        w.write_record([
                            kind.to_string(),
                            pc.start.to_string(),
                            pc.len.map(|l| l.to_string()).unwrap_or_default(),
                            pc.excess_start.to_string(),
                            pc.excess_end.to_string(),
                        ])
                        .map_err(|e| bad(&e))?;
                    }
                    Artifact {
                        name: "segments.csv".into(),
                        bytes: w.into_inner().map_err(|e| bad(&e))?,
                    }
                }
            });
        }
        Params::Sweep(_) => return Err(RunError::Invalid("sweep scenarios have no coefficient to export".into())),
    };
    let c = spec.build(sc.seed).map_err(|e| bad(&e))?;
    match o.format {
        Format::Json => Ok(Artifact {
            name: "coefficient.json".into(),
            bytes: serde_json::to_vec_pretty(&c).map_err(|e| bad(&e))?,
        }),
        Format::Csv => {
            let t_end = o.t_end.unwrap_or(horizon);
            if !(t_end > 0.0) || o.points < 2 {
                return Err(RunError::Invalid("need t_end > 0 and at least 2 points".into()));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "c", "dc"]).map_err(|e| bad(&e))?;
            for t in lin_space(0.0, t_end, o.points) {
                w.write_record([format!("{t:e}"), format!("{:e}", c.eval(t)), format!("{:e}", c.derivative(t))])
                    .map_err(|e| bad(&e))?;
            }
            Ok(Artifact {
                name: "coefficient.csv".into(),
                bytes: w.into_inner().map_err(|e| bad(&e))?,
            })
        }
    }
}
