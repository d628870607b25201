//! Assume/guarantee contracts with four guarantee kinds: timing, bound,
//! set-membership and continuous envelope.

pub mod parse;

pub use parse::{parse_contract, parse_contracts, print_contract, ParseError};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{Domain, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

/// A declared input or output port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub domain: Domain,
    pub direction: Direction,
}

/// A closed interval [lo, hi]. Endpoints are inclusive (Shewhart control
/// limits read as closed intervals).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// An assumption: a bound predicate over one input port. A violated
/// assumption vacuously discharges the guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption {
    pub port: String,
    pub interval: Interval,
}

/// The guarantee of a contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GuaranteeKind {
    /// Output = process(input) every `period_ms` (maximum inter-sample gap)
    /// within `deadline_ms` (processing deadline).
    Timing { period_ms: f64, deadline_ms: f64 },
    /// lo <= port value <= hi.
    Bound { port: String, interval: Interval },
    /// Port value lies in the union of the intervals.
    SetMembership { port: String, intervals: Vec<Interval> },
    /// Observed value stays within `rel_tol` of p_exp(t), where
    /// dp_exp/dt = k1 * p_exp and p_exp(0) = k2. `k1` is per second.
    Envelope {
        port: String,
        k1: f64,
        k2: f64,
        rel_tol: f64,
    },
}

impl GuaranteeKind {
    pub fn name(&self) -> &'static str {
        match self {
            GuaranteeKind::Timing { .. } => "timing",
            GuaranteeKind::Bound { .. } => "bound",
            GuaranteeKind::SetMembership { .. } => "set",
            GuaranteeKind::Envelope { .. } => "envelope",
        }
    }

    /// Port the guarantee constrains, when it constrains one.
    pub fn port(&self) -> Option<&str> {
        match self {
            GuaranteeKind::Timing { .. } => None,
            GuaranteeKind::Bound { port, .. }
            | GuaranteeKind::SetMembership { port, .. }
            | GuaranteeKind::Envelope { port, .. } => Some(port),
        }
    }
}

/// An assume/guarantee contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub id: String,
    pub inputs: Vec<PortDecl>,
    pub outputs: Vec<PortDecl>,
    /// Empty list = the contract makes no assumptions.
    pub assumptions: Vec<Assumption>,
    pub guarantee: GuaranteeKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum CheckError {
    #[error("port `{port}` missing from sample")]
    MissingPort { port: String },
    #[error("port `{port}` expects {expected}, got {got}")]
    TypeMismatch {
        port: String,
        expected: Domain,
        got: Domain,
    },
    #[error("{kind} contracts need an observer, not a point check")]
    NeedsObserver { kind: &'static str },
}

/// Outcome of a point check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointVerdict {
    Holds,
    Violated,
    /// An assumption failed, so the guarantee is vacuously discharged.
    AssumptionViolated,
}

impl Contract {
    fn port(&self, name: &str) -> Option<&PortDecl> {
        self.inputs
            .iter()
            .chain(self.outputs.iter())
            .find(|p| p.name == name)
    }

    /// Structural validation: every rule violation is named.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut seen = Vec::new();
        for p in self.inputs.iter().chain(self.outputs.iter()) {
            if seen.contains(&&p.name) {
                errs.push(format!("duplicate port name `{}`", p.name));
            }
            seen.push(&p.name);
        }
        for p in &self.inputs {
            if p.direction != Direction::In {
                errs.push(format!("input `{}` declared with out direction", p.name));
            }
        }
        for p in &self.outputs {
            if p.direction != Direction::Out {
                errs.push(format!("output `{}` declared with in direction", p.name));
            }
        }
        for a in &self.assumptions {
            match self.inputs.iter().find(|p| p.name == a.port) {
                None => errs.push(format!(
                    "assumption references undeclared input `{}`",
                    a.port
                )),
                Some(_) => {}
            }
            if a.interval.lo > a.interval.hi {
                errs.push(format!("assumption on `{}`: lo > hi", a.port));
            }
        }
        match &self.guarantee {
            GuaranteeKind::Timing { period_ms, deadline_ms } => {
                if *period_ms <= 0.0 {
                    errs.push("period must be positive".into());
                }
                if *deadline_ms <= 0.0 {
                    errs.push("deadline must be positive".into());
                }
            }
            GuaranteeKind::Bound { port, interval } => {
                if self.port(port).is_none() {
                    errs.push(format!("guarantee references undeclared port `{port}`"));
                }
                if interval.lo > interval.hi {
                    errs.push(format!("bound on `{port}`: lo > hi"));
                }
            }
            GuaranteeKind::SetMembership { port, intervals } => {
                if self.port(port).is_none() {
                    errs.push(format!("guarantee references undeclared port `{port}`"));
                }
                if intervals.is_empty() {
                    errs.push("set-membership needs at least one interval".into());
                }
                for iv in intervals {
                    if iv.lo > iv.hi {
                        errs.push(format!("interval on `{port}`: lo > hi"));
                    }
                }
            }
            GuaranteeKind::Envelope { port, rel_tol, .. } => {
                if self.port(port).is_none() {
                    errs.push(format!("guarantee references undeclared port `{port}`"));
                }
                if !(*rel_tol > 0.0 && *rel_tol < 1.0) {
                    errs.push("rel_tol must be in (0, 1)".into());
                }
            }
        }
        errs
    }

    /// Pure predicate evaluation of a bound or set-membership guarantee on
    /// one sample. Assumptions are evaluated first; a violated assumption
    /// vacuously discharges the guarantee.
    pub fn check_point(&self, sample: &HashMap<String, Value>) -> Result<PointVerdict, CheckError> {
        let lookup = |port: &str| -> Result<f64, CheckError> {
            let decl = self.port(port).ok_or_else(|| CheckError::MissingPort {
                port: port.to_string(),
            })?;
            let v = sample.get(port).ok_or_else(|| CheckError::MissingPort {
                port: port.to_string(),
            })?;
            if !v.fits(decl.domain) {
                return Err(CheckError::TypeMismatch {
                    port: port.to_string(),
                    expected: decl.domain,
                    got: v.domain(),
                });
            }
            v.as_f64().ok_or_else(|| CheckError::TypeMismatch {
                port: port.to_string(),
                expected: decl.domain,
                got: v.domain(),
            })
        };
        for a in &self.assumptions {
            if !a.interval.contains(lookup(&a.port)?) {
                return Ok(PointVerdict::AssumptionViolated);
            }
        }
        let holds = match &self.guarantee {
            GuaranteeKind::Timing { .. } => {
                return Err(CheckError::NeedsObserver { kind: "timing" })
            }
            GuaranteeKind::Envelope { .. } => {
                return Err(CheckError::NeedsObserver { kind: "envelope" })
            }
            GuaranteeKind::Bound { port, interval } => interval.contains(lookup(port)?),
            GuaranteeKind::SetMembership { port, intervals } => {
                let v = lookup(port)?;
                intervals.iter().any(|iv| iv.contains(v))
            }
        };
        Ok(if holds {
            PointVerdict::Holds
        } else {
            PointVerdict::Violated
        })
    }
}
