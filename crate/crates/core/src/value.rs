//! Dynamically typed port values.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Domain of a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Real,
    Integer,
    Boolean,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Real => write!(f, "real"),
            Domain::Integer => write!(f, "integer"),
            Domain::Boolean => write!(f, "boolean"),
        }
    }
}

/// A value carried on a port or data variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn domain(&self) -> Domain {
        match self {
            Value::Real(_) => Domain::Real,
            Value::Int(_) => Domain::Integer,
            Value::Bool(_) => Domain::Boolean,
        }
    }

    /// Numeric view; integers widen to real.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Bool(_) => None,
        }
    }

    /// Checks the value against a declared domain. Integers are accepted
    /// where reals are expected.
    pub fn fits(&self, domain: Domain) -> bool {
        match (self, domain) {
            (Value::Real(_), Domain::Real) => true,
            (Value::Int(_), Domain::Real | Domain::Integer) => true,
            (Value::Bool(_), Domain::Boolean) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
        }
    }
}
