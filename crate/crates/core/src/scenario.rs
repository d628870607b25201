//! Scenario files: JSON descriptions of a case-study run.
//!
//! A scenario pins everything a run needs to be reproducible: the seed, the
//! horizon, piece arrivals, fault injections and the inlet bounce setting.
//! Two named presets cover the canned experiments: `sorting` (fault-free,
//! one piece per colour) and `recovery` (transient node slowdown driving a
//! behaviour switch).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casestudy::{self, CaseOptions};
use crate::plant::Colour;
use crate::platform::FaultSpec;
use crate::sim::{SimError, Simulation};
use crate::time::Time;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown preset '{0}' (expected 'sorting' or 'recovery')")]
    UnknownPreset(String),
    #[error("scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceSpec {
    pub at_ms: f64,
    pub colour: Colour,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub until_ms: f64,
    #[serde(default)]
    pub pieces: Vec<PieceSpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub bounce_max_extra: u32,
}

fn default_seed() -> u64 {
    0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.until_ms <= 0.0 {
            return Err(ScenarioError::Invalid("until_ms must be positive".into()));
        }
        for p in &self.pieces {
            if p.at_ms < 0.0 || p.at_ms > self.until_ms {
                return Err(ScenarioError::Invalid(format!(
                    "piece arrival {} ms outside [0, {}]",
                    p.at_ms, self.until_ms
                )));
            }
        }
        for f in &self.faults {
            f.validate()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// The named preset scenarios.
    pub fn preset(name: &str, seed: u64) -> Result<Self, ScenarioError> {
        match name {
            "sorting" => Ok(Scenario {
                seed,
                until_ms: 18_000.0,
                pieces: casestudy::exp1_pieces()
                    .into_iter()
                    .map(|(t, colour)| PieceSpec { at_ms: t.as_ms(), colour })
                    .collect(),
                faults: vec![],
                bounce_max_extra: 2,
            }),
            "recovery" => Ok(Scenario {
                seed,
                until_ms: 1_200.0,
                pieces: vec![],
                faults: vec![casestudy::exp2_fault()],
                bounce_max_extra: 0,
            }),
            other => Err(ScenarioError::UnknownPreset(other.to_string())),
        }
    }

    pub fn horizon(&self) -> Time {
        Time::from_ms(self.until_ms)
    }

    pub fn to_case_options(&self) -> CaseOptions {
        CaseOptions {
            seed: self.seed,
            horizon: self.horizon(),
            pieces: self
                .pieces
                .iter()
                .map(|p| (Time::from_ms(p.at_ms), p.colour))
                .collect(),
            faults: self.faults.clone(),
            bounce_max_extra: self.bounce_max_extra,
        }
    }

    /// Builds the world and runs it to the horizon.
    pub fn execute(&self) -> Result<Simulation, ScenarioError> {
        self.validate()?;
        let mut sim = casestudy::build_case_study(&self.to_case_options())?;
        sim.run(self.horizon())?;
        Ok(sim)
    }
}
