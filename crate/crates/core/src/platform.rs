//! Platform nodes, application-to-platform mapping with cost functions, and
//! fault specifications with their availability traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("component `{0}` is not mapped to any node")]
    UnmappedComponent(String),
    #[error("no execution cost for ({component}, {behaviour})")]
    MissingExecCost { component: String, behaviour: String },
    #[error("invalid fault spec: {0}")]
    InvalidFault(String),
}

/// Status of a platform node (or any other fault target).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum NodeStatus {
    Available,
    Degraded { slowdown: f64 },
    Down,
}

impl NodeStatus {
    pub fn slowdown_factor(&self) -> f64 {
        match self {
            NodeStatus::Available => 1.0,
            NodeStatus::Degraded { slowdown } => *slowdown,
            NodeStatus::Down => f64::INFINITY,
        }
    }
}

/// How a fault manifests on its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "effect")]
pub enum FaultEffect {
    Down,
    Slowdown { factor: f64 },
    StuckValue { value: f64 },
}

/// Temporal shape of a fault.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FaultKind {
    Permanent,
    Intermittent { on_ms: f64, off_ms: f64 },
    Transient { duration_ms: f64 },
}

/// A fault to inject: what, where, when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Node, sensor or link id.
    pub target: String,
    /// Occurrence time, ms.
    pub t0_ms: f64,
    pub effect: FaultEffect,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<(), PlatformError> {
        if self.t0_ms < 0.0 {
            return Err(PlatformError::InvalidFault("t0 must be >= 0".into()));
        }
        match self.kind {
            FaultKind::Intermittent { on_ms, off_ms } if on_ms <= 0.0 || off_ms <= 0.0 => {
                return Err(PlatformError::InvalidFault(
                    "intermittent periods must be > 0".into(),
                ));
            }
            FaultKind::Transient { duration_ms } if duration_ms <= 0.0 => {
                return Err(PlatformError::InvalidFault(
                    "transient duration must be > 0".into(),
                ));
            }
            _ => {}
        }
        if let FaultEffect::Slowdown { factor } = self.effect {
            if factor <= 1.0 {
                return Err(PlatformError::InvalidFault(
                    "slowdown factor must be > 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Current fault-driven state of one target.
#[derive(Debug, Clone)]
pub struct TargetState {
    pub status: NodeStatus,
    /// Sensor value override while a stuck-value fault is active.
    pub stuck_value: Option<f64>,
}

impl Default for TargetState {
    fn default() -> Self {
        TargetState {
            status: NodeStatus::Available,
            stuck_value: None,
        }
    }
}

impl TargetState {
    /// Availability in [0, 1]. With `degraded_counts_full` a degraded node
    /// still reports 1; otherwise it reports 1/slowdown.
    pub fn availability(&self, degraded_counts_full: bool) -> f64 {
        match self.status {
            NodeStatus::Available => 1.0,
            NodeStatus::Down => 0.0,
            NodeStatus::Degraded { slowdown } => {
                if degraded_counts_full {
                    1.0
                } else {
                    1.0 / slowdown
                }
            }
        }
    }
}

/// Mapping of application components to platform nodes, with execution and
/// communication cost functions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlatformMapping {
    /// component id -> node id
    pub assignments: BTreeMap<String, String>,
    /// (component, behaviour) -> execution cost, ms
    pub exec_cost: BTreeMap<String, BTreeMap<String, f64>>,
    /// (edge, behaviour) -> communication cost, ms
    pub comm_cost: BTreeMap<String, BTreeMap<String, f64>>,
}

impl PlatformMapping {
    pub fn node_of(&self, component: &str) -> Result<&str, PlatformError> {
        self.assignments
            .get(component)
            .map(String::as_str)
            .ok_or_else(|| PlatformError::UnmappedComponent(component.into()))
    }

    pub fn exec_cost_ms(&self, component: &str, behaviour: &str) -> Result<f64, PlatformError> {
        self.exec_cost
            .get(component)
            .and_then(|m| m.get(behaviour))
            .copied()
            .ok_or_else(|| PlatformError::MissingExecCost {
                component: component.into(),
                behaviour: behaviour.into(),
            })
    }

    pub fn comm_cost_ms(&self, edge: &str, behaviour: &str) -> Option<f64> {
        self.comm_cost.get(edge).and_then(|m| {
            m.get(behaviour)
                .or_else(|| m.get("*"))
                .copied()
        })
    }
}

/// One availability change point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvailabilityPoint {
    pub at: Time,
    pub value: f64,
}

/// Platform state: every fault target, the mapping, and per-target
/// availability traces.
#[derive(Debug, Default)]
pub struct Platform {
    pub mapping: PlatformMapping,
    pub degraded_counts_full: bool,
    targets: BTreeMap<String, TargetState>,
    traces: BTreeMap<String, Vec<AvailabilityPoint>>,
}

impl Platform {
    pub fn new(mapping: PlatformMapping) -> Self {
        let mut p = Platform {
            mapping,
            ..Default::default()
        };
        let nodes: Vec<String> = p.mapping.assignments.values().cloned().collect();
        for n in nodes {
            p.register_target(&n, Time::ZERO);
        }
        p
    }

    /// Declares a fault target (node, sensor or link), initially available.
    pub fn register_target(&mut self, id: &str, now: Time) {
        if !self.targets.contains_key(id) {
            self.targets.insert(id.to_string(), TargetState::default());
            self.traces
                .insert(id.to_string(), vec![AvailabilityPoint { at: now, value: 1.0 }]);
        }
    }

    pub fn has_target(&self, id: &str) -> bool {
        self.targets.contains_key(id)
    }

    pub fn target(&self, id: &str) -> Result<&TargetState, PlatformError> {
        self.targets
            .get(id)
            .ok_or_else(|| PlatformError::UnknownTarget(id.into()))
    }

    /// Applies an effect (or clears it when `apply` is false) and logs the
    /// availability change.
    pub fn set_effect(
        &mut self,
        id: &str,
        effect: FaultEffect,
        apply: bool,
        now: Time,
    ) -> Result<(), PlatformError> {
        let degraded_counts_full = self.degraded_counts_full;
        let state = self
            .targets
            .get_mut(id)
            .ok_or_else(|| PlatformError::UnknownTarget(id.into()))?;
        if apply {
            match effect {
                FaultEffect::Down => state.status = NodeStatus::Down,
                FaultEffect::Slowdown { factor } => {
                    state.status = NodeStatus::Degraded { slowdown: factor }
                }
                FaultEffect::StuckValue { value } => state.stuck_value = Some(value),
            }
        } else {
            match effect {
                FaultEffect::StuckValue { .. } => state.stuck_value = None,
                _ => state.status = NodeStatus::Available,
            }
        }
        let value = state.availability(degraded_counts_full);
        let trace = self.traces.get_mut(id).expect("trace exists with target");
        if trace.last().map(|p| p.value) != Some(value) {
            trace.push(AvailabilityPoint { at: now, value });
        }
        Ok(())
    }

    /// Execution duration for (component, behaviour) under the current node
    /// status. `None` means the node is down and execution never completes.
    pub fn execution_duration(
        &self,
        component: &str,
        behaviour: &str,
    ) -> Result<Option<Time>, PlatformError> {
        let node = self.mapping.node_of(component)?;
        let base_ms = self.mapping.exec_cost_ms(component, behaviour)?;
        let status = self.target(node)?.status;
        match status {
            NodeStatus::Down => Ok(None),
            _ => Ok(Some(Time::from_ms(base_ms).scale(status.slowdown_factor()))),
        }
    }

    /// Availability change points recorded for a target.
    pub fn availability_points(&self, id: &str) -> Result<&[AvailabilityPoint], PlatformError> {
        self.traces
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| PlatformError::UnknownTarget(id.into()))
    }

    pub fn trace_ids(&self) -> impl Iterator<Item = &str> {
        self.traces.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapping() -> PlatformMapping {
        let mut m = PlatformMapping::default();
        m.assignments.insert("C1".into(), "N1".into());
        m.exec_cost
            .entry("C1".into())
            .or_default()
            .insert("Beh1".into(), 9.1);
        m
    }

    #[test]
    fn healthy_node_exec_cost_is_base() {
        let p = Platform::new(mapping());
        let d = p.execution_duration("C1", "Beh1").unwrap();
        assert_eq!(d, Some(Time::from_ms(9.1)));
    }

    #[test]
    fn slowdown_scales_exec_cost() {
        let mut p = Platform::new(mapping());
        let factor = 25_920.0 / 910.0;
        p.set_effect("N1", FaultEffect::Slowdown { factor }, true, Time::ZERO)
            .unwrap();
        let d = p.execution_duration("C1", "Beh1").unwrap();
        assert_eq!(d, Some(Time::from_ms(259.2)));
    }

    #[test]
    fn down_node_never_completes() {
        let mut p = Platform::new(mapping());
        p.set_effect("N1", FaultEffect::Down, true, Time::ZERO).unwrap();
        assert_eq!(p.execution_duration("C1", "Beh1").unwrap(), None);
    }

    #[test]
    fn unmapped_component_is_an_error() {
        let p = Platform::new(mapping());
        assert!(matches!(
            p.execution_duration("C9", "Beh1"),
            Err(PlatformError::UnmappedComponent(_))
        ));
    }

    #[test]
    fn fault_spec_validation() {
        let bad = FaultSpec {
            kind: FaultKind::Intermittent { on_ms: 0.0, off_ms: 10.0 },
            target: "N1".into(),
            t0_ms: 0.0,
            effect: FaultEffect::Down,
        };
        assert!(bad.validate().is_err());
        let bad_slow = FaultSpec {
            kind: FaultKind::Permanent,
            target: "N1".into(),
            t0_ms: 0.0,
            effect: FaultEffect::Slowdown { factor: 1.0 },
        };
        assert!(bad_slow.validate().is_err());
    }
}
