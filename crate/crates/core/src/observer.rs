//! Runtime monitors synthesized from contracts.
//!
//! Three observer classes: a deterministic timed automaton for timing
//! contracts, a stateless finite-state check for bound/set-membership
//! contracts, and a fixed-step hybrid automaton for envelope contracts.
//!
//! Timeout semantics: a clock bound expiring at tick E is detected eagerly
//! at E, but an event arriving at the same tick is applied first (the
//! simulation loop dispatches same-tick events before timeouts). A sample at
//! exactly `last + period`, or a completion at exactly `start + deadline`,
//! therefore satisfies the contract; absence of one violates it with the
//! verdict stamped at E.

use std::collections::VecDeque;

use thiserror::Error;

use crate::contract::{Contract, GuaranteeKind, Interval};
use crate::time::{Time, TICKS_PER_MS};

#[derive(Debug, Error, PartialEq)]
pub enum ObserverError {
    #[error("time regression: t={t} < last={last}")]
    TimeRegression { t: Time, last: Time },
}

/// Why a contract was violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    MissedSample,
    MissedDeadline,
    OutOfRange,
    EnvelopeExceeded,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::MissedSample => "missed_sample",
            ViolationKind::MissedDeadline => "missed_deadline",
            ViolationKind::OutOfRange => "out_of_range",
            ViolationKind::EnvelopeExceeded => "envelope_exceeded",
        }
    }
}

/// Observer verdict. `Violated` is sticky until the observer is reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Violated { kind: ViolationKind, at: Time },
}

impl Verdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }
}

/// Events an observer can consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObserverEvent {
    /// A new input sample was accepted (processing starts).
    Sample,
    /// Processing of the pending sample completed.
    Completion,
    /// A value appeared on the monitored port.
    PortValue(f64),
}

// ---------------------------------------------------------------------
// Timed observer: deterministic TA with integer-tick clock comparisons.
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy)]
pub struct ClockGuard {
    pub clock: usize,
    pub cmp: Cmp,
    pub bound_ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trigger {
    Event(TimedEventKind),
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimedEventKind {
    Sample,
    Completion,
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub src: usize,
    pub trigger: Trigger,
    pub guards: Vec<ClockGuard>,
    pub resets: Vec<usize>,
    pub dst: usize,
    pub violation: Option<ViolationKind>,
}

/// A deterministic timed automaton. Transitions carry static priorities
/// (their index: lower index = higher priority), so at most one transition
/// fires per step. Clock guards compare against integer tick bounds only.
#[derive(Debug, Clone)]
pub struct TimedObserver {
    pub id: String,
    pub locations: Vec<&'static str>,
    pub clock_names: Vec<&'static str>,
    pub transitions: Vec<Transition>,
    /// Reset instant of each clock; valuation at t is `t - reset`.
    clock_resets: Vec<Time>,
    location: usize,
    verdict: Verdict,
    last_time: Time,
}

impl TimedObserver {
    /// Two-clock observer for a timing contract: clock `gap` tracks the
    /// inter-sample gap against the period, clock `proc` tracks processing
    /// elapsed against the deadline.
    pub fn for_timing(id: &str, period_ms: f64, deadline_ms: f64) -> Self {
        let period = Time::from_ms(period_ms).ticks();
        let deadline = Time::from_ms(deadline_ms).ticks();
        const GAP: usize = 0;
        const PROC: usize = 1;
        const START: usize = 0;
        const PROCESSING: usize = 1;
        const WAITING: usize = 2;
        const VIOLATED: usize = 3;
        let gap_to = |src: usize| Transition {
            src,
            trigger: Trigger::Timeout,
            guards: vec![ClockGuard { clock: GAP, cmp: Cmp::Ge, bound_ticks: period }],
            resets: vec![],
            dst: VIOLATED,
            violation: Some(ViolationKind::MissedSample),
        };
        let transitions = vec![
            // deadline timeout has the highest static priority
            Transition {
                src: PROCESSING,
                trigger: Trigger::Timeout,
                guards: vec![ClockGuard { clock: PROC, cmp: Cmp::Ge, bound_ticks: deadline }],
                resets: vec![],
                dst: VIOLATED,
                violation: Some(ViolationKind::MissedDeadline),
            },
            gap_to(START),
            gap_to(PROCESSING),
            gap_to(WAITING),
            Transition {
                src: START,
                trigger: Trigger::Event(TimedEventKind::Sample),
                guards: vec![],
                resets: vec![GAP, PROC],
                dst: PROCESSING,
                violation: None,
            },
            Transition {
                src: PROCESSING,
                trigger: Trigger::Event(TimedEventKind::Completion),
                guards: vec![ClockGuard { clock: PROC, cmp: Cmp::Le, bound_ticks: deadline }],
                resets: vec![],
                dst: WAITING,
                violation: None,
            },
            // a sample arriving mid-processing supersedes the pending one
            Transition {
                src: PROCESSING,
                trigger: Trigger::Event(TimedEventKind::Sample),
                guards: vec![ClockGuard { clock: GAP, cmp: Cmp::Le, bound_ticks: period }],
                resets: vec![GAP, PROC],
                dst: PROCESSING,
                violation: None,
            },
            Transition {
                src: WAITING,
                trigger: Trigger::Event(TimedEventKind::Sample),
                guards: vec![ClockGuard { clock: GAP, cmp: Cmp::Le, bound_ticks: period }],
                resets: vec![GAP, PROC],
                dst: PROCESSING,
                violation: None,
            },
        ];
        TimedObserver {
            id: id.to_string(),
            locations: vec!["start", "processing", "waiting", "violated"],
            clock_names: vec!["gap", "proc"],
            transitions,
            clock_resets: vec![Time::ZERO, Time::ZERO],
            location: 0,
            verdict: Verdict::Ok,
            last_time: Time::ZERO,
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn location_name(&self) -> &'static str {
        self.locations[self.location]
    }

    fn guard_holds(&self, g: &ClockGuard, t: Time) -> bool {
        let value = t.saturating_sub(self.clock_resets[g.clock]).ticks();
        match g.cmp {
            Cmp::Le => value <= g.bound_ticks,
            Cmp::Ge => value >= g.bound_ticks,
        }
    }

    /// Earliest tick at which a timeout transition from the current location
    /// fires. `None` when violated or no timeout is reachable.
    pub fn earliest_expiry(&self) -> Option<Time> {
        if self.verdict.is_violated() {
            return None;
        }
        self.transitions
            .iter()
            .filter(|tr| tr.src == self.location && tr.trigger == Trigger::Timeout)
            .flat_map(|tr| {
                tr.guards.iter().map(|g| {
                    debug_assert_eq!(g.cmp, Cmp::Ge, "timeout guards are lower bounds");
                    self.clock_resets[g.clock] + Time::from_ticks(g.bound_ticks)
                })
            })
            .min()
    }

    fn take(&mut self, idx: usize, at: Time) {
        let tr = self.transitions[idx].clone();
        for &c in &tr.resets {
            self.clock_resets[c] = at;
        }
        self.location = tr.dst;
        if let Some(kind) = tr.violation {
            self.verdict = Verdict::Violated { kind, at };
        }
    }

    /// Fires expired timeouts with expiry `strictly_before` (exclusive) or
    /// up to and including `t` (inclusive), earliest first.
    fn fire_timeouts(&mut self, t: Time, inclusive: bool) {
        loop {
            if self.verdict.is_violated() {
                return;
            }
            let expiring = self
                .transitions
                .iter()
                .enumerate()
                .filter(|(_, tr)| tr.src == self.location && tr.trigger == Trigger::Timeout)
                .filter_map(|(i, tr)| {
                    let e = tr
                        .guards
                        .iter()
                        .map(|g| self.clock_resets[g.clock] + Time::from_ticks(g.bound_ticks))
                        .max()?;
                    let due = if inclusive { e <= t } else { e < t };
                    due.then_some((e, i))
                })
                .min(); // earliest expiry, then lowest index = highest priority
            match expiring {
                Some((e, i)) => self.take(i, e),
                None => return,
            }
        }
    }

    /// Steps the automaton on an event at time `t`. Timeouts that expired
    /// strictly before `t` fire first; an event at exactly an expiry tick is
    /// applied before the timeout.
    pub fn step_event(
        &mut self,
        kind: TimedEventKind,
        t: Time,
    ) -> Result<Verdict, ObserverError> {
        if t < self.last_time {
            return Err(ObserverError::TimeRegression { t, last: self.last_time });
        }
        self.fire_timeouts(t, false);
        if !self.verdict.is_violated() {
            let enabled = self
                .transitions
                .iter()
                .enumerate()
                .find(|(_, tr)| {
                    tr.src == self.location
                        && tr.trigger == Trigger::Event(kind)
                        && tr.guards.iter().all(|g| self.guard_holds(g, t))
                })
                .map(|(i, _)| i);
            if let Some(i) = enabled {
                self.take(i, t);
            }
        }
        self.last_time = t;
        Ok(self.verdict)
    }

    /// Advances the clocks to `t`, firing any timeout whose expiry is <= t.
    pub fn advance_time(&mut self, t: Time) -> Result<Verdict, ObserverError> {
        if t < self.last_time {
            return Err(ObserverError::TimeRegression { t, last: self.last_time });
        }
        self.fire_timeouts(t, true);
        self.last_time = t;
        Ok(self.verdict)
    }

    /// Returns to the initial location with cleared verdict and clocks
    /// rebased at `now`. The synthesized structure is preserved.
    pub fn reset(&mut self, now: Time) {
        self.location = 0;
        self.verdict = Verdict::Ok;
        for r in &mut self.clock_resets {
            *r = now;
        }
        self.last_time = now;
    }

    /// Debug dump line: `tick,observer_id,location,clock=value...,verdict`.
    pub fn dump_line(&self, now: Time) -> String {
        let clocks: Vec<String> = self
            .clock_names
            .iter()
            .zip(&self.clock_resets)
            .map(|(name, reset)| format!("{}={}", name, now.saturating_sub(*reset).ticks()))
            .collect();
        format!(
            "{},{},{},{},{}",
            now.ticks(),
            self.id,
            self.location_name(),
            clocks.join(";"),
            verdict_str(&self.verdict),
        )
    }
}

fn verdict_str(v: &Verdict) -> String {
    match v {
        Verdict::Ok => "ok".to_string(),
        Verdict::Violated { kind, at } => format!("violated:{}@{}", kind.as_str(), at.ticks()),
    }
}

// ---------------------------------------------------------------------
// Finite-state observer for bound / set-membership guarantees.
// ---------------------------------------------------------------------

/// Two-location FSM (`ok`, `violated`) checking each port value against a
/// union of closed intervals.
#[derive(Debug, Clone)]
pub struct FsmObserver {
    pub id: String,
    pub intervals: Vec<Interval>,
    verdict: Verdict,
    last_time: Time,
}

/// Per-sample outcome of an FSM check, independent of verdict stickiness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCheck {
    Conforming,
    Outlier,
}

impl FsmObserver {
    pub fn new(id: &str, intervals: Vec<Interval>) -> Self {
        FsmObserver {
            id: id.to_string(),
            intervals,
            verdict: Verdict::Ok,
            last_time: Time::ZERO,
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn check(&mut self, value: f64, t: Time) -> Result<SampleCheck, ObserverError> {
        if t < self.last_time {
            return Err(ObserverError::TimeRegression { t, last: self.last_time });
        }
        self.last_time = t;
        if self.intervals.iter().any(|iv| iv.contains(value)) {
            Ok(SampleCheck::Conforming)
        } else {
            if !self.verdict.is_violated() {
                self.verdict = Verdict::Violated { kind: ViolationKind::OutOfRange, at: t };
            }
            Ok(SampleCheck::Outlier)
        }
    }

    pub fn reset(&mut self, now: Time) {
        self.verdict = Verdict::Ok;
        self.last_time = now;
    }

    pub fn dump_line(&self, now: Time) -> String {
        let loc = if self.verdict.is_violated() { "violated" } else { "ok" };
        format!("{},{},{},,{}", now.ticks(), self.id, loc, verdict_str(&self.verdict))
    }
}

// ---------------------------------------------------------------------
// Hybrid observer for envelope guarantees.
// ---------------------------------------------------------------------

/// Fixed-step monitor of dp/dt = k1 * p against observed values.
///
/// The flow is linear, so one classical 4th-order step reduces to a constant
/// growth factor per step; the state advances only on the fixed step grid.
/// The observed value is held between samples and the envelope predicate is
/// evaluated after every step.
#[derive(Debug, Clone)]
pub struct HybridObserver {
    pub id: String,
    pub k1_per_s: f64,
    pub initial: f64,
    pub rel_tol: f64,
    pub step: Time,
    step_factor: f64,
    expected: f64,
    observed: Option<f64>,
    integrated_to: Time,
    verdict: Verdict,
    last_time: Time,
}

impl HybridObserver {
    pub fn new(id: &str, k1_per_s: f64, initial: f64, rel_tol: f64, step: Time) -> Self {
        assert!(step.ticks() > 0, "integration step must be positive");
        let h_s = step.as_secs();
        let z = k1_per_s * h_s;
        // 4th-order Runge-Kutta growth factor for y' = k1*y
        let step_factor = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        HybridObserver {
            id: id.to_string(),
            k1_per_s,
            initial,
            rel_tol,
            step,
            step_factor,
            expected: initial,
            observed: None,
            integrated_to: Time::ZERO,
            verdict: Verdict::Ok,
            last_time: Time::ZERO,
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    /// Expected value at the last completed integration step.
    pub fn expected(&self) -> f64 {
        self.expected
    }

    fn envelope_holds(&self, observed: f64) -> bool {
        (1.0 - self.rel_tol) * self.expected <= observed
            && observed <= (1.0 + self.rel_tol) * self.expected
    }

    fn check_at(&mut self, t: Time) {
        if self.verdict.is_violated() {
            return;
        }
        if let Some(obs) = self.observed {
            if !self.envelope_holds(obs) {
                self.verdict =
                    Verdict::Violated { kind: ViolationKind::EnvelopeExceeded, at: t };
            }
        }
    }

    /// Integrates full steps up to `t`, checking the envelope after each.
    pub fn advance_time(&mut self, t: Time) -> Result<Verdict, ObserverError> {
        if t < self.last_time {
            return Err(ObserverError::TimeRegression { t, last: self.last_time });
        }
        while self.integrated_to + self.step <= t {
            self.expected *= self.step_factor;
            self.integrated_to += self.step;
            self.check_at(self.integrated_to);
        }
        self.last_time = t;
        Ok(self.verdict)
    }

    /// Records an observed sample at `t` and checks the envelope.
    pub fn observe(&mut self, value: f64, t: Time) -> Result<Verdict, ObserverError> {
        self.advance_time(t)?;
        self.observed = Some(value);
        self.check_at(t);
        Ok(self.verdict)
    }

    pub fn reset(&mut self, now: Time) {
        self.expected = self.initial;
        self.observed = None;
        self.integrated_to = now;
        self.verdict = Verdict::Ok;
        self.last_time = now;
    }

    pub fn dump_line(&self, now: Time) -> String {
        format!(
            "{},{},flow,p_exp={:.6},{}",
            now.ticks(),
            self.id,
            self.expected,
            verdict_str(&self.verdict)
        )
    }
}

// ---------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------

/// Observers synthesized from a contract.
#[derive(Debug, Clone)]
pub enum Observer {
    Timed(TimedObserver),
    Fsm(FsmObserver),
    Hybrid(HybridObserver),
}

/// Default hybrid integration step: 0.1 ms.
pub const DEFAULT_HYBRID_STEP: Time = Time::from_ticks(TICKS_PER_MS / 10);

/// Builds the executable monitor for a validated contract.
pub fn synthesize_observer(contract: &Contract) -> Observer {
    let id = format!("obs_{}", contract.id);
    match &contract.guarantee {
        GuaranteeKind::Timing { period_ms, deadline_ms } => {
            Observer::Timed(TimedObserver::for_timing(&id, *period_ms, *deadline_ms))
        }
        GuaranteeKind::Bound { interval, .. } => {
            Observer::Fsm(FsmObserver::new(&id, vec![*interval]))
        }
        GuaranteeKind::SetMembership { intervals, .. } => {
            Observer::Fsm(FsmObserver::new(&id, intervals.clone()))
        }
        GuaranteeKind::Envelope { k1, k2, rel_tol, .. } => Observer::Hybrid(HybridObserver::new(
            &id,
            *k1,
            *k2,
            *rel_tol,
            DEFAULT_HYBRID_STEP,
        )),
    }
}

impl Observer {
    pub fn id(&self) -> &str {
        match self {
            Observer::Timed(o) => &o.id,
            Observer::Fsm(o) => &o.id,
            Observer::Hybrid(o) => &o.id,
        }
    }

    pub fn verdict(&self) -> Verdict {
        match self {
            Observer::Timed(o) => o.verdict(),
            Observer::Fsm(o) => o.verdict(),
            Observer::Hybrid(o) => o.verdict(),
        }
    }

    pub fn earliest_expiry(&self) -> Option<Time> {
        match self {
            Observer::Timed(o) => o.earliest_expiry(),
            _ => None,
        }
    }

    pub fn advance_time(&mut self, t: Time) -> Result<Verdict, ObserverError> {
        match self {
            Observer::Timed(o) => o.advance_time(t),
            Observer::Hybrid(o) => o.advance_time(t),
            Observer::Fsm(o) => {
                // stateless in time
                if t < o.last_time {
                    return Err(ObserverError::TimeRegression { t, last: o.last_time });
                }
                o.last_time = t;
                Ok(o.verdict())
            }
        }
    }

    pub fn reset(&mut self, now: Time) {
        match self {
            Observer::Timed(o) => o.reset(now),
            Observer::Fsm(o) => o.reset(now),
            Observer::Hybrid(o) => o.reset(now),
        }
    }

    pub fn dump_line(&self, now: Time) -> String {
        match self {
            Observer::Timed(o) => o.dump_line(now),
            Observer::Fsm(o) => o.dump_line(now),
            Observer::Hybrid(o) => o.dump_line(now),
        }
    }
}

/// Independent brute-force checker for timing contracts: tests every pair of
/// consecutive samples against the period and every sample's completion
/// against the deadline. Used as the oracle for the timed observer.
///
/// `events` are (time, kind) pairs in nondecreasing time order; `horizon` is
/// the final time the observer is advanced to. Returns the first violation.
pub fn brute_force_timing_check(
    events: &[(Time, TimedEventKind)],
    horizon: Time,
    period_ms: f64,
    deadline_ms: f64,
) -> Option<(ViolationKind, Time)> {
    let period = Time::from_ms(period_ms);
    let deadline = Time::from_ms(deadline_ms);
    let mut candidates: Vec<(Time, u8, ViolationKind)> = Vec::new();
    // Gap candidates: from observer start (time 0) and between samples.
    let mut last_sample = Time::ZERO;
    let mut pending: VecDeque<Time> = VecDeque::new();
    let mut first_sample_seen = false;
    for &(t, kind) in events {
        match kind {
            TimedEventKind::Sample => {
                let gap_expiry = last_sample + period;
                if t > gap_expiry {
                    candidates.push((gap_expiry, 1, ViolationKind::MissedSample));
                }
                // a sample supersedes any pending one (deadline tracks
                // latest), but a deadline that lapsed strictly before the
                // superseding sample has already been missed
                if let Some(s) = pending.front() {
                    if t > *s + deadline {
                        candidates.push((*s + deadline, 0, ViolationKind::MissedDeadline));
                    }
                }
                pending.clear();
                pending.push_back(t);
                last_sample = t;
                first_sample_seen = true;
            }
            TimedEventKind::Completion => {
                if let Some(s) = pending.pop_front() {
                    if t > s + deadline {
                        candidates.push((s + deadline, 0, ViolationKind::MissedDeadline));
                    }
                }
            }
        }
    }
    // Trailing obligations at the horizon.
    let gap_expiry = last_sample + period;
    if horizon >= gap_expiry && (first_sample_seen || horizon >= period) {
        // events at exactly the expiry would have been applied first; an
        // idle horizon at the expiry tick counts as missed
        candidates.push((gap_expiry, 1, ViolationKind::MissedSample));
    }
    if let Some(s) = pending.front() {
        if horizon >= *s + deadline {
            candidates.push((*s + deadline, 0, ViolationKind::MissedDeadline));
        }
    }
    candidates.into_iter().min().map(|(at, _, kind)| (kind, at))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: f64) -> Time {
        Time::from_ms(v)
    }

    #[test]
    fn gap_within_period_is_ok() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        o.step_event(TimedEventKind::Completion, ms(5.0)).unwrap();
        let v = o.step_event(TimedEventKind::Sample, ms(120.0)).unwrap();
        assert_eq!(v, Verdict::Ok);
    }

    #[test]
    fn missed_deadline_at_exactly_deadline() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        let v = o.advance_time(ms(10.0)).unwrap();
        assert_eq!(
            v,
            Verdict::Violated { kind: ViolationKind::MissedDeadline, at: ms(10.0) }
        );
    }

    #[test]
    fn completion_at_exactly_deadline_is_ok() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        let v = o.step_event(TimedEventKind::Completion, ms(10.0)).unwrap();
        assert_eq!(v, Verdict::Ok);
    }

    #[test]
    fn sample_at_exactly_period_is_ok() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        o.step_event(TimedEventKind::Completion, ms(5.0)).unwrap();
        let v = o.step_event(TimedEventKind::Sample, ms(150.0)).unwrap();
        assert_eq!(v, Verdict::Ok);
    }

    #[test]
    fn idle_past_period_misses_sample_at_last_plus_period() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(100.0)).unwrap();
        o.step_event(TimedEventKind::Completion, ms(105.0)).unwrap();
        let v = o.advance_time(ms(400.0)).unwrap();
        assert_eq!(
            v,
            Verdict::Violated { kind: ViolationKind::MissedSample, at: ms(250.0) }
        );
    }

    #[test]
    fn advance_by_zero_keeps_verdict() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        let v1 = o.advance_time(ms(5.0)).unwrap();
        let v2 = o.advance_time(ms(5.0)).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn time_regression_is_an_error() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.advance_time(ms(10.0)).unwrap();
        assert!(o.advance_time(ms(5.0)).is_err());
        assert!(o.step_event(TimedEventKind::Sample, ms(5.0)).is_err());
    }

    #[test]
    fn verdict_sticky_until_reset_and_reset_restores_initial() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        let fresh = o.clone();
        o.step_event(TimedEventKind::Sample, ms(0.0)).unwrap();
        o.advance_time(ms(50.0)).unwrap();
        assert!(o.verdict().is_violated());
        // still violated after a good-looking event
        let v = o.step_event(TimedEventKind::Sample, ms(60.0)).unwrap();
        assert!(v.is_violated());
        o.reset(ms(60.0));
        assert_eq!(o.verdict(), Verdict::Ok);
        assert_eq!(o.location_name(), "start");
        // structure preserved
        assert_eq!(o.transitions.len(), fresh.transitions.len());
        // reset of a fresh observer is identity on location/verdict
        let mut f2 = fresh.clone();
        f2.reset(Time::ZERO);
        assert_eq!(f2.location_name(), fresh.location_name());
        assert_eq!(f2.verdict(), fresh.verdict());
    }

    #[test]
    fn earliest_expiry_tracks_deadline_then_period() {
        let mut o = TimedObserver::for_timing("o", 150.0, 10.0);
        o.step_event(TimedEventKind::Sample, ms(100.0)).unwrap();
        assert_eq!(o.earliest_expiry(), Some(ms(110.0))); // deadline first
        o.step_event(TimedEventKind::Completion, ms(105.0)).unwrap();
        assert_eq!(o.earliest_expiry(), Some(ms(250.0))); // then gap
    }

    #[test]
    fn fsm_flags_every_outlier_sample() {
        let mut o = FsmObserver::new("o", vec![Interval { lo: 0.0, hi: 100.0 }]);
        assert_eq!(o.check(50.0, ms(1.0)).unwrap(), SampleCheck::Conforming);
        assert_eq!(o.check(150.0, ms(2.0)).unwrap(), SampleCheck::Outlier);
        assert_eq!(
            o.verdict(),
            Verdict::Violated { kind: ViolationKind::OutOfRange, at: ms(2.0) }
        );
        // sticky verdict, but per-sample checks keep reporting
        assert_eq!(o.check(60.0, ms(3.0)).unwrap(), SampleCheck::Conforming);
        assert!(o.verdict().is_violated());
    }

    #[test]
    fn hybrid_matches_closed_form_exponential() {
        // k1 = -0.5 /s, p(0) = 100, 10 s at h = 0.1 ms
        let mut o = HybridObserver::new("o", -0.5, 100.0, 0.05, DEFAULT_HYBRID_STEP);
        o.advance_time(Time::from_secs(10.0)).unwrap();
        let exact = 100.0 * (-0.5f64 * 10.0).exp();
        let rel = (o.expected() - exact).abs() / exact;
        assert!(rel < 1e-6, "rel err {rel}");
        assert_eq!(o.verdict(), Verdict::Ok);
    }

    #[test]
    fn hybrid_flags_envelope_exceedance() {
        let mut o = HybridObserver::new("o", -0.5, 100.0, 0.05, DEFAULT_HYBRID_STEP);
        // observed pressure stuck at 100 while expected decays
        o.observe(100.0, Time::ZERO).unwrap();
        let v = o.advance_time(Time::from_secs(1.0)).unwrap();
        match v {
            Verdict::Violated { kind, at } => {
                assert_eq!(kind, ViolationKind::EnvelopeExceeded);
                // 100 > 1.05 * 100 e^{-0.5 t}  <=>  t > 2 ln(1.05) ≈ 97.58 ms
                let bound_ms = 2000.0 * (1.05f64).ln();
                assert!((at.as_ms() - bound_ms).abs() <= 0.1, "at={} ms", at.as_ms());
            }
            v => panic!("expected violation, got {v:?}"),
        }
    }

    #[test]
    fn brute_force_agrees_on_named_cases() {
        // no completion by 10 ms
        let ev = [(ms(0.0), TimedEventKind::Sample)];
        assert_eq!(
            brute_force_timing_check(&ev, ms(50.0), 150.0, 10.0),
            Some((ViolationKind::MissedDeadline, ms(10.0)))
        );
        // gap exactly period
        let ev = [
            (ms(0.0), TimedEventKind::Sample),
            (ms(5.0), TimedEventKind::Completion),
            (ms(150.0), TimedEventKind::Sample),
            (ms(155.0), TimedEventKind::Completion),
        ];
        assert_eq!(brute_force_timing_check(&ev, ms(155.0), 150.0, 10.0), None);
    }
}
