//! Deterministic discrete-event kernel: clock, event queue, fault injection.
//!
//! All events dequeue in strict (time, seq) order; seq is the insertion
//! order, so simultaneous events dispatch first-scheduled-first. Fault
//! timelines are expanded into internal control events on the same queue,
//! which keeps target status changes totally ordered with user events.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::platform::{FaultKind, FaultSpec, Platform, PlatformError};
use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("event scheduled in the past: t={t} < now={now}")]
    PastEvent { t: Time, now: Time },
    #[error(transparent)]
    Platform(#[from] PlatformError),
}

/// Payloads must describe themselves for the dispatch log.
pub trait EventPayload {
    fn kind(&self) -> &'static str;
    fn detail(&self) -> String;
}

/// A scheduled event as seen by handlers.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub time: Time,
    pub seq: u64,
    pub target: String,
    pub payload: P,
}

#[derive(Debug, Clone)]
enum Slot<P> {
    User { target: String, payload: P },
    Control(ControlAction),
}

/// Internal fault-timeline actions.
#[derive(Debug, Clone)]
enum ControlAction {
    FaultPhase {
        spec: FaultSpec,
        /// true = effect becomes active, false = effect clears
        apply: bool,
    },
}

struct Queued<P> {
    time: Time,
    seq: u64,
    slot: Slot<P>,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// One line of the dispatch log: `tick,entity,event_kind,detail`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchRecord {
    pub tick: u64,
    pub entity: String,
    pub kind: String,
    pub detail: String,
}

impl DispatchRecord {
    pub fn to_line(&self) -> String {
        format!("{},{},{},{}", self.tick, self.entity, self.kind, self.detail)
    }
}

/// The deterministic kernel. Single-threaded; one instance per simulation.
pub struct Kernel<P> {
    now: Time,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    pub platform: Platform,
    rng: ChaCha8Rng,
    pub dispatch_log: Vec<DispatchRecord>,
    dispatched: u64,
}

impl<P: EventPayload> Kernel<P> {
    pub fn new(platform: Platform, seed: u64) -> Self {
        Kernel {
            now: Time::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            platform,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dispatch_log: Vec::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Uniform draw in [0, max_ms] on the tick grid, from the seeded stream.
    pub fn draw_latency(&mut self, max_ms: f64) -> Time {
        let max_ticks = Time::from_ms(max_ms).ticks();
        Time::from_ticks(self.rng.gen_range(0..=max_ticks))
    }

    /// Uniform draw in [lo, hi].
    pub fn draw_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    /// Bernoulli draw with probability `p`.
    pub fn draw_drop(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng.gen_bool(p)
        }
    }

    /// Enqueues an event. Rejects events in the past.
    pub fn schedule(&mut self, time: Time, target: &str, payload: P) -> Result<u64, KernelError> {
        if time < self.now {
            return Err(KernelError::PastEvent { t: time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            time,
            seq,
            slot: Slot::User {
                target: target.to_string(),
                payload,
            },
        }));
        Ok(seq)
    }

    fn schedule_control(&mut self, time: Time, action: ControlAction) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            time,
            seq,
            slot: Slot::Control(action),
        }));
    }

    /// Injects a fault: validates the spec, registers the target's
    /// availability trace and schedules the status-change timeline.
    pub fn inject_fault(&mut self, spec: FaultSpec) -> Result<(), KernelError> {
        spec.validate()?;
        if !self.platform.has_target(&spec.target) {
            return Err(PlatformError::UnknownTarget(spec.target.clone()).into());
        }
        let t0 = Time::from_ms(spec.t0_ms);
        self.schedule_control(t0, ControlAction::FaultPhase { spec, apply: true });
        Ok(())
    }

    /// Time of the next queued event, if any.
    pub fn peek_time(&self) -> Option<Time> {
        self.queue.peek().map(|Reverse(q)| q.time)
    }

    /// Advances the clock without dispatching. Used by the simulation loop
    /// to fire observer timeouts between events.
    pub fn advance_to(&mut self, t: Time) {
        debug_assert!(t >= self.now);
        if t > self.now {
            self.now = t;
        }
    }

    fn apply_control(&mut self, time: Time, action: ControlAction) {
        match action {
            ControlAction::FaultPhase { spec, apply } => {
                self.platform
                    .set_effect(&spec.target, spec.effect, apply, time)
                    .expect("target validated at injection");
                self.dispatch_log.push(DispatchRecord {
                    tick: time.ticks(),
                    entity: spec.target.clone(),
                    kind: if apply { "fault_on".into() } else { "fault_off".into() },
                    detail: format!("{:?}", spec.effect),
                });
                // Expand the next phase of the timeline lazily.
                match spec.kind {
                    FaultKind::Permanent => {}
                    FaultKind::Transient { duration_ms } => {
                        if apply {
                            self.schedule_control(
                                time + Time::from_ms(duration_ms),
                                ControlAction::FaultPhase { spec, apply: false },
                            );
                        }
                    }
                    FaultKind::Intermittent { on_ms, off_ms } => {
                        let dwell = if apply { on_ms } else { off_ms };
                        self.schedule_control(
                            time + Time::from_ms(dwell),
                            ControlAction::FaultPhase { spec, apply: !apply },
                        );
                    }
                }
            }
        }
    }

    /// Pops the next user event with time <= `t_end`, processing any control
    /// events on the way. Returns `None` when no user event remains within
    /// the horizon (the clock is left at the last processed time, not
    /// advanced to `t_end`; see [`Kernel::run_until`]).
    pub fn pop_next(&mut self, t_end: Time) -> Option<SimEvent<P>> {
        loop {
            match self.queue.peek() {
                Some(Reverse(q)) if q.time <= t_end => {}
                _ => return None,
            }
            let Reverse(q) = self.queue.pop().expect("peeked");
            self.now = q.time;
            match q.slot {
                Slot::Control(action) => self.apply_control(q.time, action),
                Slot::User { target, payload } => {
                    self.dispatched += 1;
                    self.dispatch_log.push(DispatchRecord {
                        tick: q.time.ticks(),
                        entity: target.clone(),
                        kind: payload.kind().to_string(),
                        detail: payload.detail(),
                    });
                    return Some(SimEvent {
                        time: q.time,
                        seq: q.seq,
                        target,
                        payload,
                    });
                }
            }
        }
    }

    /// Dispatches every event with time <= `t_end` through `handler`,
    /// leaving the clock at `t_end`. Returns the dispatch count.
    pub fn run_until(
        &mut self,
        t_end: Time,
        mut handler: impl FnMut(&mut Kernel<P>, SimEvent<P>),
    ) -> Result<u64, KernelError> {
        if t_end < self.now {
            return Err(KernelError::PastEvent { t: t_end, now: self.now });
        }
        let start = self.dispatched;
        while let Some(ev) = self.pop_next(t_end) {
            handler(self, ev);
        }
        self.now = t_end;
        Ok(self.dispatched - start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::{FaultEffect, PlatformMapping};

    #[derive(Debug, Clone, PartialEq)]
    struct Ping(&'static str);
    impl EventPayload for Ping {
        fn kind(&self) -> &'static str {
            "ping"
        }
        fn detail(&self) -> String {
            self.0.to_string()
        }
    }

    fn kernel() -> Kernel<Ping> {
        Kernel::new(Platform::new(PlatformMapping::default()), 42)
    }

    #[test]
    fn same_time_dispatches_in_schedule_order() {
        let mut k = kernel();
        k.schedule(Time::from_ms(10.0), "C1", Ping("a")).unwrap();
        k.schedule(Time::from_ms(10.0), "C2", Ping("b")).unwrap();
        let mut order = Vec::new();
        k.run_until(Time::from_ms(20.0), |_, ev| order.push(ev.target))
            .unwrap();
        assert_eq!(order, vec!["C1".to_string(), "C2".to_string()]);
    }

    #[test]
    fn past_event_rejected() {
        let mut k = kernel();
        k.run_until(Time::from_ms(6.0), |_, _| {}).unwrap();
        let err = k.schedule(Time::from_ms(5.0), "C1", Ping("late")).unwrap_err();
        assert!(matches!(err, KernelError::PastEvent { .. }));
    }

    #[test]
    fn time_zero_event_dispatches_first() {
        let mut k = kernel();
        k.schedule(Time::from_ms(1.0), "B", Ping("later")).unwrap();
        k.schedule(Time::ZERO, "A", Ping("first")).unwrap();
        let mut order = Vec::new();
        k.run_until(Time::from_ms(2.0), |_, ev| order.push(ev.target))
            .unwrap();
        assert_eq!(order, vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn run_until_empty_queue_advances_clock() {
        let mut k = kernel();
        let n = k.run_until(Time::from_ms(100.0), |_, _| {}).unwrap();
        assert_eq!(n, 0);
        assert_eq!(k.now(), Time::from_ms(100.0));
    }

    #[test]
    fn run_until_partial_horizon() {
        let mut k = kernel();
        for t in [1.0, 2.0, 3.0] {
            k.schedule(Time::from_ms(t), "C", Ping("x")).unwrap();
        }
        let n = k.run_until(Time::from_ms(2.0), |_, _| {}).unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn permanent_fault_availability_profile() {
        let mut mapping = PlatformMapping::default();
        mapping.assignments.insert("C1".into(), "N1".into());
        let mut k: Kernel<Ping> = Kernel::new(Platform::new(mapping), 0);
        k.inject_fault(FaultSpec {
            kind: FaultKind::Permanent,
            target: "N1".into(),
            t0_ms: 25.0,
            effect: FaultEffect::Down,
        })
        .unwrap();
        k.run_until(Time::from_ms(100.0), |_, _| {}).unwrap();
        let pts = k.platform.availability_points("N1").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].value, 1.0);
        assert_eq!(pts[1].at, Time::from_ms(25.0));
        assert_eq!(pts[1].value, 0.0);
    }

    #[test]
    fn intermittent_fault_alternates_on_boundaries() {
        let mut mapping = PlatformMapping::default();
        mapping.assignments.insert("C1".into(), "N1".into());
        let mut k: Kernel<Ping> = Kernel::new(Platform::new(mapping), 0);
        k.inject_fault(FaultSpec {
            kind: FaultKind::Intermittent { on_ms: 10.0, off_ms: 10.0 },
            target: "N1".into(),
            t0_ms: 0.0,
            effect: FaultEffect::Down,
        })
        .unwrap();
        k.run_until(Time::from_ms(40.0), |_, _| {}).unwrap();
        let pts = k.platform.availability_points("N1").unwrap();
        let timeline: Vec<(u64, f64)> = pts.iter().map(|p| (p.at.ticks(), p.value)).collect();
        assert_eq!(
            timeline,
            vec![
                (0, 1.0),
                (0, 0.0),
                (1000, 1.0),
                (2000, 0.0),
                (3000, 1.0),
                (4000, 0.0)
            ]
        );
    }

    #[test]
    fn unknown_fault_target_rejected() {
        let mut k = kernel();
        let err = k
            .inject_fault(FaultSpec {
                kind: FaultKind::Permanent,
                target: "nope".into(),
                t0_ms: 0.0,
                effect: FaultEffect::Down,
            })
            .unwrap_err();
        assert!(matches!(
            err,
            KernelError::Platform(PlatformError::UnknownTarget(_))
        ));
    }
}
