//! Function-block component runtime.
//!
//! A component declares one or more behaviours, each an execution control
//! chart (ECC) over the component's shared variables. Exactly one behaviour
//! is active; switching is requested at any time but latched to the next
//! activation boundary so an in-flight activation always completes under the
//! behaviour it started with.
//!
//! Activation model: a triggering input event starts an activation; the
//! platform supplies its duration (per component and behaviour, scaled by
//! node health). Input values are snapshotted when the event is accepted and
//! applied at completion, when the ECC takes one event transition, runs the
//! entered state's actions, emits output events, and then follows guarded
//! silent transitions until quiescent. Data events update variables
//! immediately and never activate.
//!
//! While busy, queue-mode components buffer triggering events FIFO;
//! latch-mode components drop them (the drop is logged). Cyclic-scan
//! components additionally ignore event arrival times and activate on a
//! fixed scan grid, consuming one pending event per scan.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::contract::Interval;
use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum FbError {
    #[error("component '{component}': {msg}")]
    BadSpec { component: String, msg: String },
    #[error("component '{component}' has no behaviour '{behaviour}'")]
    UnknownBehaviour { component: String, behaviour: String },
    #[error("completion signalled for '{component}' but no activation is running")]
    NotRunning { component: String },
    #[error("silent-transition loop in component '{component}' state '{state}'")]
    SilentLoop { component: String, state: String },
}

/// A constant or a variable reference in guards and algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Const(f64),
    Var(String),
}

impl Operand {
    fn eval(&self, vars: &HashMap<String, f64>) -> f64 {
        match self {
            Operand::Const(c) => *c,
            Operand::Var(v) => vars.get(v).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardCmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

/// A comparison between a variable and an operand.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub var: String,
    pub cmp: GuardCmp,
    pub rhs: Operand,
}

impl Guard {
    fn holds(&self, vars: &HashMap<String, f64>) -> bool {
        let lhs = vars.get(&self.var).copied().unwrap_or(0.0);
        let rhs = self.rhs.eval(vars);
        match self.cmp {
            GuardCmp::Lt => lhs < rhs,
            GuardCmp::Le => lhs <= rhs,
            GuardCmp::Gt => lhs > rhs,
            GuardCmp::Ge => lhs >= rhs,
            GuardCmp::Eq => lhs == rhs,
            GuardCmp::Ne => lhs != rhs,
        }
    }
}

/// Built-in algorithm kernels run by ECC states.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    /// `out = value of from`.
    PassThrough { from: String, to: String },
    /// `var += 1`.
    Counter { var: String },
    /// `var = value`.
    SetConst { var: String, value: f64 },
    /// `out = var + addend`.
    Add { var: String, addend: Operand, out: String },
    /// Suppresses the state's emissions when the previous accepted run was
    /// less than `delay_ms` ago. Tracks its own timestamp variable.
    Debounce { stamp_var: String, delay_ms: f64 },
    /// Emits only while `var cmp rhs` holds.
    ThresholdTrigger { guard: Guard },
    /// `out = code` of the first class whose interval union contains `var`,
    /// or -1 when no class matches.
    Classify { var: String, classes: Vec<(f64, Vec<Interval>)>, out: String },
}

impl Algorithm {
    /// Runs the kernel; returns false to suppress the state's emissions.
    fn run(&self, now: Time, vars: &mut HashMap<String, f64>) -> bool {
        match self {
            Algorithm::PassThrough { from, to } => {
                let v = vars.get(from).copied().unwrap_or(0.0);
                vars.insert(to.clone(), v);
                true
            }
            Algorithm::Counter { var } => {
                *vars.entry(var.clone()).or_insert(0.0) += 1.0;
                true
            }
            Algorithm::SetConst { var, value } => {
                vars.insert(var.clone(), *value);
                true
            }
            Algorithm::Add { var, addend, out } => {
                let v = vars.get(var).copied().unwrap_or(0.0) + addend.eval(vars);
                vars.insert(out.clone(), v);
                true
            }
            Algorithm::Debounce { stamp_var, delay_ms } => {
                let now_ms = now.as_ms();
                let last = vars.get(stamp_var).copied();
                let accept = match last {
                    Some(last_ms) => now_ms - last_ms >= *delay_ms,
                    None => true,
                };
                if accept {
                    vars.insert(stamp_var.clone(), now_ms);
                }
                accept
            }
            Algorithm::ThresholdTrigger { guard } => guard.holds(vars),
            Algorithm::Classify { var, classes, out } => {
                let v = vars.get(var).copied().unwrap_or(0.0);
                let code = classes
                    .iter()
                    .find(|(_, ivs)| ivs.iter().any(|iv| iv.contains(v)))
                    .map(|(c, _)| *c)
                    .unwrap_or(-1.0);
                vars.insert(out.clone(), code);
                true
            }
        }
    }
}

/// An output event emission: the named event plus the listed variables'
/// current values as payload.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitSpec {
    pub event: String,
    pub with_vars: Vec<String>,
}

/// An ECC state: its algorithms run on entry, then its emissions fire
/// (unless an algorithm suppressed them).
#[derive(Debug, Clone, PartialEq)]
pub struct EccState {
    pub name: String,
    pub algorithms: Vec<Algorithm>,
    pub emit: Vec<EmitSpec>,
}

/// An ECC transition. `event: None` marks a silent transition, evaluated
/// after state entry; transitions are tried in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct EccTransition {
    pub src: String,
    pub event: Option<String>,
    pub guard: Option<Guard>,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ecc {
    pub initial: String,
    pub states: Vec<EccState>,
    pub transitions: Vec<EccTransition>,
}

impl Ecc {
    fn state(&self, name: &str) -> Option<&EccState> {
        self.states.iter().find(|s| s.name == name)
    }
}

/// One selectable implementation of a component.
#[derive(Debug, Clone, PartialEq)]
pub struct Behaviour {
    pub name: String,
    pub ecc: Ecc,
}

/// How triggering events are buffered while the component is busy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// FIFO buffer; every accepted event eventually activates.
    Queue,
    /// No buffer; events arriving while busy or while one is already
    /// pending are dropped.
    Latch,
}

/// When activations start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheduling {
    /// An accepted event activates as soon as the component is idle.
    EventQueued,
    /// Activations start only on the scan grid `k * period`, consuming one
    /// pending event per scan.
    CyclicScan { period_ms: f64 },
}

/// Static description of a component. Behaviour declaration order is the
/// recovery preference order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub id: String,
    pub trigger_events: Vec<String>,
    pub data_events: Vec<String>,
    pub behaviours: Vec<Behaviour>,
    pub input_mode: InputMode,
    pub scheduling: Scheduling,
}

impl ComponentSpec {
    pub fn validate(&self) -> Result<(), FbError> {
        let bad = |msg: String| FbError::BadSpec { component: self.id.clone(), msg };
        if self.behaviours.is_empty() {
            return Err(bad("at least one behaviour is required".into()));
        }
        let mut names = HashSet::new();
        for b in &self.behaviours {
            if !names.insert(&b.name) {
                return Err(bad(format!("duplicate behaviour '{}'", b.name)));
            }
            if b.ecc.state(&b.ecc.initial).is_none() {
                return Err(bad(format!(
                    "behaviour '{}': initial state '{}' not declared",
                    b.name, b.ecc.initial
                )));
            }
            for t in &b.ecc.transitions {
                for s in [&t.src, &t.dst] {
                    if b.ecc.state(s).is_none() {
                        return Err(bad(format!(
                            "behaviour '{}': transition references unknown state '{s}'",
                            b.name
                        )));
                    }
                }
                if let Some(e) = &t.event {
                    if !self.trigger_events.contains(e) {
                        return Err(bad(format!(
                            "behaviour '{}': transition on undeclared event '{e}'",
                            b.name
                        )));
                    }
                }
            }
        }
        for e in &self.trigger_events {
            if self.data_events.contains(e) {
                return Err(bad(format!("event '{e}' is both trigger and data")));
            }
        }
        if let Scheduling::CyclicScan { period_ms } = self.scheduling {
            if period_ms <= 0.0 {
                return Err(bad("scan period must be positive".into()));
            }
        }
        Ok(())
    }
}

/// An input event instance with its payload values.
#[derive(Debug, Clone, PartialEq)]
pub struct InputEvent {
    pub event: String,
    pub values: Vec<(String, f64)>,
}

/// An emitted output event with payload values.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub event: String,
    pub values: Vec<(String, f64)>,
}

/// What happened when an input event was offered.
#[derive(Debug, Clone, PartialEq)]
pub enum Offer {
    /// An activation started; the caller must schedule its completion after
    /// the platform-supplied duration and then call `complete`.
    Started { behaviour: String },
    /// Buffered for a later activation.
    Queued,
    /// Dropped (latch mode, component busy or slot occupied).
    Dropped,
    /// A data event: variables updated, no activation.
    DataOnly,
    /// Ignored: not a declared event of this component.
    Unknown,
}

/// Result of completing an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub emissions: Vec<Emission>,
    /// Set when a requested behaviour switch took effect at this boundary.
    pub switched_to: Option<String>,
    /// Set when a queued event immediately started the next activation
    /// (event-queued scheduling only).
    pub next_started: Option<String>,
}

/// One line of the activation log:
/// `tick,component,behaviour,state,event,emissions`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub tick: u64,
    pub component: String,
    pub behaviour: String,
    pub state: String,
    pub event: String,
    pub emissions: Vec<String>,
}

impl ActivationRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.tick,
            self.component,
            self.behaviour,
            self.state,
            self.event,
            self.emissions.join(";")
        )
    }
}

#[derive(Debug, Clone)]
struct Running {
    event: InputEvent,
    behaviour_idx: usize,
}

/// A live component instance.
#[derive(Debug, Clone)]
pub struct ComponentInstance {
    pub spec: ComponentSpec,
    behaviour_idx: usize,
    pending_switch: Option<usize>,
    ecc_state: String,
    pub vars: HashMap<String, f64>,
    running: Option<Running>,
    queue: VecDeque<InputEvent>,
    pub activation_log: Vec<ActivationRecord>,
}

impl ComponentInstance {
    pub fn new(spec: ComponentSpec) -> Result<Self, FbError> {
        spec.validate()?;
        let ecc_state = spec.behaviours[0].ecc.initial.clone();
        Ok(ComponentInstance {
            spec,
            behaviour_idx: 0,
            pending_switch: None,
            ecc_state,
            vars: HashMap::new(),
            running: None,
            queue: VecDeque::new(),
            activation_log: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn current_behaviour(&self) -> &str {
        &self.spec.behaviours[self.behaviour_idx].name
    }

    pub fn is_busy(&self) -> bool {
        self.running.is_some()
    }

    /// Requests a switch; it takes effect at the next activation boundary
    /// (immediately when idle).
    pub fn request_switch(&mut self, behaviour: &str) -> Result<(), FbError> {
        let idx = self
            .spec
            .behaviours
            .iter()
            .position(|b| b.name == behaviour)
            .ok_or_else(|| FbError::UnknownBehaviour {
                component: self.spec.id.clone(),
                behaviour: behaviour.to_string(),
            })?;
        if self.running.is_some() {
            self.pending_switch = Some(idx);
        } else {
            self.apply_switch(idx);
        }
        Ok(())
    }

    fn apply_switch(&mut self, idx: usize) {
        self.behaviour_idx = idx;
        self.ecc_state = self.spec.behaviours[idx].ecc.initial.clone();
        self.pending_switch = None;
    }

    fn apply_pending_switch(&mut self) -> Option<String> {
        let idx = self.pending_switch.take()?;
        self.apply_switch(idx);
        Some(self.current_behaviour().to_string())
    }

    /// Offers an input event at `now`. For `Offer::Started` the caller owns
    /// scheduling the completion.
    pub fn offer(&mut self, ev: InputEvent, now: Time) -> Offer {
        if self.spec.data_events.contains(&ev.event) {
            for (k, v) in &ev.values {
                self.vars.insert(k.clone(), *v);
            }
            return Offer::DataOnly;
        }
        if !self.spec.trigger_events.contains(&ev.event) {
            return Offer::Unknown;
        }
        let busy = self.running.is_some();
        match self.spec.input_mode {
            InputMode::Latch if busy || !self.queue.is_empty() => {
                self.activation_log.push(ActivationRecord {
                    tick: now.ticks(),
                    component: self.spec.id.clone(),
                    behaviour: self.current_behaviour().to_string(),
                    state: "(dropped)".to_string(),
                    event: ev.event,
                    emissions: vec![],
                });
                return Offer::Dropped;
            }
            _ => {}
        }
        self.queue.push_back(ev);
        if busy || matches!(self.spec.scheduling, Scheduling::CyclicScan { .. }) {
            Offer::Queued
        } else {
            self.start_next()
                .map(|b| Offer::Started { behaviour: b })
                .expect("queue is non-empty and component idle")
        }
    }

    /// Starts the next pending activation if idle. Applies a latched
    /// behaviour switch first, so the activation runs under the new
    /// behaviour. Used internally and by the cyclic-scan driver.
    fn start_next(&mut self) -> Option<String> {
        if self.running.is_some() {
            return None;
        }
        self.apply_pending_switch();
        let event = self.queue.pop_front()?;
        let behaviour_idx = self.behaviour_idx;
        self.running = Some(Running { event, behaviour_idx });
        Some(self.current_behaviour().to_string())
    }

    /// Scan-grid driver: starts one pending activation, if any.
    pub fn scan(&mut self) -> Option<String> {
        debug_assert!(matches!(self.spec.scheduling, Scheduling::CyclicScan { .. }));
        self.start_next()
    }

    /// Completes the running activation at `now`: applies the snapshotted
    /// input values, takes one ECC event transition plus silent transitions,
    /// runs entered states' algorithms, and collects emissions.
    pub fn complete(&mut self, now: Time) -> Result<Completion, FbError> {
        let running = self.running.take().ok_or_else(|| FbError::NotRunning {
            component: self.spec.id.clone(),
        })?;
        for (k, v) in &running.event.values {
            self.vars.insert(k.clone(), *v);
        }
        let ecc = self.spec.behaviours[running.behaviour_idx].ecc.clone();
        let mut emissions = Vec::new();
        let mut entered_states = Vec::new();
        let event_taken = self.take_transition(&ecc, Some(&running.event.event), now, &mut emissions)?;
        if event_taken {
            entered_states.push(self.ecc_state.clone());
            let mut hops = 0;
            while self.take_transition(&ecc, None, now, &mut emissions)? {
                entered_states.push(self.ecc_state.clone());
                hops += 1;
                if hops > ecc.states.len() * 4 {
                    return Err(FbError::SilentLoop {
                        component: self.spec.id.clone(),
                        state: self.ecc_state.clone(),
                    });
                }
            }
        }
        self.activation_log.push(ActivationRecord {
            tick: now.ticks(),
            component: self.spec.id.clone(),
            behaviour: self.spec.behaviours[running.behaviour_idx].name.clone(),
            state: self.ecc_state.clone(),
            event: running.event.event.clone(),
            emissions: emissions.iter().map(|e| e.event.clone()).collect(),
        });
        let switched_to = self.apply_pending_switch();
        let next_started = match self.spec.scheduling {
            Scheduling::EventQueued => self.start_next(),
            Scheduling::CyclicScan { .. } => None,
        };
        Ok(Completion { emissions, switched_to, next_started })
    }

    /// Takes the first enabled transition for `event` (None = silent).
    /// Returns whether one fired; on entry runs the state's algorithms and,
    /// unless suppressed, its emissions.
    fn take_transition(
        &mut self,
        ecc: &Ecc,
        event: Option<&str>,
        now: Time,
        emissions: &mut Vec<Emission>,
    ) -> Result<bool, FbError> {
        let tr = ecc.transitions.iter().find(|t| {
            t.src == self.ecc_state
                && t.event.as_deref() == event
                && t.guard.as_ref().map(|g| g.holds(&self.vars)).unwrap_or(true)
        });
        let Some(tr) = tr else { return Ok(false) };
        self.ecc_state = tr.dst.clone();
        let state = ecc.state(&tr.dst).expect("validated");
        let mut emit_enabled = true;
        for alg in &state.algorithms {
            emit_enabled &= alg.run(now, &mut self.vars);
        }
        if emit_enabled {
            for spec in &state.emit {
                let values = spec
                    .with_vars
                    .iter()
                    .map(|v| (v.clone(), self.vars.get(v).copied().unwrap_or(0.0)))
                    .collect();
                emissions.push(Emission { event: spec.event.clone(), values });
            }
        }
        Ok(true)
    }
}

// ---------------------------------------------------------------------
// Resilience manager
// ---------------------------------------------------------------------

/// A fault episode as tracked by the resilience manager: opened at the first
/// contract violation, closed when a probation window passes cleanly after a
/// behaviour switch, or escalated when every behaviour has been blamed.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub detected_at: Time,
    pub blamed: Vec<String>,
    pub switches: Vec<(Time, String)>,
    /// First activation start under the replacement behaviour (observers are
    /// reset here and probation starts here).
    pub reset_at: Option<Time>,
    pub closed_at: Option<Time>,
    pub escalated: bool,
}

/// Directive returned to the simulation layer on a violation.
#[derive(Debug, Clone, PartialEq)]
pub enum RmAction {
    /// Switch the component to this behaviour. `publish_fault` is true only
    /// for the violation that opened the episode.
    Switch { to: String, publish_fault: bool },
    /// No healthy behaviour remains; stay on the current one.
    Escalate { publish_fault: bool },
    /// Already escalated; nothing to do.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RmPhase {
    Normal,
    /// Switch requested; waiting for the first activation start under the
    /// new behaviour.
    AwaitingReset,
    Probation,
    Escalated,
}

/// Per-component recovery coordinator. Blames the behaviour that was active
/// when a violation was detected, switches to the first unblamed behaviour
/// in preference order, and closes the episode after one clean probation
/// window following the switch.
#[derive(Debug, Clone)]
pub struct ResilienceManager {
    pub component: String,
    /// Preference order (component behaviour declaration order).
    pub behaviours: Vec<String>,
    pub probation: Time,
    phase: RmPhase,
    blamed: HashSet<String>,
    episodes: Vec<Episode>,
    /// Invalidates stale probation-end events after a re-switch.
    probation_generation: u64,
}

impl ResilienceManager {
    pub fn new(component: &str, behaviours: Vec<String>, probation: Time) -> Self {
        ResilienceManager {
            component: component.to_string(),
            behaviours,
            probation,
            phase: RmPhase::Normal,
            blamed: HashSet::new(),
            episodes: Vec::new(),
            probation_generation: 0,
        }
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn is_escalated(&self) -> bool {
        self.phase == RmPhase::Escalated
    }

    fn open_episode(&mut self) -> bool {
        let open = self
            .episodes
            .last()
            .map(|e| e.closed_at.is_none() && !e.escalated)
            .unwrap_or(false);
        !open
    }

    /// Handles a violation detected at `now` while `current` was active.
    pub fn on_violation(&mut self, now: Time, current: &str) -> RmAction {
        if self.phase == RmPhase::Escalated {
            return RmAction::None;
        }
        let publish_fault = self.open_episode();
        if publish_fault {
            self.episodes.push(Episode {
                detected_at: now,
                blamed: vec![],
                switches: vec![],
                reset_at: None,
                closed_at: None,
                escalated: false,
            });
        }
        self.blamed.insert(current.to_string());
        let episode = self.episodes.last_mut().expect("episode open");
        episode.blamed.push(current.to_string());
        let next = self
            .behaviours
            .iter()
            .find(|b| !self.blamed.contains(*b))
            .cloned();
        match next {
            Some(to) => {
                episode.switches.push((now, to.clone()));
                self.phase = RmPhase::AwaitingReset;
                self.probation_generation += 1;
                RmAction::Switch { to, publish_fault }
            }
            None => {
                episode.escalated = true;
                self.phase = RmPhase::Escalated;
                RmAction::Escalate { publish_fault }
            }
        }
    }

    /// Signals the first activation start under the switched-to behaviour.
    /// Returns the probation deadline and its generation, to be checked with
    /// [`ResilienceManager::on_probation_end`]; observers must be reset at
    /// `now` by the caller.
    pub fn on_switch_started(&mut self, now: Time) -> Option<(Time, u64)> {
        if self.phase != RmPhase::AwaitingReset {
            return None;
        }
        self.phase = RmPhase::Probation;
        if let Some(e) = self.episodes.last_mut() {
            if e.reset_at.is_none() {
                e.reset_at = Some(now);
            }
        }
        Some((now + self.probation, self.probation_generation))
    }

    /// Closes the episode when a probation window ends cleanly. Returns true
    /// when the episode was closed at `now` (blames clear with it).
    pub fn on_probation_end(&mut self, now: Time, generation: u64) -> bool {
        if self.phase != RmPhase::Probation || generation != self.probation_generation {
            return false;
        }
        self.phase = RmPhase::Normal;
        self.blamed.clear();
        if let Some(e) = self.episodes.last_mut() {
            e.closed_at = Some(now);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: f64) -> Time {
        Time::from_ms(v)
    }

    /// A two-behaviour pulse counter: each pulse increments `count` and
    /// emits `motorStep` carrying it.
    fn counter_spec(input_mode: InputMode) -> ComponentSpec {
        let ecc = Ecc {
            initial: "idle".into(),
            states: vec![
                EccState { name: "idle".into(), algorithms: vec![], emit: vec![] },
                EccState {
                    name: "count".into(),
                    algorithms: vec![Algorithm::Counter { var: "count".into() }],
                    emit: vec![EmitSpec {
                        event: "motorStep".into(),
                        with_vars: vec!["count".into()],
                    }],
                },
            ],
            transitions: vec![
                EccTransition {
                    src: "idle".into(),
                    event: Some("pulse".into()),
                    guard: None,
                    dst: "count".into(),
                },
                EccTransition { src: "count".into(), event: None, guard: None, dst: "idle".into() },
            ],
        };
        ComponentSpec {
            id: "C1".into(),
            trigger_events: vec!["pulse".into()],
            data_events: vec![],
            behaviours: vec![
                Behaviour { name: "beh1".into(), ecc: ecc.clone() },
                Behaviour { name: "beh2".into(), ecc },
            ],
            input_mode,
            scheduling: Scheduling::EventQueued,
        }
    }

    fn pulse() -> InputEvent {
        InputEvent { event: "pulse".into(), values: vec![] }
    }

    #[test]
    fn activation_counts_and_emits_on_completion() {
        let mut c = ComponentInstance::new(counter_spec(InputMode::Queue)).unwrap();
        assert_eq!(c.offer(pulse(), ms(0.0)), Offer::Started { behaviour: "beh1".into() });
        let done = c.complete(ms(9.1)).unwrap();
        assert_eq!(done.emissions.len(), 1);
        assert_eq!(done.emissions[0].event, "motorStep");
        assert_eq!(done.emissions[0].values, vec![("count".into(), 1.0)]);
        assert!(!c.is_busy());
    }

    #[test]
    fn queue_mode_buffers_and_chains() {
        let mut c = ComponentInstance::new(counter_spec(InputMode::Queue)).unwrap();
        c.offer(pulse(), ms(0.0));
        assert_eq!(c.offer(pulse(), ms(1.0)), Offer::Queued);
        let done = c.complete(ms(9.1)).unwrap();
        assert_eq!(done.next_started, Some("beh1".into()));
        let done2 = c.complete(ms(18.2)).unwrap();
        assert_eq!(done2.emissions[0].values, vec![("count".into(), 2.0)]);
    }

    #[test]
    fn latch_mode_drops_while_busy() {
        let mut c = ComponentInstance::new(counter_spec(InputMode::Latch)).unwrap();
        c.offer(pulse(), ms(0.0));
        assert_eq!(c.offer(pulse(), ms(1.0)), Offer::Dropped);
        let done = c.complete(ms(9.1)).unwrap();
        assert_eq!(done.next_started, None);
        // the dropped pulse never counted
        assert_eq!(done.emissions[0].values, vec![("count".into(), 1.0)]);
        // drop is visible in the activation log
        assert!(c.activation_log.iter().any(|r| r.state == "(dropped)"));
    }

    #[test]
    fn switch_latched_to_activation_boundary() {
        let mut c = ComponentInstance::new(counter_spec(InputMode::Latch)).unwrap();
        c.offer(pulse(), ms(0.0));
        c.request_switch("beh2").unwrap();
        assert_eq!(c.current_behaviour(), "beh1"); // still in-flight
        let done = c.complete(ms(9.1)).unwrap();
        assert_eq!(done.switched_to, Some("beh2".into()));
        assert_eq!(c.current_behaviour(), "beh2");
        // vars survive the switch, ECC position resets
        assert_eq!(c.vars.get("count"), Some(&1.0));
    }

    #[test]
    fn switch_while_idle_is_immediate() {
        let mut c = ComponentInstance::new(counter_spec(InputMode::Latch)).unwrap();
        c.request_switch("beh2").unwrap();
        assert_eq!(c.current_behaviour(), "beh2");
        assert!(matches!(
            c.request_switch("nope"),
            Err(FbError::UnknownBehaviour { .. })
        ));
    }

    #[test]
    fn data_events_update_vars_without_activating() {
        let mut spec = counter_spec(InputMode::Queue);
        spec.data_events = vec!["calib".into()];
        let mut c = ComponentInstance::new(spec).unwrap();
        let offer = c.offer(
            InputEvent { event: "calib".into(), values: vec![("gain".into(), 2.5)] },
            ms(0.0),
        );
        assert_eq!(offer, Offer::DataOnly);
        assert!(!c.is_busy());
        assert_eq!(c.vars.get("gain"), Some(&2.5));
    }

    #[test]
    fn cyclic_scan_waits_for_the_grid() {
        let mut spec = counter_spec(InputMode::Queue);
        spec.scheduling = Scheduling::CyclicScan { period_ms: 50.0 };
        let mut c = ComponentInstance::new(spec).unwrap();
        assert_eq!(c.offer(pulse(), ms(3.0)), Offer::Queued);
        assert_eq!(c.scan(), Some("beh1".into()));
        let done = c.complete(ms(59.1)).unwrap();
        assert_eq!(done.next_started, None); // cyclic never chains
    }

    #[test]
    fn guarded_silent_transitions_route_by_variable() {
        // classify a value, then route to a lane-specific emission
        let ecc = Ecc {
            initial: "wait".into(),
            states: vec![
                EccState {
                    name: "wait".into(),
                    algorithms: vec![],
                    emit: vec![],
                },
                EccState {
                    name: "classify".into(),
                    algorithms: vec![Algorithm::Classify {
                        var: "reading".into(),
                        classes: vec![
                            (0.0, vec![Interval { lo: 568.0, hi: 590.0 }]),
                            (1.0, vec![Interval { lo: 750.0, hi: 755.0 }]),
                        ],
                        out: "class".into(),
                    }],
                    emit: vec![],
                },
                EccState {
                    name: "red".into(),
                    algorithms: vec![],
                    emit: vec![EmitSpec { event: "ejectRed".into(), with_vars: vec![] }],
                },
                EccState {
                    name: "outlier".into(),
                    algorithms: vec![],
                    emit: vec![],
                },
            ],
            transitions: vec![
                EccTransition {
                    src: "wait".into(),
                    event: Some("sample".into()),
                    guard: None,
                    dst: "classify".into(),
                },
                EccTransition {
                    src: "classify".into(),
                    event: None,
                    guard: Some(Guard {
                        var: "class".into(),
                        cmp: GuardCmp::Eq,
                        rhs: Operand::Const(0.0),
                    }),
                    dst: "red".into(),
                },
                EccTransition {
                    src: "classify".into(),
                    event: None,
                    guard: Some(Guard {
                        var: "class".into(),
                        cmp: GuardCmp::Eq,
                        rhs: Operand::Const(-1.0),
                    }),
                    dst: "outlier".into(),
                },
                EccTransition { src: "red".into(), event: None, guard: None, dst: "wait".into() },
                EccTransition {
                    src: "outlier".into(),
                    event: None,
                    guard: None,
                    dst: "wait".into(),
                },
            ],
        };
        let spec = ComponentSpec {
            id: "C4".into(),
            trigger_events: vec!["sample".into()],
            data_events: vec![],
            behaviours: vec![Behaviour { name: "beh1".into(), ecc }],
            input_mode: InputMode::Queue,
            scheduling: Scheduling::EventQueued,
        };
        let mut c = ComponentInstance::new(spec).unwrap();
        c.offer(
            InputEvent { event: "sample".into(), values: vec![("reading".into(), 580.0)] },
            ms(0.0),
        );
        let done = c.complete(ms(3.0)).unwrap();
        assert_eq!(done.emissions.len(), 1);
        assert_eq!(done.emissions[0].event, "ejectRed");
        // an outlier reading routes to the silent bin
        c.offer(
            InputEvent { event: "sample".into(), values: vec![("reading".into(), 600.0)] },
            ms(10.0),
        );
        let done = c.complete(ms(13.0)).unwrap();
        assert!(done.emissions.is_empty());
        assert_eq!(c.vars.get("class"), Some(&-1.0));
    }

    #[test]
    fn debounce_suppresses_rapid_repeats() {
        let ecc = Ecc {
            initial: "idle".into(),
            states: vec![
                EccState { name: "idle".into(), algorithms: vec![], emit: vec![] },
                EccState {
                    name: "fire".into(),
                    algorithms: vec![Algorithm::Debounce {
                        stamp_var: "_last".into(),
                        delay_ms: 50.0,
                    }],
                    emit: vec![EmitSpec { event: "out".into(), with_vars: vec![] }],
                },
            ],
            transitions: vec![
                EccTransition {
                    src: "idle".into(),
                    event: Some("in".into()),
                    guard: None,
                    dst: "fire".into(),
                },
                EccTransition { src: "fire".into(), event: None, guard: None, dst: "idle".into() },
            ],
        };
        let spec = ComponentSpec {
            id: "D".into(),
            trigger_events: vec!["in".into()],
            data_events: vec![],
            behaviours: vec![Behaviour { name: "b".into(), ecc }],
            input_mode: InputMode::Queue,
            scheduling: Scheduling::EventQueued,
        };
        let mut c = ComponentInstance::new(spec).unwrap();
        c.offer(InputEvent { event: "in".into(), values: vec![] }, ms(0.0));
        assert_eq!(c.complete(ms(1.0)).unwrap().emissions.len(), 1);
        c.offer(InputEvent { event: "in".into(), values: vec![] }, ms(10.0));
        assert_eq!(c.complete(ms(11.0)).unwrap().emissions.len(), 0); // bounced
        c.offer(InputEvent { event: "in".into(), values: vec![] }, ms(60.0));
        assert_eq!(c.complete(ms(61.0)).unwrap().emissions.len(), 1);
    }

    #[test]
    fn spec_validation_catches_dangling_references() {
        let mut spec = counter_spec(InputMode::Queue);
        spec.behaviours[0].ecc.transitions[0].dst = "missing".into();
        assert!(matches!(
            ComponentInstance::new(spec),
            Err(FbError::BadSpec { .. })
        ));
        let mut spec = counter_spec(InputMode::Queue);
        spec.behaviours[1].name = "beh1".into();
        assert!(matches!(
            ComponentInstance::new(spec),
            Err(FbError::BadSpec { .. })
        ));
    }

    // --- resilience manager ---

    #[test]
    fn episode_opens_switches_and_closes_after_clean_probation() {
        let mut rm =
            ResilienceManager::new("C1", vec!["beh1".into(), "beh2".into()], ms(150.0));
        let action = rm.on_violation(ms(310.0), "beh1");
        assert_eq!(
            action,
            RmAction::Switch { to: "beh2".into(), publish_fault: true }
        );
        let (deadline, generation) = rm.on_switch_started(ms(600.0)).unwrap();
        assert_eq!(deadline, ms(750.0));
        assert!(rm.on_probation_end(ms(750.0), generation));
        let e = &rm.episodes()[0];
        assert_eq!(e.detected_at, ms(310.0));
        assert_eq!(e.reset_at, Some(ms(600.0)));
        assert_eq!(e.closed_at, Some(ms(750.0)));
        assert!(!e.escalated);
        // blames cleared: a later episode can blame and switch again
        let action = rm.on_violation(ms(2000.0), "beh2");
        assert_eq!(
            action,
            RmAction::Switch { to: "beh1".into(), publish_fault: true }
        );
        assert_eq!(rm.episodes().len(), 2);
    }

    #[test]
    fn violation_during_probation_reblames_without_new_episode() {
        let mut rm = ResilienceManager::new(
            "C1",
            vec!["beh1".into(), "beh2".into(), "beh3".into()],
            ms(150.0),
        );
        rm.on_violation(ms(100.0), "beh1");
        let (_, gen1) = rm.on_switch_started(ms(200.0)).unwrap();
        let action = rm.on_violation(ms(250.0), "beh2");
        assert_eq!(
            action,
            RmAction::Switch { to: "beh3".into(), publish_fault: false }
        );
        // the stale probation deadline must not close the episode
        assert!(!rm.on_probation_end(ms(350.0), gen1));
        let (_, gen2) = rm.on_switch_started(ms(300.0)).unwrap();
        assert!(rm.on_probation_end(ms(450.0), gen2));
        assert_eq!(rm.episodes().len(), 1);
        assert_eq!(rm.episodes()[0].blamed, vec!["beh1".to_string(), "beh2".to_string()]);
    }

    #[test]
    fn all_behaviours_blamed_escalates() {
        let mut rm =
            ResilienceManager::new("C1", vec!["beh1".into(), "beh2".into()], ms(150.0));
        rm.on_violation(ms(100.0), "beh1");
        rm.on_switch_started(ms(150.0));
        let action = rm.on_violation(ms(200.0), "beh2");
        assert_eq!(action, RmAction::Escalate { publish_fault: false });
        assert!(rm.is_escalated());
        assert!(rm.episodes()[0].escalated);
        assert_eq!(rm.on_violation(ms(300.0), "beh2"), RmAction::None);
    }
}
