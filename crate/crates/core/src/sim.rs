//! World assembly: one deterministic simulation tying the event kernel,
//! component runtime, middleware, plant and monitors together.
//!
//! The run loop interleaves two sources of progress: kernel events and
//! observer clock expiries. At equal times, events win — a completion or
//! sample landing exactly on a deadline tick is applied before the timeout
//! fires, so inclusive deadline semantics hold and violation verdicts are
//! stamped exactly at the expiry tick.
//!
//! Recovery protocol: when a monitor bound to a managed component turns
//! violated, the resilience manager blames the active behaviour, requests a
//! switch (latched to the component's next activation boundary) and
//! publishes one notification per episode on the component's `fault/` topic.
//! The violated verdict stays sticky until the first activation starts under
//! the replacement behaviour; at that instant the component's monitors are
//! reset and a probation window of one contract period begins. A clean
//! window closes the episode and clears the blame record.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::fb::{ComponentInstance, Emission, FbError, InputEvent, Offer, ResilienceManager, RmAction, Scheduling};
use crate::kernel::{EventPayload, Kernel, KernelError};
use crate::middleware::{DeadlineOutcome, Middleware, MiddlewareError};
use crate::observer::{Observer, ObserverError, TimedEventKind, Verdict};
use crate::plant::{Colour, EjectOutcome, Plant, PlantError, PlantEvent, PressureModel};
use crate::time::Time;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Fb(#[from] FbError),
    #[error(transparent)]
    Middleware(#[from] MiddlewareError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Platform(#[from] crate::platform::PlatformError),
    #[error("unknown component '{0}'")]
    UnknownComponent(String),
}

/// Everything that can be scheduled on the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Belt step; also fans out to the pulse-counting component.
    MotorPulse,
    /// A piece crosses the inlet barrier.
    PieceArrival { colour: Colour },
    /// One (possibly bounced) inlet barrier edge, routed to a component.
    InletEdge,
    /// Direct stimulus to a component.
    ExternalEvent { event: String, values: Vec<(String, f64)> },
    /// The target component's running activation finishes.
    Complete,
    /// A middleware delivery arriving at the target subscriber.
    Deliver { topic: String, event: String, values: Vec<(String, f64)> },
    /// Due check of a topic's publication deadline.
    TopicDeadline { topic: String, generation: u64 },
    /// End of a recovery probation window for the target component.
    ProbationEnd { generation: u64 },
    /// Periodic sample of the plant pressure signal.
    PressureSample,
    /// Scan-grid tick for a cyclic component.
    Scan,
}

fn fmt_values(values: &[(String, f64)]) -> String {
    values
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl EventPayload for Payload {
    fn kind(&self) -> &'static str {
        match self {
            Payload::MotorPulse => "motor_pulse",
            Payload::PieceArrival { .. } => "piece_arrival",
            Payload::InletEdge => "inlet_edge",
            Payload::ExternalEvent { .. } => "external_event",
            Payload::Complete => "complete",
            Payload::Deliver { .. } => "deliver",
            Payload::TopicDeadline { .. } => "topic_deadline",
            Payload::ProbationEnd { .. } => "probation_end",
            Payload::PressureSample => "pressure_sample",
            Payload::Scan => "scan",
        }
    }

    fn detail(&self) -> String {
        match self {
            Payload::MotorPulse | Payload::InletEdge | Payload::Complete
            | Payload::PressureSample | Payload::Scan => String::new(),
            Payload::PieceArrival { colour } => colour.as_str().to_string(),
            Payload::ExternalEvent { event, values } => {
                format!("{event}|{}", fmt_values(values))
            }
            Payload::Deliver { topic, event, values } => {
                format!("{topic}|{event}|{}", fmt_values(values))
            }
            Payload::TopicDeadline { topic, generation } => format!("{topic}|{generation}"),
            Payload::ProbationEnd { generation } => format!("{generation}"),
        }
    }
}

/// Where a component's output event goes.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionSink {
    /// Publish on a middleware topic.
    Topic(String),
    /// Fire the plant ejector whose lane index is the emission's `lane`
    /// value.
    Ejector,
}

/// What a monitor watches.
#[derive(Debug, Clone, PartialEq)]
pub enum MonitorTarget {
    /// Activation starts are samples, activation completions are
    /// completions (timing contracts).
    ComponentTiming(String),
    /// The named payload field of every delivery on a topic (bound and
    /// set-membership contracts).
    TopicValue { topic: String, field: String },
    /// The periodic pressure samples (envelope contracts).
    Pressure,
}

/// A deployed observer, optionally under resilience management.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub observer: Observer,
    pub target: MonitorTarget,
    /// When set, violations of this monitor drive the named component's
    /// resilience manager, and the monitor resets with its recoveries.
    pub managed_component: Option<String>,
}

/// Routing from plant stimuli into components.
#[derive(Debug, Clone, Default)]
pub struct PlantRouting {
    /// Motor pulses trigger this component's event.
    pub pulse: Option<(String, String)>,
    /// Inlet barrier edges trigger this component's event.
    pub inlet: Option<(String, String)>,
    /// A piece at the colour sensor triggers this component's event, with
    /// the drawn reading in value `reading`.
    pub colour: Option<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct PulseGen {
    pub period: Time,
    pub until: Time,
}

/// A completed ejection attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct EjectRecord {
    pub at: Time,
    pub lane: usize,
    pub outcome: EjectOutcome,
}

pub struct Simulation {
    pub kernel: Kernel<Payload>,
    pub components: BTreeMap<String, ComponentInstance>,
    pub middleware: Middleware,
    pub plant: Option<Plant>,
    pub pressure: Option<(PressureModel, Time)>,
    pub monitors: Vec<Monitor>,
    pub rms: HashMap<String, ResilienceManager>,
    /// `(component, output event) -> sink`.
    pub sinks: HashMap<(String, String), EmissionSink>,
    /// `topic -> [(subscriber, input event name)]`.
    pub routes: HashMap<String, Vec<(String, String)>>,
    pub plant_routing: PlantRouting,
    pub pulses: Option<PulseGen>,
    pub observer_log: Vec<String>,
    pub ejections: Vec<EjectRecord>,
    /// Topics that missed their publication deadline, with the miss time.
    pub deadline_misses: Vec<(Time, String)>,
    /// Individual samples flagged out-of-range by value monitors.
    pub flagged_samples: Vec<(Time, String, f64)>,
}

impl Simulation {
    pub fn now(&self) -> Time {
        self.kernel.now()
    }

    fn component(&mut self, id: &str) -> Result<&mut ComponentInstance, SimError> {
        self.components
            .get_mut(id)
            .ok_or_else(|| SimError::UnknownComponent(id.to_string()))
    }

    /// Runs the world up to and including `horizon`.
    pub fn run(&mut self, horizon: Time) -> Result<(), SimError> {
        if let Some(p) = &self.pulses {
            let first = p.period;
            if first <= p.until {
                self.kernel.schedule(first, "plant", Payload::MotorPulse)?;
            }
        }
        if let Some((_, period)) = &self.pressure {
            let first = *period;
            if first <= horizon {
                self.kernel.schedule(first, "plant", Payload::PressureSample)?;
            }
        }
        for (id, c) in &self.components {
            if let Scheduling::CyclicScan { period_ms } = c.spec.scheduling {
                let first = Time::from_ms(period_ms);
                if first <= horizon {
                    self.kernel.schedule(first, id, Payload::Scan)?;
                }
            }
        }
        loop {
            let next_event = self.kernel.peek_time().filter(|&t| t <= horizon);
            let next_expiry = self
                .monitors
                .iter()
                .filter_map(|m| m.observer.earliest_expiry())
                .filter(|&t| t <= horizon)
                .min();
            match (next_event, next_expiry) {
                // events win ties so same-tick samples/completions land
                // before the timeout fires
                (Some(te), Some(tx)) if te <= tx => self.dispatch_one(horizon)?,
                (Some(_), None) => self.dispatch_one(horizon)?,
                (_, Some(tx)) => self.fire_expiries(tx)?,
                (None, None) => break,
            }
        }
        self.kernel.advance_to(horizon);
        Ok(())
    }

    fn dispatch_one(&mut self, horizon: Time) -> Result<(), SimError> {
        let Some(ev) = self.kernel.pop_next(horizon) else { return Ok(()) };
        let now = ev.time;
        match ev.payload {
            Payload::MotorPulse => self.on_motor_pulse(now)?,
            Payload::PieceArrival { colour } => self.on_piece_arrival(colour, now)?,
            Payload::InletEdge => {
                if let Some((comp, event)) = self.plant_routing.inlet.clone() {
                    self.offer_input(&comp, InputEvent { event, values: vec![] }, now)?;
                }
            }
            Payload::ExternalEvent { event, values } => {
                self.offer_input(&ev.target, InputEvent { event, values }, now)?;
            }
            Payload::Complete => self.on_complete(&ev.target, now)?,
            Payload::Deliver { topic, event, values } => {
                self.check_topic_monitors(&topic, &values, now)?;
                self.offer_input(&ev.target, InputEvent { event, values }, now)?;
            }
            Payload::TopicDeadline { topic, generation } => {
                if self.middleware.deadline_check(&topic, generation)? == DeadlineOutcome::Missed
                {
                    self.deadline_misses.push((now, topic));
                }
            }
            Payload::ProbationEnd { generation } => {
                if let Some(rm) = self.rms.get_mut(&ev.target) {
                    rm.on_probation_end(now, generation);
                }
            }
            Payload::PressureSample => self.on_pressure_sample(now)?,
            Payload::Scan => {
                let started = self.component(&ev.target)?.scan();
                if let Some(behaviour) = started {
                    self.on_activation_started(&ev.target, &behaviour, now)?;
                }
                let comp = self.component(&ev.target)?;
                if let Scheduling::CyclicScan { period_ms } = comp.spec.scheduling {
                    let next = now + Time::from_ms(period_ms);
                    if next <= horizon {
                        self.kernel.schedule(next, &ev.target, Payload::Scan)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn on_motor_pulse(&mut self, now: Time) -> Result<(), SimError> {
        let plant_events = match &mut self.plant {
            Some(p) => p.motor_step(now),
            None => vec![],
        };
        for pe in plant_events {
            self.route_plant_event(pe, now)?;
        }
        if let Some((comp, event)) = self.plant_routing.pulse.clone() {
            self.offer_input(&comp, InputEvent { event, values: vec![] }, now)?;
        }
        if let Some(p) = &self.pulses {
            let next = now + p.period;
            if next <= p.until {
                self.kernel.schedule(next, "plant", Payload::MotorPulse)?;
            }
        }
        Ok(())
    }

    fn on_piece_arrival(&mut self, colour: Colour, now: Time) -> Result<(), SimError> {
        let Some(plant) = &mut self.plant else { return Ok(()) };
        let pe = plant.add_piece(colour, now);
        let cfg = plant.config.clone();
        let scratch = Plant::new(cfg).expect("validated config");
        let mut uniform = |lo: f64, hi: f64| self.kernel.draw_uniform(lo, hi);
        let bounce = scratch.arrival_edges(&mut uniform);
        self.route_plant_event(pe, now)?;
        for offset in bounce {
            self.kernel.schedule(now + offset, "plant", Payload::InletEdge)?;
        }
        Ok(())
    }

    fn route_plant_event(&mut self, pe: PlantEvent, now: Time) -> Result<(), SimError> {
        match pe {
            PlantEvent::InletDetected { .. } => {
                if let Some((comp, event)) = self.plant_routing.inlet.clone() {
                    self.offer_input(&comp, InputEvent { event, values: vec![] }, now)?;
                }
            }
            PlantEvent::AtColourSensor { colour, .. } => {
                if let Some((comp, event)) = self.plant_routing.colour.clone() {
                    let readings = self
                        .plant
                        .as_ref()
                        .expect("plant events imply a plant")
                        .config
                        .readings
                        .clone();
                    let mut uniform = |lo: f64, hi: f64| self.kernel.draw_uniform(lo, hi);
                    let reading = readings.draw(colour, &mut uniform);
                    self.offer_input(
                        &comp,
                        InputEvent { event, values: vec![("reading".to_string(), reading)] },
                        now,
                    )?;
                }
            }
            PlantEvent::PassedEnd { .. } => {}
        }
        Ok(())
    }

    fn on_pressure_sample(&mut self, now: Time) -> Result<(), SimError> {
        let Some((model, period)) = &self.pressure else { return Ok(()) };
        let value = model.value_at(now);
        let next = now + *period;
        for i in 0..self.monitors.len() {
            if self.monitors[i].target != MonitorTarget::Pressure {
                continue;
            }
            let before = self.monitors[i].observer.verdict();
            if let Observer::Hybrid(h) = &mut self.monitors[i].observer {
                h.observe(value, now)?;
            }
            self.note_verdict_change(i, before, now)?;
        }
        if let Some(p) = &self.pulses {
            if next <= p.until {
                self.kernel.schedule(next, "plant", Payload::PressureSample)?;
            }
        }
        Ok(())
    }

    fn offer_input(&mut self, comp: &str, ev: InputEvent, now: Time) -> Result<(), SimError> {
        let offer = self.component(comp)?.offer(ev, now);
        if let Offer::Started { behaviour } = offer {
            self.on_activation_started(comp, &behaviour, now)?;
        }
        Ok(())
    }

    /// An activation began: settle any pending recovery handshake, feed the
    /// timing monitors a sample, and schedule the completion.
    fn on_activation_started(
        &mut self,
        comp: &str,
        behaviour: &str,
        now: Time,
    ) -> Result<(), SimError> {
        if let Some(rm) = self.rms.get_mut(comp) {
            if let Some((deadline, generation)) = rm.on_switch_started(now) {
                for m in &mut self.monitors {
                    if m.managed_component.as_deref() == Some(comp) {
                        m.observer.reset(now);
                    }
                }
                self.kernel
                    .schedule(deadline, comp, Payload::ProbationEnd { generation })?;
            }
        }
        self.step_timing_monitors(comp, TimedEventKind::Sample, now)?;
        let duration = self.kernel.platform.execution_duration(comp, behaviour)?;
        if let Some(d) = duration {
            self.kernel.schedule(now + d, comp, Payload::Complete)?;
        }
        // a downed node never completes; the timing monitor will flag it
        Ok(())
    }

    fn on_complete(&mut self, comp: &str, now: Time) -> Result<(), SimError> {
        let done = self.component(comp)?.complete(now)?;
        self.step_timing_monitors(comp, TimedEventKind::Completion, now)?;
        for emission in done.emissions {
            self.route_emission(comp, emission, now)?;
        }
        if let Some(behaviour) = done.next_started {
            self.on_activation_started(comp, &behaviour, now)?;
        }
        Ok(())
    }

    fn route_emission(
        &mut self,
        comp: &str,
        emission: Emission,
        now: Time,
    ) -> Result<(), SimError> {
        let key = (comp.to_string(), emission.event.clone());
        match self.sinks.get(&key) {
            Some(EmissionSink::Topic(topic)) => {
                let topic = topic.clone();
                self.publish(&topic, comp, &emission.event, &emission.values, now)?;
            }
            Some(EmissionSink::Ejector) => {
                let lane = emission
                    .values
                    .iter()
                    .find(|(k, _)| k == "lane")
                    .map(|(_, v)| *v as usize)
                    .unwrap_or(0);
                if let Some(plant) = &mut self.plant {
                    let outcome = plant.fire_ejector(lane, now)?;
                    self.ejections.push(EjectRecord { at: now, lane, outcome });
                }
            }
            None => {}
        }
        Ok(())
    }

    fn publish(
        &mut self,
        topic: &str,
        publisher: &str,
        event: &str,
        values: &[(String, f64)],
        now: Time,
    ) -> Result<(), SimError> {
        let payload_str = format!("{event}|{}", fmt_values(values));
        let outcome =
            self.middleware
                .publish(topic, publisher, &payload_str, now, &mut self.kernel)?;
        for d in outcome.deliveries {
            let as_event = self
                .routes
                .get(topic)
                .and_then(|rs| {
                    rs.iter()
                        .find(|(sub, _)| *sub == d.subscriber)
                        .map(|(_, e)| e.clone())
                })
                .unwrap_or_else(|| event.to_string());
            self.kernel.schedule(
                d.deliver_at,
                &d.subscriber,
                Payload::Deliver {
                    topic: topic.to_string(),
                    event: as_event,
                    values: values.to_vec(),
                },
            )?;
        }
        if let Some((at, generation)) = outcome.deadline_check {
            self.kernel.schedule(
                at,
                topic,
                Payload::TopicDeadline { topic: topic.to_string(), generation },
            )?;
        }
        Ok(())
    }

    fn step_timing_monitors(
        &mut self,
        comp: &str,
        kind: TimedEventKind,
        now: Time,
    ) -> Result<(), SimError> {
        for i in 0..self.monitors.len() {
            if self.monitors[i].target != MonitorTarget::ComponentTiming(comp.to_string()) {
                continue;
            }
            let before = self.monitors[i].observer.verdict();
            if let Observer::Timed(o) = &mut self.monitors[i].observer {
                o.step_event(kind, now)?;
            }
            self.note_verdict_change(i, before, now)?;
        }
        Ok(())
    }

    fn check_topic_monitors(
        &mut self,
        topic: &str,
        values: &[(String, f64)],
        now: Time,
    ) -> Result<(), SimError> {
        for i in 0..self.monitors.len() {
            let MonitorTarget::TopicValue { topic: t, field } = &self.monitors[i].target else {
                continue;
            };
            if t != topic {
                continue;
            }
            let Some((_, v)) = values.iter().find(|(k, _)| k == field) else { continue };
            let v = *v;
            let before = self.monitors[i].observer.verdict();
            if let Observer::Fsm(o) = &mut self.monitors[i].observer {
                if o.check(v, now)? == crate::observer::SampleCheck::Outlier {
                    let id = o.id.clone();
                    self.flagged_samples.push((now, id, v));
                }
            }
            self.note_verdict_change(i, before, now)?;
        }
        Ok(())
    }

    /// Fires every timed-monitor expiry due at exactly `tx`.
    fn fire_expiries(&mut self, tx: Time) -> Result<(), SimError> {
        for i in 0..self.monitors.len() {
            if self.monitors[i].observer.earliest_expiry() != Some(tx) {
                continue;
            }
            let before = self.monitors[i].observer.verdict();
            self.monitors[i].observer.advance_time(tx)?;
            self.note_verdict_change(i, before, tx)?;
        }
        Ok(())
    }

    /// Logs a verdict flip and drives the recovery protocol for managed
    /// components.
    fn note_verdict_change(
        &mut self,
        monitor_idx: usize,
        before: Verdict,
        now: Time,
    ) -> Result<(), SimError> {
        let after = self.monitors[monitor_idx].observer.verdict();
        if before == after {
            return Ok(());
        }
        self.observer_log
            .push(self.monitors[monitor_idx].observer.dump_line(now));
        if !after.is_violated() {
            return Ok(());
        }
        let Some(comp) = self.monitors[monitor_idx].managed_component.clone() else {
            return Ok(());
        };
        let current = self.component(&comp)?.current_behaviour().to_string();
        let Some(rm) = self.rms.get_mut(&comp) else { return Ok(()) };
        let action = rm.on_violation(now, &current);
        let publish_fault = match &action {
            RmAction::Switch { to, publish_fault } => {
                let to = to.clone();
                let pf = *publish_fault;
                self.component(&comp)?.request_switch(&to)?;
                pf
            }
            RmAction::Escalate { publish_fault } => *publish_fault,
            RmAction::None => false,
        };
        if publish_fault {
            let topic = self.middleware.ensure_fault_topic(&comp);
            let kind = match after {
                Verdict::Violated { kind, .. } => kind.as_str(),
                Verdict::Ok => unreachable!("checked above"),
            };
            self.publish(&topic, &comp, "fault", &[("tick".to_string(), now.ticks() as f64)], now)?;
            self.observer_log.push(format!(
                "{},{},fault_published,{},{}",
                now.ticks(),
                comp,
                topic,
                kind
            ));
        }
        Ok(())
    }
}

/// Convenience constructor for an empty world over a platform and seed.
pub struct SimBuilder {
    pub sim: Simulation,
}

impl SimBuilder {
    pub fn new(kernel: Kernel<Payload>) -> Self {
        SimBuilder {
            sim: Simulation {
                kernel,
                components: BTreeMap::new(),
                middleware: Middleware::new(),
                plant: None,
                pressure: None,
                monitors: Vec::new(),
                rms: HashMap::new(),
                sinks: HashMap::new(),
                routes: HashMap::new(),
                plant_routing: PlantRouting::default(),
                pulses: None,
                observer_log: Vec::new(),
                ejections: Vec::new(),
                deadline_misses: Vec::new(),
                flagged_samples: Vec::new(),
            },
        }
    }

    pub fn component(mut self, c: ComponentInstance) -> Result<Self, SimError> {
        self.sim.kernel.platform.register_target(c.id(), self.sim.kernel.now());
        self.sim.components.insert(c.id().to_string(), c);
        Ok(self)
    }

    pub fn emit_to_topic(mut self, comp: &str, event: &str, topic: &str) -> Self {
        self.sim.sinks.insert(
            (comp.to_string(), event.to_string()),
            EmissionSink::Topic(topic.to_string()),
        );
        self
    }

    pub fn emit_to_ejector(mut self, comp: &str, event: &str) -> Self {
        self.sim
            .sinks
            .insert((comp.to_string(), event.to_string()), EmissionSink::Ejector);
        self
    }

    /// Subscribes `comp` to `topic`; deliveries arrive as `as_event`.
    pub fn route(mut self, topic: &str, comp: &str, as_event: &str) -> Result<Self, SimError> {
        self.sim.middleware.subscribe(topic, comp)?;
        self.sim
            .routes
            .entry(topic.to_string())
            .or_default()
            .push((comp.to_string(), as_event.to_string()));
        Ok(self)
    }

    pub fn monitor(mut self, m: Monitor) -> Self {
        self.sim.monitors.push(m);
        self
    }

    pub fn manage(mut self, rm: ResilienceManager) -> Self {
        self.sim.middleware.ensure_fault_topic(&rm.component);
        self.sim.rms.insert(rm.component.clone(), rm);
        self
    }

    pub fn build(self) -> Simulation {
        self.sim
    }
}
