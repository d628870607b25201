//! Publish/subscribe middleware model with per-topic quality of service.
//!
//! Topics carry an optional deadline (maximum inter-publication gap), an
//! optional latency budget (transit time above it is flagged, not dropped),
//! and a link model (base latency, bounded jitter, drop probability). All
//! randomness comes from the caller-supplied draw source so a seeded kernel
//! keeps delivery schedules reproducible.
//!
//! Ordering: deliveries between one publisher/subscriber pair on one topic
//! are FIFO; a later message never overtakes an earlier one. When a jitter
//! draw would reorder, the delivery instant is clamped to the previous one.
//!
//! Fault notifications travel over ordinary topics in the reserved `fault/`
//! namespace, one topic per component, so recovery coordination uses the
//! same delivery machinery (and the same logs) as application traffic.

use std::collections::HashMap;

use thiserror::Error;

use crate::kernel::{EventPayload, Kernel};
use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum MiddlewareError {
    #[error("unknown topic '{0}'")]
    UnknownTopic(String),
    #[error("topic '{0}' already declared")]
    DuplicateTopic(String),
    #[error("invalid QoS for topic '{topic}': {msg}")]
    BadQos { topic: String, msg: String },
}

/// Per-topic quality of service.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Qos {
    /// Maximum allowed gap between consecutive publications, if any.
    #[serde(default)]
    pub deadline_ms: Option<f64>,
    /// Transit time above this budget is flagged in the delivery log.
    #[serde(default)]
    pub latency_budget_ms: Option<f64>,
}

/// Stochastic link model for a topic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinkModel {
    /// Fixed transit latency in milliseconds.
    pub base_ms: f64,
    /// Additional uniform jitter in `[0, jitter_ms]`.
    #[serde(default)]
    pub jitter_ms: f64,
    /// Probability that a delivery is lost.
    #[serde(default)]
    pub drop_prob: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel { base_ms: 0.0, jitter_ms: 0.0, drop_prob: 0.0 }
    }
}

/// Source of randomness for link jitter and drops. The seeded kernel is the
/// production implementation; tests may substitute fixed draws.
pub trait LinkDraw {
    fn draw_jitter(&mut self, max_ms: f64) -> Time;
    fn draw_drop(&mut self, p: f64) -> bool;
}

impl<P: EventPayload> LinkDraw for Kernel<P> {
    fn draw_jitter(&mut self, max_ms: f64) -> Time {
        self.draw_latency(max_ms)
    }
    fn draw_drop(&mut self, p: f64) -> bool {
        Kernel::draw_drop(self, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Delivered,
    /// Delivered, but transit exceeded the latency budget.
    BudgetExceeded,
    Dropped,
}

impl DeliveryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeliveryStatus::Delivered => "delivered",
            DeliveryStatus::BudgetExceeded => "budget_exceeded",
            DeliveryStatus::Dropped => "dropped",
        }
    }
}

/// A delivery the caller must schedule on the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub topic: String,
    pub publisher: String,
    pub subscriber: String,
    pub payload: String,
    pub deliver_at: Time,
    pub status: DeliveryStatus,
}

/// One line of the delivery log:
/// `tick,topic,publisher,subscriber,payload,transit_ms,status`
/// (tick is the delivery instant; dropped messages log the publish instant
/// and an empty transit field).
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub tick: u64,
    pub topic: String,
    pub publisher: String,
    pub subscriber: String,
    pub payload: String,
    pub transit_ms: Option<f64>,
    pub status: DeliveryStatus,
}

impl DeliveryRecord {
    pub fn to_line(&self) -> String {
        let transit = self.transit_ms.map(|t| format!("{t}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.tick,
            self.topic,
            self.publisher,
            self.subscriber,
            self.payload,
            transit,
            self.status.as_str()
        )
    }
}

/// Outcome of a publication: deliveries to schedule, plus the next deadline
/// check (time and generation) if the topic has a deadline QoS.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishOutcome {
    pub deliveries: Vec<Delivery>,
    pub deadline_check: Option<(Time, u64)>,
}

/// Verdict of a due deadline check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadlineOutcome {
    /// A newer publication superseded this check; ignore it.
    Stale,
    /// No publication arrived within the deadline.
    Missed,
}

#[derive(Debug, Clone)]
struct TopicState {
    qos: Qos,
    link: LinkModel,
    subscribers: Vec<String>,
    /// Publication generation; bumps on every publish so in-flight deadline
    /// checks for older publications become stale.
    generation: u64,
    deadline_missed: bool,
}

/// The middleware fabric. Owns topic state and the delivery log; event
/// scheduling stays with the caller so the model is payload-agnostic.
#[derive(Debug, Default)]
pub struct Middleware {
    topics: HashMap<String, TopicState>,
    /// Last scheduled delivery instant per (topic, publisher, subscriber).
    fifo_front: HashMap<(String, String, String), Time>,
    pub delivery_log: Vec<DeliveryRecord>,
}

/// Name of the fault-notification topic for a component.
pub fn fault_topic(component: &str) -> String {
    format!("fault/{component}")
}

impl Middleware {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_topic(
        &mut self,
        name: &str,
        qos: Qos,
        link: LinkModel,
    ) -> Result<(), MiddlewareError> {
        if self.topics.contains_key(name) {
            return Err(MiddlewareError::DuplicateTopic(name.to_string()));
        }
        let bad = |msg: &str| MiddlewareError::BadQos {
            topic: name.to_string(),
            msg: msg.to_string(),
        };
        if let Some(d) = qos.deadline_ms {
            if d <= 0.0 {
                return Err(bad("deadline must be positive"));
            }
        }
        if let Some(b) = qos.latency_budget_ms {
            if b < 0.0 {
                return Err(bad("latency budget must be non-negative"));
            }
        }
        if link.base_ms < 0.0 || link.jitter_ms < 0.0 {
            return Err(bad("link latency must be non-negative"));
        }
        if !(0.0..=1.0).contains(&link.drop_prob) {
            return Err(bad("drop probability must be in [0, 1]"));
        }
        self.topics.insert(
            name.to_string(),
            TopicState {
                qos,
                link,
                subscribers: Vec::new(),
                generation: 0,
                deadline_missed: false,
            },
        );
        Ok(())
    }

    /// Declares the `fault/<component>` topic with a lossless zero-latency
    /// link, if not already present.
    pub fn ensure_fault_topic(&mut self, component: &str) -> String {
        let name = fault_topic(component);
        if !self.topics.contains_key(&name) {
            self.declare_topic(&name, Qos::default(), LinkModel::default())
                .expect("fresh topic");
        }
        name
    }

    pub fn has_topic(&self, name: &str) -> bool {
        self.topics.contains_key(name)
    }

    pub fn subscribe(&mut self, topic: &str, subscriber: &str) -> Result<(), MiddlewareError> {
        let state = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| MiddlewareError::UnknownTopic(topic.to_string()))?;
        if !state.subscribers.iter().any(|s| s == subscriber) {
            state.subscribers.push(subscriber.to_string());
        }
        Ok(())
    }

    pub fn deadline_missed(&self, topic: &str) -> bool {
        self.topics.get(topic).is_some_and(|t| t.deadline_missed)
    }

    /// Publishes `payload` at `now`. Jitter and drops are drawn once per
    /// subscriber, in subscription order. Returns the deliveries the caller
    /// must schedule and, when the topic has a deadline, the next check.
    pub fn publish(
        &mut self,
        topic: &str,
        publisher: &str,
        payload: &str,
        now: Time,
        draw: &mut dyn LinkDraw,
    ) -> Result<PublishOutcome, MiddlewareError> {
        let state = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| MiddlewareError::UnknownTopic(topic.to_string()))?;
        state.generation += 1;
        let generation = state.generation;
        let link = state.link;
        let qos = state.qos;
        let subscribers = state.subscribers.clone();
        let mut deliveries = Vec::new();
        for sub in subscribers {
            if draw.draw_drop(link.drop_prob) {
                self.delivery_log.push(DeliveryRecord {
                    tick: now.ticks(),
                    topic: topic.to_string(),
                    publisher: publisher.to_string(),
                    subscriber: sub.clone(),
                    payload: payload.to_string(),
                    transit_ms: None,
                    status: DeliveryStatus::Dropped,
                });
                continue;
            }
            let transit = Time::from_ms(link.base_ms) + draw.draw_jitter(link.jitter_ms);
            let mut deliver_at = now + transit;
            let key = (topic.to_string(), publisher.to_string(), sub.clone());
            if let Some(&front) = self.fifo_front.get(&key) {
                deliver_at = deliver_at.max(front);
            }
            self.fifo_front.insert(key, deliver_at);
            let actual_transit = deliver_at - now;
            let status = match qos.latency_budget_ms {
                Some(budget) if actual_transit > Time::from_ms(budget) => {
                    DeliveryStatus::BudgetExceeded
                }
                _ => DeliveryStatus::Delivered,
            };
            self.delivery_log.push(DeliveryRecord {
                tick: deliver_at.ticks(),
                topic: topic.to_string(),
                publisher: publisher.to_string(),
                subscriber: sub.clone(),
                payload: payload.to_string(),
                transit_ms: Some(actual_transit.as_ms()),
                status,
            });
            deliveries.push(Delivery {
                topic: topic.to_string(),
                publisher: publisher.to_string(),
                subscriber: sub,
                payload: payload.to_string(),
                deliver_at,
                status,
            });
        }
        let deadline_check = qos
            .deadline_ms
            .map(|d| (now + Time::from_ms(d), generation));
        Ok(PublishOutcome { deliveries, deadline_check })
    }

    /// Resolves a due deadline check scheduled at publication time. A check
    /// is stale when a newer publication bumped the topic generation.
    pub fn deadline_check(
        &mut self,
        topic: &str,
        generation: u64,
    ) -> Result<DeadlineOutcome, MiddlewareError> {
        let state = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| MiddlewareError::UnknownTopic(topic.to_string()))?;
        if state.generation != generation {
            Ok(DeadlineOutcome::Stale)
        } else {
            state.deadline_missed = true;
            Ok(DeadlineOutcome::Missed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scripted draw source for deterministic tests.
    struct Script {
        jitters_ms: Vec<f64>,
        drops: Vec<bool>,
    }

    impl LinkDraw for Script {
        fn draw_jitter(&mut self, max_ms: f64) -> Time {
            let v = if self.jitters_ms.is_empty() { 0.0 } else { self.jitters_ms.remove(0) };
            assert!(v <= max_ms);
            Time::from_ms(v)
        }
        fn draw_drop(&mut self, _p: f64) -> bool {
            if self.drops.is_empty() { false } else { self.drops.remove(0) }
        }
    }

    fn mw_one_topic(qos: Qos, link: LinkModel) -> Middleware {
        let mut mw = Middleware::new();
        mw.declare_topic("colour", qos, link).unwrap();
        mw.subscribe("colour", "C4").unwrap();
        mw
    }

    #[test]
    fn delivery_is_base_plus_jitter() {
        let mut mw = mw_one_topic(
            Qos::default(),
            LinkModel { base_ms: 0.5, jitter_ms: 0.2, drop_prob: 0.0 },
        );
        let mut s = Script { jitters_ms: vec![0.12], drops: vec![] };
        let out = mw.publish("colour", "C3", "red", Time::from_ms(10.0), &mut s).unwrap();
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(out.deliveries[0].deliver_at, Time::from_ms(10.62));
        assert_eq!(out.deliveries[0].status, DeliveryStatus::Delivered);
    }

    #[test]
    fn fifo_clamp_prevents_overtaking() {
        let mut mw = mw_one_topic(
            Qos::default(),
            LinkModel { base_ms: 1.0, jitter_ms: 5.0, drop_prob: 0.0 },
        );
        let mut s = Script { jitters_ms: vec![5.0, 0.0], drops: vec![] };
        let a = mw.publish("colour", "C3", "m1", Time::from_ms(0.0), &mut s).unwrap();
        let b = mw.publish("colour", "C3", "m2", Time::from_ms(1.0), &mut s).unwrap();
        assert_eq!(a.deliveries[0].deliver_at, Time::from_ms(6.0));
        // raw arrival would be 2.0 ms, clamped to the front of the queue
        assert_eq!(b.deliveries[0].deliver_at, Time::from_ms(6.0));
    }

    #[test]
    fn drop_skips_delivery_but_logs_it() {
        let mut mw = mw_one_topic(
            Qos::default(),
            LinkModel { base_ms: 1.0, jitter_ms: 0.0, drop_prob: 1.0 },
        );
        let mut s = Script { jitters_ms: vec![], drops: vec![true] };
        let out = mw.publish("colour", "C3", "m", Time::from_ms(0.0), &mut s).unwrap();
        assert!(out.deliveries.is_empty());
        assert_eq!(mw.delivery_log.len(), 1);
        assert_eq!(mw.delivery_log[0].status, DeliveryStatus::Dropped);
        assert_eq!(mw.delivery_log[0].transit_ms, None);
    }

    #[test]
    fn latency_budget_exceeded_is_flagged_not_dropped() {
        let mut mw = mw_one_topic(
            Qos { deadline_ms: None, latency_budget_ms: Some(1.0) },
            LinkModel { base_ms: 0.5, jitter_ms: 2.0, drop_prob: 0.0 },
        );
        let mut s = Script { jitters_ms: vec![1.5], drops: vec![] };
        let out = mw.publish("colour", "C3", "m", Time::from_ms(0.0), &mut s).unwrap();
        assert_eq!(out.deliveries[0].status, DeliveryStatus::BudgetExceeded);
        assert_eq!(out.deliveries[0].deliver_at, Time::from_ms(2.0));
    }

    #[test]
    fn deadline_check_generations() {
        let mut mw = mw_one_topic(
            Qos { deadline_ms: Some(150.0), latency_budget_ms: None },
            LinkModel::default(),
        );
        let mut s = Script { jitters_ms: vec![0.0, 0.0], drops: vec![] };
        let out1 = mw.publish("colour", "C3", "m1", Time::from_ms(0.0), &mut s).unwrap();
        let (t1, g1) = out1.deadline_check.unwrap();
        assert_eq!(t1, Time::from_ms(150.0));
        // a second publication before the deadline supersedes the first check
        mw.publish("colour", "C3", "m2", Time::from_ms(100.0), &mut s).unwrap();
        assert_eq!(mw.deadline_check("colour", g1).unwrap(), DeadlineOutcome::Stale);
        assert!(!mw.deadline_missed("colour"));
    }

    #[test]
    fn deadline_miss_when_no_newer_publication() {
        let mut mw = mw_one_topic(
            Qos { deadline_ms: Some(150.0), latency_budget_ms: None },
            LinkModel::default(),
        );
        let mut s = Script { jitters_ms: vec![0.0], drops: vec![] };
        let out = mw.publish("colour", "C3", "m1", Time::from_ms(0.0), &mut s).unwrap();
        let (_, g) = out.deadline_check.unwrap();
        assert_eq!(mw.deadline_check("colour", g).unwrap(), DeadlineOutcome::Missed);
        assert!(mw.deadline_missed("colour"));
    }

    #[test]
    fn fault_topics_live_in_reserved_namespace() {
        let mut mw = Middleware::new();
        let name = mw.ensure_fault_topic("C1");
        assert_eq!(name, "fault/C1");
        assert!(mw.has_topic("fault/C1"));
        // idempotent
        mw.ensure_fault_topic("C1");
    }

    #[test]
    fn qos_validation() {
        let mut mw = Middleware::new();
        assert!(matches!(
            mw.declare_topic(
                "t",
                Qos { deadline_ms: Some(0.0), latency_budget_ms: None },
                LinkModel::default()
            ),
            Err(MiddlewareError::BadQos { .. })
        ));
        assert!(matches!(
            mw.declare_topic(
                "t",
                Qos::default(),
                LinkModel { base_ms: 0.0, jitter_ms: 0.0, drop_prob: 1.5 }
            ),
            Err(MiddlewareError::BadQos { .. })
        ));
        mw.declare_topic("t", Qos::default(), LinkModel::default()).unwrap();
        assert!(matches!(
            mw.declare_topic("t", Qos::default(), LinkModel::default()),
            Err(MiddlewareError::DuplicateTopic(_))
        ));
        assert!(matches!(
            mw.subscribe("missing", "x"),
            Err(MiddlewareError::UnknownTopic(_))
        ));
    }
}
