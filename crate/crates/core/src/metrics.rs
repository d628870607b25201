//! Quantitative resilience metrics over piecewise-constant signals.
//!
//! Availability, demand, performance and utilization are all step traces:
//! right-open segments `[start, end)` carrying a constant value. Performance
//! is 1 when availability meets demand and degrades proportionally below it;
//! utilization is 1 when capacity is not wasted and degrades proportionally
//! above demand. Resilience is the time-normalized integral of the ratio
//! between the performance under fault and the fault-free performance.

use std::fmt::Write as _;

use thiserror::Error;

use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace segments must be contiguous and non-decreasing in time")]
    MalformedTrace,
    #[error("window [{tx}, {ty}) is empty or outside the trace")]
    BadWindow { tx: Time, ty: Time },
    #[error("ratio undefined at {at}: reference performance is 0 while faulty is {faulty}")]
    UndefinedRatio { at: Time, faulty: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One constant segment of a step trace, over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Time,
    pub end: Time,
    pub value: f64,
}

/// A piecewise-constant, right-open signal with contiguous segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace {
    segments: Vec<Segment>,
}

impl StepTrace {
    /// Builds a trace from change points `(time, value)` (strictly increasing
    /// times, first at the trace start) extended to `end`.
    pub fn from_points(points: &[(Time, f64)], end: Time) -> Result<Self, MetricsError> {
        if points.is_empty() {
            return Err(MetricsError::EmptyTrace);
        }
        let mut segments = Vec::with_capacity(points.len());
        for (i, &(t, v)) in points.iter().enumerate() {
            let seg_end = points.get(i + 1).map(|&(n, _)| n).unwrap_or(end);
            if seg_end < t || (i + 1 < points.len() && seg_end == t) {
                return Err(MetricsError::MalformedTrace);
            }
            if seg_end > t {
                segments.push(Segment { start: t, end: seg_end, value: v });
            }
        }
        if segments.is_empty() {
            return Err(MetricsError::EmptyTrace);
        }
        Ok(StepTrace { segments })
    }

    /// Constant trace over `[start, end)`.
    pub fn constant(value: f64, start: Time, end: Time) -> Result<Self, MetricsError> {
        Self::from_points(&[(start, value)], end)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> Time {
        self.segments.first().map(|s| s.start).unwrap_or(Time::ZERO)
    }

    pub fn end(&self) -> Time {
        self.segments.last().map(|s| s.end).unwrap_or(Time::ZERO)
    }

    /// Value at time `t` (defined on `[start, end)`).
    pub fn value_at(&self, t: Time) -> Option<f64> {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map(|s| s.value)
    }

    /// Pointwise combination of two traces over the intersection of their
    /// domains, splitting at the union of their breakpoints.
    pub fn zip_with<F>(&self, other: &StepTrace, mut f: F) -> Result<StepTrace, MetricsError>
    where
        F: FnMut(Time, f64, f64) -> Result<f64, MetricsError>,
    {
        let start = self.start().max(other.start());
        let end = self.end().min(other.end());
        if start >= end {
            return Err(MetricsError::BadWindow { tx: start, ty: end });
        }
        let mut cuts: Vec<Time> = self
            .segments
            .iter()
            .chain(other.segments.iter())
            .flat_map(|s| [s.start, s.end])
            .filter(|&t| t >= start && t <= end)
            .chain([start, end])
            .collect();
        cuts.sort();
        cuts.dedup();
        let mut segments = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let va = self.value_at(a).ok_or(MetricsError::MalformedTrace)?;
            let vb = other.value_at(a).ok_or(MetricsError::MalformedTrace)?;
            let v = f(a, va, vb)?;
            match segments.last_mut() {
                Some(Segment { end, value, .. }) if *end == a && *value == v => *end = b,
                _ => segments.push(Segment { start: a, end: b, value: v }),
            }
        }
        Ok(StepTrace { segments })
    }

    /// Integral of the trace over `[tx, ty)` in value-seconds.
    pub fn integral(&self, tx: Time, ty: Time) -> Result<f64, MetricsError> {
        if tx >= ty || tx < self.start() || ty > self.end() {
            return Err(MetricsError::BadWindow { tx, ty });
        }
        let mut acc = 0.0;
        for s in &self.segments {
            let lo = s.start.max(tx);
            let hi = s.end.min(ty);
            if lo < hi {
                acc += s.value * (hi - lo).as_secs();
            }
        }
        Ok(acc)
    }

    /// Serializes as one `start_tick,end_tick,value` line per segment.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let _ = writeln!(out, "{},{},{}", s.start.ticks(), s.end.ticks(), s.value);
        }
        out
    }

    /// Parses the `start_tick,end_tick,value` line format.
    pub fn from_file_string(text: &str) -> Result<Self, MetricsError> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let err = |msg: &str| MetricsError::Parse { line: i + 1, msg: msg.to_string() };
            if parts.len() != 3 {
                return Err(err("expected start_tick,end_tick,value"));
            }
            let start: u64 = parts[0].trim().parse().map_err(|_| err("bad start tick"))?;
            let end: u64 = parts[1].trim().parse().map_err(|_| err("bad end tick"))?;
            let value: f64 = parts[2].trim().parse().map_err(|_| err("bad value"))?;
            segments.push(Segment {
                start: Time::from_ticks(start),
                end: Time::from_ticks(end),
                value,
            });
        }
        if segments.is_empty() {
            return Err(MetricsError::EmptyTrace);
        }
        for w in segments.windows(2) {
            if w[0].end != w[1].start {
                return Err(MetricsError::MalformedTrace);
            }
        }
        if segments.iter().any(|s| s.start >= s.end) {
            return Err(MetricsError::MalformedTrace);
        }
        Ok(StepTrace { segments })
    }
}

/// Performance from availability and demand: 1 when supply covers demand,
/// otherwise the fraction `a/d` of demand served.
pub fn performance(avail: &StepTrace, demand: &StepTrace) -> Result<StepTrace, MetricsError> {
    avail.zip_with(demand, |_, a, d| Ok(if a - d >= 0.0 { 1.0 } else { a / d }))
}

/// Utilization from availability and demand: 1 when no capacity is wasted,
/// otherwise the fraction `d/a` of supply used.
pub fn utilization(avail: &StepTrace, demand: &StepTrace) -> Result<StepTrace, MetricsError> {
    avail.zip_with(demand, |_, a, d| Ok(if a <= d { 1.0 } else { d / a }))
}

/// Resilience over `[tx, ty)`: the time-normalized integral of the pointwise
/// ratio between performance under fault and fault-free performance. Both
/// zero counts as a ratio of 1; a zero reference with nonzero faulty
/// performance is an error.
pub fn resilience(
    p_fault: &StepTrace,
    p_norm: &StepTrace,
    tx: Time,
    ty: Time,
) -> Result<f64, MetricsError> {
    if tx >= ty {
        return Err(MetricsError::BadWindow { tx, ty });
    }
    let ratio = p_fault.zip_with(p_norm, |at, f, n| {
        if n == 0.0 {
            if f == 0.0 {
                Ok(1.0)
            } else {
                Err(MetricsError::UndefinedRatio { at, faulty: f })
            }
        } else {
            Ok(f / n)
        }
    })?;
    Ok(ratio.integral(tx, ty)? / (ty - tx).as_secs())
}

/// Recovery durations of a closed fault episode, measured both from fault
/// injection (`t0`) and from detection (`t1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryPeriod {
    pub from_fault: Time,
    pub from_detection: Time,
}

pub fn recovery_period(
    t0: Time,
    t1: Time,
    recovered_at: Time,
) -> Result<RecoveryPeriod, MetricsError> {
    if t1 < t0 || recovered_at < t1 {
        return Err(MetricsError::BadWindow { tx: t0, ty: recovered_at });
    }
    Ok(RecoveryPeriod {
        from_fault: recovered_at - t0,
        from_detection: recovered_at - t1,
    })
}
