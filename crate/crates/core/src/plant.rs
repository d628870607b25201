//! Physical model of the assembly-line sorter.
//!
//! A stepper-driven conveyor carries pieces past a light barrier at the
//! inlet, a colour sensor a fixed number of steps downstream, and three
//! pneumatic ejectors further along, one per sorting bin. Positions are
//! measured in belt steps from the inlet; the belt advances one step per
//! motor pulse, so a piece's position is the global step count minus the
//! count at entry.
//!
//! The plant is passive: the simulation drives it with motor pulses, piece
//! arrivals and ejector firings, and reads back what the sensors saw. All
//! randomness (sensor value draws, light-barrier contact bounce) is sampled
//! through caller-provided draw closures so a seeded run stays reproducible.

use thiserror::Error;

use crate::contract::Interval;
use crate::time::Time;

#[derive(Debug, Error, PartialEq)]
pub enum PlantError {
    #[error("invalid plant geometry: {0}")]
    BadGeometry(String),
    #[error("no ejector lane {0}")]
    BadLane(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colour {
    Red,
    Blue,
    White,
    /// A piece whose reading falls outside every calibrated class.
    Outlier,
}

impl Colour {
    pub fn as_str(&self) -> &'static str {
        match self {
            Colour::Red => "red",
            Colour::Blue => "blue",
            Colour::White => "white",
            Colour::Outlier => "outlier",
        }
    }
}

/// Calibrated reflectance ranges of the colour sensor, plus the band the
/// sensor reports for anything it cannot classify.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadingModel {
    pub red: Interval,
    pub blue: Interval,
    pub white: Interval,
    pub outlier: Interval,
}

impl Default for ReadingModel {
    fn default() -> Self {
        ReadingModel {
            red: Interval { lo: 568.0, hi: 590.0 },
            blue: Interval { lo: 750.0, hi: 755.0 },
            white: Interval { lo: 535.0, hi: 558.0 },
            outlier: Interval { lo: 600.0, hi: 740.0 },
        }
    }
}

impl ReadingModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        let classes = [self.red, self.blue, self.white];
        for iv in classes.iter().chain([&self.outlier]) {
            if iv.lo > iv.hi {
                return Err(PlantError::BadGeometry(format!(
                    "reading interval [{}, {}] is empty",
                    iv.lo, iv.hi
                )));
            }
        }
        if classes
            .iter()
            .any(|iv| iv.contains(self.outlier.lo) || iv.contains(self.outlier.hi))
        {
            return Err(PlantError::BadGeometry(
                "outlier band overlaps a colour class".to_string(),
            ));
        }
        Ok(())
    }

    /// Draws a sensor value for a piece's true colour; `uniform(lo, hi)` is
    /// the caller's seeded sampler.
    pub fn draw(&self, colour: Colour, uniform: &mut dyn FnMut(f64, f64) -> f64) -> f64 {
        let iv = match colour {
            Colour::Red => self.red,
            Colour::Blue => self.blue,
            Colour::White => self.white,
            Colour::Outlier => self.outlier,
        };
        uniform(iv.lo, iv.hi)
    }
}

/// Conveyor geometry and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    /// Colour sensor position, in steps from the inlet barrier.
    pub colour_sensor_step: u64,
    /// Ejector positions, in steps from the inlet, one per bin.
    pub ejector_steps: Vec<u64>,
    /// Belt step (motor pulse) period.
    pub step_period: Time,
    pub readings: ReadingModel,
    /// Light-barrier contact bounce: up to `max_extra` spurious re-triggers
    /// within `window_ms` of a real edge.
    pub bounce_max_extra: u32,
    pub bounce_window_ms: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            colour_sensor_step: 7,
            ejector_steps: vec![25, 34, 41],
            step_period: Time::from_ms(150.0),
            readings: ReadingModel::default(),
            bounce_max_extra: 0,
            bounce_window_ms: 2.0,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if self.step_period.ticks() == 0 {
            return Err(PlantError::BadGeometry("step period must be positive".into()));
        }
        if self.ejector_steps.is_empty() {
            return Err(PlantError::BadGeometry("at least one ejector".into()));
        }
        let mut prev = self.colour_sensor_step;
        for &e in &self.ejector_steps {
            if e <= prev {
                return Err(PlantError::BadGeometry(
                    "ejectors must lie strictly beyond the colour sensor, in order".into(),
                ));
            }
            prev = e;
        }
        self.readings.validate()
    }
}

/// Where a piece ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PieceFate {
    OnBelt,
    /// Diverted into bin `lane` at `at`; `offset_steps` is the firing offset
    /// from the centre of the ejector window, in steps (|x| <= 0.5 is a hit
    /// window; 0 is a perfectly centred shot).
    Sorted { lane: usize, at: Time, offset_steps: f64 },
    /// Ran off the end of the belt unsorted.
    PassedEnd { at: Time },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub id: u64,
    pub colour: Colour,
    pub entered_at: Time,
    /// Global step count when the piece crossed the inlet barrier.
    pub entry_step: u64,
    pub fate: PieceFate,
}

impl Piece {
    /// Position in steps from the inlet at global step `global`.
    fn position(&self, global: u64) -> u64 {
        global.saturating_sub(self.entry_step)
    }
}

/// What the plant reports back for one stimulus.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantEvent {
    /// The inlet barrier saw an edge (a real piece; bounce edges are
    /// reported separately by [`Plant::arrival_edges`]).
    InletDetected { piece: u64 },
    /// A piece reached the colour sensor window.
    AtColourSensor { piece: u64, colour: Colour },
    /// A piece ran past the last ejector unsorted.
    PassedEnd { piece: u64 },
}

/// Outcome of firing an ejector.
#[derive(Debug, Clone, PartialEq)]
pub enum EjectOutcome {
    Hit { piece: u64, offset_steps: f64 },
    /// Nothing in front of the nozzle.
    Miss,
}

#[derive(Debug, Clone)]
pub struct Plant {
    pub config: PlantConfig,
    global_step: u64,
    last_step_at: Time,
    next_id: u64,
    pub pieces: Vec<Piece>,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Result<Self, PlantError> {
        config.validate()?;
        Ok(Plant {
            config,
            global_step: 0,
            last_step_at: Time::ZERO,
            next_id: 1,
            pieces: Vec::new(),
        })
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn piece(&self, id: u64) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.id == id)
    }

    /// A piece crosses the inlet barrier at `now`.
    pub fn add_piece(&mut self, colour: Colour, now: Time) -> PlantEvent {
        let id = self.next_id;
        self.next_id += 1;
        self.pieces.push(Piece {
            id,
            colour,
            entered_at: now,
            entry_step: self.global_step,
            fate: PieceFate::OnBelt,
        });
        PlantEvent::InletDetected { piece: id }
    }

    /// Offsets (from the real edge) of the spurious barrier re-triggers for
    /// one arrival; `uniform` is the caller's seeded sampler.
    pub fn arrival_edges(&self, uniform: &mut dyn FnMut(f64, f64) -> f64) -> Vec<Time> {
        if self.config.bounce_max_extra == 0 {
            return vec![];
        }
        let extra = uniform(0.0, self.config.bounce_max_extra as f64 + 1.0) as u32;
        let extra = extra.min(self.config.bounce_max_extra);
        (0..extra)
            .map(|_| Time::from_ms(uniform(0.05, self.config.bounce_window_ms)))
            .collect()
    }

    /// One motor pulse at `now`: the belt advances one step and pieces newly
    /// aligned with the colour sensor or fallen off the end are reported.
    pub fn motor_step(&mut self, now: Time) -> Vec<PlantEvent> {
        self.global_step += 1;
        self.last_step_at = now;
        let global = self.global_step;
        let sensor = self.config.colour_sensor_step;
        let end = *self.config.ejector_steps.last().expect("validated") + 1;
        let mut out = Vec::new();
        for p in &mut self.pieces {
            if p.fate != PieceFate::OnBelt {
                continue;
            }
            let pos = p.position(global);
            if pos == sensor {
                out.push(PlantEvent::AtColourSensor { piece: p.id, colour: p.colour });
            } else if pos > end {
                p.fate = PieceFate::PassedEnd { at: now };
                out.push(PlantEvent::PassedEnd { piece: p.id });
            }
        }
        out
    }

    /// Draws the colour-sensor value for a piece's true colour.
    pub fn draw_reading(
        &self,
        colour: Colour,
        uniform: &mut dyn FnMut(f64, f64) -> f64,
    ) -> f64 {
        self.config.readings.draw(colour, uniform)
    }

    /// Fires ejector `lane` at `now`. Hits and diverts the piece currently
    /// in front of the nozzle, if any.
    pub fn fire_ejector(&mut self, lane: usize, now: Time) -> Result<EjectOutcome, PlantError> {
        let target = *self
            .config
            .ejector_steps
            .get(lane)
            .ok_or(PlantError::BadLane(lane))?;
        let global = self.global_step;
        let period = self.config.step_period;
        let last_step_at = self.last_step_at;
        for p in &mut self.pieces {
            if p.fate == PieceFate::OnBelt && p.position(global) == target {
                // the piece entered the window at the last pulse; offset is
                // measured from the window centre in steps
                let into_window = (now.saturating_sub(last_step_at)).as_ms()
                    / period.as_ms();
                let offset_steps = into_window - 0.5;
                p.fate = PieceFate::Sorted { lane, at: now, offset_steps };
                return Ok(EjectOutcome::Hit { piece: p.id, offset_steps });
            }
        }
        Ok(EjectOutcome::Miss)
    }
}

/// Reservoir pressure of the pneumatic supply: exponential flow
/// `dp/dt = k1 * p`, `p(0) = k2`, with an optional fault that rescales the
/// rate from a given instant (a leak or compressor loss).
#[derive(Debug, Clone, PartialEq)]
pub struct PressureModel {
    pub k1_per_s: f64,
    pub k2: f64,
    pub fault: Option<(Time, f64)>,
}

impl PressureModel {
    pub fn value_at(&self, t: Time) -> f64 {
        match self.fault {
            Some((t0, rate_scale)) if t >= t0 => {
                let p0 = self.k2 * (self.k1_per_s * t0.as_secs()).exp();
                p0 * (self.k1_per_s * rate_scale * (t - t0).as_secs()).exp()
            }
            _ => self.k2 * (self.k1_per_s * t.as_secs()).exp(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> Plant {
        Plant::new(PlantConfig::default()).unwrap()
    }

    fn pulse_until(p: &mut Plant, steps: u64, out: &mut Vec<(u64, PlantEvent)>) {
        for _ in 0..steps {
            let t = Time::from_ms(150.0 * (p.global_step() + 1) as f64);
            for ev in p.motor_step(t) {
                out.push((p.global_step(), ev));
            }
        }
    }

    #[test]
    fn piece_reaches_colour_sensor_after_seven_steps() {
        let mut p = plant();
        // belt already ran 12 steps before the piece arrives
        let mut sink = Vec::new();
        pulse_until(&mut p, 12, &mut sink);
        let ev = p.add_piece(Colour::Red, Time::from_ms(1810.0));
        assert_eq!(ev, PlantEvent::InletDetected { piece: 1 });
        sink.clear();
        pulse_until(&mut p, 7, &mut sink);
        assert_eq!(
            sink.last(),
            Some(&(19, PlantEvent::AtColourSensor { piece: 1, colour: Colour::Red }))
        );
    }

    #[test]
    fn eject_hits_only_in_the_position_window() {
        let mut p = plant();
        p.add_piece(Colour::Red, Time::ZERO);
        let mut sink = Vec::new();
        pulse_until(&mut p, 25, &mut sink);
        // piece is at step 25 = lane 0; fire mid-window
        let t = Time::from_ms(150.0 * 25.0 + 75.0);
        match p.fire_ejector(0, t).unwrap() {
            EjectOutcome::Hit { piece, offset_steps } => {
                assert_eq!(piece, 1);
                assert!(offset_steps.abs() < 1e-9);
            }
            o => panic!("expected hit, got {o:?}"),
        }
        // a second shot finds nothing
        assert_eq!(p.fire_ejector(0, t).unwrap(), EjectOutcome::Miss);
    }

    #[test]
    fn eject_at_wrong_lane_misses_and_piece_passes_end() {
        let mut p = plant();
        p.add_piece(Colour::Blue, Time::ZERO);
        let mut sink = Vec::new();
        pulse_until(&mut p, 25, &mut sink);
        assert_eq!(p.fire_ejector(2, Time::from_ms(3760.0)).unwrap(), EjectOutcome::Miss);
        sink.clear();
        pulse_until(&mut p, 20, &mut sink);
        assert!(sink
            .iter()
            .any(|(_, ev)| matches!(ev, PlantEvent::PassedEnd { piece: 1 })));
        assert!(matches!(p.piece(1).unwrap().fate, PieceFate::PassedEnd { .. }));
    }

    #[test]
    fn offset_reflects_firing_time_within_window() {
        let mut p = plant();
        p.add_piece(Colour::White, Time::ZERO);
        let mut sink = Vec::new();
        pulse_until(&mut p, 41, &mut sink);
        // fire 30 ms into the 150 ms window: offset = 30/150 - 0.5 = -0.3
        let t = Time::from_ms(150.0 * 41.0 + 30.0);
        match p.fire_ejector(2, t).unwrap() {
            EjectOutcome::Hit { offset_steps, .. } => {
                assert!((offset_steps + 0.3).abs() < 1e-9, "offset {offset_steps}");
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn readings_fall_in_the_class_interval() {
        let p = plant();
        let mut mid = |lo: f64, hi: f64| (lo + hi) / 2.0;
        for (colour, iv) in [
            (Colour::Red, p.config.readings.red),
            (Colour::Blue, p.config.readings.blue),
            (Colour::White, p.config.readings.white),
        ] {
            let v = p.draw_reading(colour, &mut mid);
            assert!(iv.contains(v));
        }
        let v = p.draw_reading(Colour::Outlier, &mut mid);
        for iv in [p.config.readings.red, p.config.readings.blue, p.config.readings.white] {
            assert!(!iv.contains(v), "outlier reading {v} inside {iv:?}");
        }
    }

    #[test]
    fn geometry_validation() {
        let mut cfg = PlantConfig::default();
        cfg.ejector_steps = vec![5];
        assert!(Plant::new(cfg).is_err());
        let mut cfg = PlantConfig::default();
        cfg.ejector_steps = vec![25, 25];
        assert!(Plant::new(cfg).is_err());
        let mut cfg = PlantConfig::default();
        cfg.readings.outlier = Interval { lo: 580.0, hi: 600.0 };
        assert!(Plant::new(cfg).is_err());
    }

    #[test]
    fn bounce_edges_respect_the_window() {
        let mut cfg = PlantConfig::default();
        cfg.bounce_max_extra = 2;
        let p = Plant::new(cfg).unwrap();
        let mut hi_draw = |lo: f64, hi: f64| lo + (hi - lo) * 0.999;
        let edges = p.arrival_edges(&mut hi_draw);
        assert_eq!(edges.len(), 2);
        for e in edges {
            assert!(e <= Time::from_ms(2.0) && e >= Time::from_ms(0.05));
        }
    }

    #[test]
    fn pressure_follows_the_flow_and_the_fault_rescales_it() {
        let m = PressureModel { k1_per_s: -0.5, k2: 100.0, fault: None };
        let exact = 100.0 * (-0.5f64 * 2.0).exp();
        assert!((m.value_at(Time::from_secs(2.0)) - exact).abs() < 1e-9);
        let m = PressureModel { k1_per_s: -0.5, k2: 100.0, fault: Some((Time::from_secs(1.0), 4.0)) };
        // continuous at the fault instant, steeper after
        let p1 = m.value_at(Time::from_secs(1.0));
        assert!((p1 - 100.0 * (-0.5f64).exp()).abs() < 1e-9);
        let p2 = m.value_at(Time::from_secs(2.0));
        assert!((p2 - p1 * (-2.0f64).exp()).abs() < 1e-9);
    }
}
