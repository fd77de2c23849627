//! Multirate closed-loop executor: the controller runs every `ts`, the
//! servo and plant (RK4) every `h`.

use crate::actuation::{Actuator, ActuatorModel, ActuatorState};
use crate::control_math::{Matrix, StateSpace};
use crate::controllers::{ControlInput, ControlLaw, Controller};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Piecewise-constant setpoint profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// `(start_time, setpoint)` pairs, first start at 0.
    pub segments: Vec<(f64, f64)>,
    pub tf: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            segments: vec![(0.0, 0.0), (1.0, 150.0), (21.0, -150.0), (41.0, 100.0), (61.0, 50.0)],
            tf: 80.0,
        }
    }
}

impl Scenario {
    pub fn new(segments: Vec<(f64, f64)>, tf: f64) -> Result<Self> {
        let s = Self { segments, tf };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(setpoint: f64, tf: f64) -> Result<Self> {
        Self::new(vec![(0.0, setpoint)], tf)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::Config("scenario needs at least one segment".into()))?;
        if first.0 != 0.0 {
            return Err(Error::Config(format!("first segment must start at 0, got {}", first.0)));
        }
        if self.segments.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
            return Err(Error::Config("scenario values must be finite".into()));
        }
        if self.segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("segment start times must be strictly increasing".into()));
        }
        let last = self.segments.last().map(|s| s.0).unwrap_or(0.0);
        if !(self.tf > last) || !self.tf.is_finite() {
            return Err(Error::Config(format!("tf = {} must exceed the last segment start {last}", self.tf)));
        }
        Ok(())
    }

    pub fn setpoint_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.tf).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tf: self.tf });
        }
        Ok(self.lookup(t))
    }

    /// Like [`Self::setpoint_at`] but holds the end values outside `[0, tf]`.
    fn lookup(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|(start, _)| *start <= t);
        self.segments[idx.saturating_sub(1)].1
    }

    pub fn max_abs_setpoint(&self) -> f64 {
        self.segments.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max)
    }

    /// Start time and setpoint of the final segment, and the size of the
    /// step into it (the setpoint itself for a single-segment profile).
    pub fn final_step(&self) -> (f64, f64, f64) {
        let n = self.segments.len();
        let (start, r) = self.segments[n - 1];
        let before = if n > 1 { self.segments[n - 2].1 } else { 0.0 };
        (start, r, (r - before).abs())
    }
}

/// Where the loop-gain perturbation enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPoint {
    /// Scales the servo output before it reaches the plant.
    #[default]
    PlantInput,
    /// Scales the command before the servo.
    ControllerOutput,
}

/// Where the injected transport delay sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPoint {
    /// Between the servo output and the plant, outside the deficiency loop.
    #[default]
    PlantInput,
    /// Between the controller and the servo. The deficiency feedback then
    /// sees the delayed servo response and partly compensates for it.
    ControllerOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step, s.
    pub h: f64,
    /// Control period, s; an integer multiple of `h`.
    pub ts: f64,
    pub gain_scale: f64,
    /// Transport delay, s; rounded to whole control periods.
    pub injected_delay: f64,
    pub gain_point: GainPoint,
    pub delay_point: DelayPoint,
    /// Keep the servo output at every physics step in `SimLog::u_ac_fine`.
    pub trace_actuator: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            h: 0.001,
            ts: 0.01,
            gain_scale: 1.0,
            injected_delay: 0.0,
            gain_point: GainPoint::PlantInput,
            delay_point: DelayPoint::PlantInput,
            trace_actuator: false,
        }
    }
}

impl SimConfig {
    pub fn substeps(&self) -> Result<usize> {
        if !(self.h > 0.0 && self.ts > 0.0) {
            return Err(Error::Config(format!("h = {} and ts = {} must be > 0", self.h, self.ts)));
        }
        let ratio = self.ts / self.h;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("ts = {} is not an integer multiple of h = {}", self.ts, self.h)));
        }
        Ok(m as usize)
    }

    pub fn delay_samples(&self) -> usize {
        (self.injected_delay / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.substeps()?;
        if !(self.gain_scale > 0.0 && self.gain_scale.is_finite()) {
            return Err(Error::Config(format!("gain_scale must be > 0, got {}", self.gain_scale)));
        }
        if !(self.injected_delay >= 0.0 && self.injected_delay.is_finite()) {
            return Err(Error::Config(format!("injected_delay must be >= 0, got {}", self.injected_delay)));
        }
        Ok(())
    }
}

/// Signals sampled at the control rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimLog {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    /// Command issued at each tick (held over the following period).
    pub u_c: Vec<f64>,
    pub u_ac: Vec<f64>,
    pub e: Vec<f64>,
    pub diverged: bool,
    /// Plant state at the last logged tick.
    pub final_state: Vec<f64>,
    /// Servo output at every physics step, when traced.
    pub u_ac_fine: Option<Vec<f64>>,
    pub ts: f64,
}

impl SimLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Duration covered by the log.
    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    fn push(&mut self, t: f64, r: f64, y: f64, ydot: f64, u_c: f64, u_ac: f64) {
        self.t.push(t);
        self.r.push(r);
        self.y.push(y);
        self.ydot.push(ydot);
        self.u_c.push(u_c);
        self.u_ac.push(u_ac);
        self.e.push(r - y);
    }
}

/// Exact RK4 update for a linear model with input held over the step:
/// `x+ = M x + N u`.
struct Rk4Map {
    m: Matrix,
    n: Matrix,
}

impl Rk4Map {
    fn new(plant: &StateSpace, h: f64) -> Self {
        let dim = plant.states();
        let eye = Matrix::identity(dim, dim);
        let ha = &plant.a * h;
        let ha2 = &ha * &ha;
        let ha3 = &ha2 * &ha;
        let ha4 = &ha3 * &ha;
        let m = &eye + &ha + &ha2 / 2.0 + &ha3 / 6.0 + &ha4 / 24.0;
        let n = (&eye + &ha / 2.0 + &ha2 / 6.0 + &ha3 / 24.0) * &plant.b * h;
        Self { m, n }
    }

    fn apply(&self, x: &[f64], u: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.n[(i, 0)] * u;
            for (j, xj) in x.iter().enumerate() {
                acc += self.m[(i, j)] * xj;
            }
            *o = acc;
        }
    }
}

/// Runs the closed loop from rest over the whole scenario.
pub fn run_closed_loop(plant: &StateSpace, controller: &Controller, actuator: &Actuator, scenario: &Scenario, config: &SimConfig) -> Result<SimLog> {
    if !plant.is_siso() {
        return Err(Error::Dimension("closed loop needs a SISO plant".into()));
    }
    scenario.validate()?;
    config.validate()?;
    actuator.params.validate()?;
    let substeps = config.substeps()?;
    let ticks = (scenario.tf / config.ts + 1e-9).floor() as usize;
    let threshold = 3.0 * scenario.max_abs_setpoint();
    let rk4 = Rk4Map::new(plant, config.h);
    let output_rate: Vec<f64> = (&plant.c * &plant.a).row(0).iter().copied().collect();

    let mut controller = controller.clone();
    let preview_len = controller.preview_len();
    let mut preview = vec![0.0; preview_len];
    let delay = config.delay_samples();
    let (command_delay, servo_delay) = match config.delay_point {
        DelayPoint::ControllerOutput => (delay, 0),
        DelayPoint::PlantInput => (0, delay * substeps),
    };
    let mut fifo: VecDeque<f64> = std::iter::repeat_n(0.0, command_delay).collect();
    let mut servo_fifo: VecDeque<f64> = std::iter::repeat_n(0.0, servo_delay).collect();
    let mut x = vec![0.0; plant.states()];
    let mut next = x.clone();
    let mut servo = ActuatorState::default();
    let mut held = 0.0;

    let mut log = SimLog {
        ts: config.ts,
        ..Default::default()
    };
    let mut fine = config.trace_actuator.then(|| {
        let mut v = Vec::with_capacity(ticks * substeps + 1);
        v.push(0.0);
        v
    });

    for k in 0..=ticks {
        let t = k as f64 * config.ts;
        let r = scenario.lookup(t);
        let y = plant.output(&x);
        let ydot: f64 = output_rate.iter().zip(&x).map(|(c, xi)| c * xi).sum();

        let blown = x.iter().any(|v| !v.is_finite()) || (threshold > 0.0 && y.abs() > threshold);
        if blown || k == ticks {
            log.push(t, r, y, ydot, held, servo.u_ac);
            log.diverged = blown;
            break;
        }

        for (i, p) in preview.iter_mut().enumerate() {
            *p = scenario.lookup((t + (i + 1) as f64 * config.ts).min(scenario.tf));
        }
        let input = ControlInput {
            t,
            r,
            y,
            ydot,
            x: &x,
            u_ac: servo.u_ac,
            ts: config.ts,
            preview: &preview,
        };
        let u_c = controller.update(&input)?;
        log.push(t, r, y, ydot, u_c, servo.u_ac);
        held = u_c;

        fifo.push_back(u_c);
        let delayed = fifo.pop_front().unwrap_or(u_c);
        let (servo_in, plant_gain) = match config.gain_point {
            GainPoint::PlantInput => (delayed, config.gain_scale),
            GainPoint::ControllerOutput => (delayed * config.gain_scale, 1.0),
        };

        // the plant sees the mean servo output over each micro-step; the
        // ideal servo jumps to its input at the start of the step
        for _ in 0..substeps {
            let before = if actuator.model == ActuatorModel::Ideal { servo_in } else { servo.u_ac };
            servo = actuator.step(servo, servo_in, config.h)?;
            if let Some(f) = fine.as_mut() {
                f.push(servo.u_ac);
            }
            servo_fifo.push_back(0.5 * (before + servo.u_ac));
            let plant_in = servo_fifo.pop_front().unwrap_or(servo.u_ac);
            rk4.apply(&x, plant_gain * plant_in, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        controller.notify_actuation(u_c, servo.u_ac);
    }

    log.final_state = x;
    log.u_ac_fine = fine;
    Ok(log)
}
