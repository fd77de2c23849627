//! Control laws: PD and LQI with deficiency feedback, the classic PID
//! anti-windup family, and the dynamic (modern) compensator.

mod classic;
mod lqi_aw;
mod maw;
mod pd_aw;

pub use classic::{classic_pid_step, AwMode, ClassicPid, ClassicPidState, PidGains};
pub use lqi_aw::{lqi_aw_step, LqiAw, LqiAwParams, LqiAwState};
pub use maw::{maw_step, MawCompensator};
pub use pd_aw::{notify_actuation, pd_aw_step, pd_aw_step_implicit, PdAw, PdAwParams, PdAwState};

use crate::error::Result;
use crate::mpc::MpcController;
use serde::{Deserialize, Serialize};

/// Everything a controller may read at a control tick.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub t: f64,
    pub r: f64,
    pub y: f64,
    /// Output rate `C A x`.
    pub ydot: f64,
    /// Measured plant state.
    pub x: &'a [f64],
    /// Servo output at the tick.
    pub u_ac: f64,
    /// Control period.
    pub ts: f64,
    /// Setpoints for the next samples, `preview[i]` at `t + (i + 1) ts`.
    /// Empty when the controller has no preview.
    pub preview: &'a [f64],
}

impl ControlInput<'_> {
    pub fn error(&self) -> f64 {
        self.r - self.y
    }
}

/// A sampled control law driven by the simulation loop.
pub trait ControlLaw {
    /// Command for the coming control period.
    fn update(&mut self, input: &ControlInput) -> Result<f64>;

    /// Servo input and output at the end of the period.
    fn notify_actuation(&mut self, u_c: f64, u_ac: f64);

    fn reset(&mut self);
}

/// How the deficiency `u_c - u_ac` enters a law whose command depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficiencyTiming {
    /// Solve `u_c = v - Kaw (u_c - u_ac)` with the servo output at the tick.
    #[default]
    Implicit,
    /// Use the deficiency recorded at the end of the previous period.
    /// Unstable once `Kaw > 1` and the servo saturates.
    Delayed,
}

#[derive(Debug, Clone)]
pub enum Controller {
    PdAw(PdAw),
    LqiAw(LqiAw),
    ClassicPid(ClassicPid),
    Mpc(Box<MpcController>),
}

impl Controller {
    pub fn kind(&self) -> &'static str {
        match self {
            Controller::PdAw(_) => "pd_aw",
            Controller::LqiAw(_) => "lqi_aw",
            Controller::ClassicPid(_) => "classic_pid",
            Controller::Mpc(_) => "mpc",
        }
    }

    /// Number of future setpoints the controller wants to see.
    pub fn preview_len(&self) -> usize {
        match self {
            Controller::Mpc(m) => m.preview_len(),
            _ => 0,
        }
    }

    fn law(&mut self) -> &mut dyn ControlLaw {
        match self {
            Controller::PdAw(c) => c,
            Controller::LqiAw(c) => c,
            Controller::ClassicPid(c) => c,
            Controller::Mpc(c) => c.as_mut(),
        }
    }
}

impl ControlLaw for Controller {
    fn update(&mut self, input: &ControlInput) -> Result<f64> {
        self.law().update(input)
    }

    fn notify_actuation(&mut self, u_c: f64, u_ac: f64) {
        self.law().notify_actuation(u_c, u_ac)
    }

    fn reset(&mut self) {
        self.law().reset()
    }
}
