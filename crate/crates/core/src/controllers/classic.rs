use super::{ControlInput, ControlLaw};
use crate::actuation::saturate;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Integrator protection used by the classic cascade PID.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AwMode {
    #[default]
    None,
    /// The integral branch output is limited to `+-limit`.
    IntegralClipping { limit: f64 },
    /// Integration stops whenever the servo did not deliver the command.
    ConditionalIntegration,
    /// Integration stops when saturated and the error pushes further into
    /// the saturation (`sgn e = sgn u_c`).
    IntegratorClamping,
    /// The integrator input is `e - kaw (u_c - u_ac)`.
    BackCalculation { kaw: f64 },
}

impl AwMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AwMode::IntegralClipping { limit } if !(limit > 0.0) => Err(Error::Config(format!("integral clipping limit must be > 0, got {limit}"))),
            AwMode::BackCalculation { kaw } if !kaw.is_finite() => Err(Error::Config("back-calculation gain must be finite".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Deficiencies `|u_c - u_ac|` at or below this are treated as "not
    /// saturated" by the freezing modes. A lagging servo never delivers the
    /// command exactly, so an exact comparison would freeze permanently.
    pub saturation_tolerance: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 8.0,
            ki: 1.0,
            kd: 6.0,
            saturation_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassicPidState {
    /// Integral of the (possibly corrected) error, deg s.
    pub integral: f64,
}

/// One sample of the cascade PID `u_c = Kp e + I - Kd ydot` with the
/// integral branch handled per `mode`. `u_c_prev`/`u_ac_prev` are the
/// command and servo output of the previous period.
#[allow(clippy::too_many_arguments)]
pub fn classic_pid_step(
    state: ClassicPidState,
    gains: &PidGains,
    mode: AwMode,
    e: f64,
    ydot: f64,
    u_c_prev: f64,
    u_ac_prev: f64,
    ts: f64,
) -> (f64, ClassicPidState) {
    let deficiency = u_c_prev - u_ac_prev;
    let saturated = deficiency.abs() > gains.saturation_tolerance;
    let integral = match mode {
        AwMode::None | AwMode::IntegralClipping { .. } => state.integral + ts * e,
        AwMode::ConditionalIntegration if saturated => state.integral,
        AwMode::IntegratorClamping if saturated && e.signum() == u_c_prev.signum() => state.integral,
        AwMode::ConditionalIntegration | AwMode::IntegratorClamping => state.integral + ts * e,
        AwMode::BackCalculation { kaw } => state.integral + ts * (e - kaw * deficiency),
    };
    let (i_term, integral) = match mode {
        AwMode::IntegralClipping { limit } => {
            let out = saturate(gains.ki * integral, limit);
            // hold the state at the limit instead of integrating behind it
            let held = if gains.ki != 0.0 { out / gains.ki } else { integral };
            (out, held)
        }
        _ => (gains.ki * integral, integral),
    };
    let u_c = gains.kp * e + i_term - gains.kd * ydot;
    (u_c, ClassicPidState { integral })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicPid {
    pub gains: PidGains,
    pub mode: AwMode,
    pub state: ClassicPidState,
    u_c_prev: f64,
    u_ac_prev: f64,
}

impl ClassicPid {
    pub fn new(gains: PidGains, mode: AwMode) -> Result<Self> {
        mode.validate()?;
        Ok(Self {
            gains,
            mode,
            state: ClassicPidState::default(),
            u_c_prev: 0.0,
            u_ac_prev: 0.0,
        })
    }
}

impl ControlLaw for ClassicPid {
    fn update(&mut self, input: &ControlInput) -> Result<f64> {
        let (u_c, state) = classic_pid_step(
            self.state,
            &self.gains,
            self.mode,
            input.error(),
            input.ydot,
            self.u_c_prev,
            self.u_ac_prev,
            input.ts,
        );
        self.state = state;
        Ok(u_c)
    }

    fn notify_actuation(&mut self, u_c: f64, u_ac: f64) {
        self.u_c_prev = u_c;
        self.u_ac_prev = u_ac;
    }

    fn reset(&mut self) {
        self.state = ClassicPidState::default();
        self.u_c_prev = 0.0;
        self.u_ac_prev = 0.0;
    }
}
