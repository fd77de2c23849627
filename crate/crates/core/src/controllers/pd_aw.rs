use super::{ControlInput, ControlLaw, DeficiencyTiming};
use crate::error::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdAwParams {
    pub kp: f64,
    pub kd: f64,
    /// Gain on the control deficiency `u_c - u_ac`.
    pub kaw: f64,
}

impl Default for PdAwParams {
    fn default() -> Self {
        Self { kp: 8.0, kd: 6.0, kaw: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PdAwState {
    /// Deficiency `u_c - u_ac` recorded at the end of the previous period.
    pub delta_u_prev: f64,
}

/// `u_c = Kp e - Kd ydot - Kaw du_prev` with the deficiency from the
/// previous control period.
pub fn pd_aw_step(state: PdAwState, params: &PdAwParams, e: f64, ydot: f64) -> (f64, PdAwState) {
    let u_c = params.kp * e - params.kd * ydot - params.kaw * state.delta_u_prev;
    (u_c, state)
}

/// Same law with the deficiency taken at the current instant,
/// `u_c = Kp e - Kd ydot - Kaw (u_c - u_ac)`, solved for `u_c`.
pub fn pd_aw_step_implicit(params: &PdAwParams, e: f64, ydot: f64, u_ac: f64) -> f64 {
    (params.kp * e - params.kd * ydot + params.kaw * u_ac) / (1.0 + params.kaw)
}

/// Records the deficiency for the next period.
pub fn notify_actuation(state: PdAwState, u_c: f64, u_ac: f64) -> PdAwState {
    let mut next = state;
    next.delta_u_prev = u_c - u_ac;
    next
}

/// Cascade PD with deficiency feedback on its output.
#[derive(Debug, Clone, PartialEq)]
pub struct PdAw {
    pub params: PdAwParams,
    pub timing: DeficiencyTiming,
    pub state: PdAwState,
}

impl PdAw {
    pub fn new(params: PdAwParams, timing: DeficiencyTiming) -> Self {
        Self {
            params,
            timing,
            state: PdAwState::default(),
        }
    }
}

impl ControlLaw for PdAw {
    fn update(&mut self, input: &ControlInput) -> Result<f64> {
        let e = input.error();
        Ok(match self.timing {
            DeficiencyTiming::Delayed => pd_aw_step(self.state, &self.params, e, input.ydot).0,
            DeficiencyTiming::Implicit => pd_aw_step_implicit(&self.params, e, input.ydot, input.u_ac),
        })
    }

    fn notify_actuation(&mut self, u_c: f64, u_ac: f64) {
        self.state = notify_actuation(self.state, u_c, u_ac);
    }

    fn reset(&mut self) {
        self.state = PdAwState::default();
    }
}
