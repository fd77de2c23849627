//! First-order servo with amplitude and rate limits.
//!
//! Two realizations are provided. [`ActuatorModel::Cascade`] chains the
//! blocks as separate stateful elements (lag, then rate limiter, then
//! amplitude saturation); the lag and rate limiter keep integrating while
//! the saturation clips, so the servo itself can wind up. This is the
//! benchmark default. [`ActuatorModel::ClampedLag`] folds everything into a
//! single state whose derivative and value are clamped, which never winds up.
//! [`ActuatorModel::Ideal`] passes the command straight through.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorParams {
    /// Lag time constant, s.
    pub tau: f64,
    /// Amplitude limit, deg. `f64::INFINITY` disables it.
    pub u_max: f64,
    /// Rate limit, deg/s. `f64::INFINITY` disables it.
    pub rate_max: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            tau: 0.1,
            u_max: 20.0,
            rate_max: 30.0,
        }
    }
}

impl ActuatorParams {
    /// Lag only, no amplitude or rate limit.
    pub fn unbounded(tau: f64) -> Self {
        Self {
            tau,
            u_max: f64::INFINITY,
            rate_max: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.u_max > 0.0) {
            return Err(Error::Config(format!("u_max must be > 0, got {}", self.u_max)));
        }
        if !(self.rate_max > 0.0) {
            return Err(Error::Config(format!("rate_max must be > 0, got {}", self.rate_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuatorModel {
    #[default]
    Cascade,
    ClampedLag,
    Ideal,
}

/// Servo memory. `u_ac` is the deflection seen by the plant; `lag` and
/// `limited` are the outputs of the lag and rate-limiter stages of the
/// cascade model (they track `u_ac` for the other models).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorState {
    pub u_ac: f64,
    pub lag: f64,
    pub limited: f64,
}

impl ActuatorState {
    pub fn at_rest(u_ac: f64) -> Self {
        Self {
            u_ac,
            lag: u_ac,
            limited: u_ac,
        }
    }
}

pub fn saturate(x: f64, limit: f64) -> f64 {
    x.clamp(-limit, limit)
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("actuator step must be > 0, got {h}")))
    }
}

/// Single-state clamped lag: the command is amplitude-limited, the lag
/// velocity is rate-limited and the integrated state is amplitude-limited.
pub fn actuator_step(state: ActuatorState, params: &ActuatorParams, u_c: f64, h: f64) -> Result<ActuatorState> {
    check_step(h)?;
    let desired = (saturate(u_c, params.u_max) - state.u_ac) / params.tau;
    let rate = saturate(desired, params.rate_max);
    let u_ac = saturate(state.u_ac + h * rate, params.u_max);
    Ok(ActuatorState::at_rest(u_ac))
}

/// Lag, then rate limiter, then amplitude saturation, each with its own state.
pub fn cascade_step(state: ActuatorState, params: &ActuatorParams, u_c: f64, h: f64) -> Result<ActuatorState> {
    check_step(h)?;
    let lag = u_c + (state.lag - u_c) * (-h / params.tau).exp();
    let limited = state.limited + saturate(lag - state.limited, params.rate_max * h);
    Ok(ActuatorState {
        u_ac: saturate(limited, params.u_max),
        lag,
        limited,
    })
}

/// A configured servo.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Actuator {
    pub params: ActuatorParams,
    pub model: ActuatorModel,
}

impl Actuator {
    pub fn new(params: ActuatorParams, model: ActuatorModel) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, model })
    }

    pub fn ideal() -> Self {
        Self {
            params: ActuatorParams::unbounded(1.0),
            model: ActuatorModel::Ideal,
        }
    }

    pub fn step(&self, state: ActuatorState, u_c: f64, h: f64) -> Result<ActuatorState> {
        match self.model {
            ActuatorModel::Cascade => cascade_step(state, &self.params, u_c, h),
            ActuatorModel::ClampedLag => actuator_step(state, &self.params, u_c, h),
            ActuatorModel::Ideal => {
                check_step(h)?;
                Ok(ActuatorState::at_rest(u_c))
            }
        }
    }

    /// Amplitude bound on `u_ac`, infinite for the ideal servo.
    pub fn amplitude_limit(&self) -> f64 {
        match self.model {
            ActuatorModel::Ideal => f64::INFINITY,
            _ => self.params.u_max,
        }
    }

    pub fn rate_limit(&self) -> f64 {
        match self.model {
            ActuatorModel::Ideal => f64::INFINITY,
            _ => self.params.rate_max,
        }
    }
}
