//! Anti-windup control of amplitude- and rate-limited actuators: linear
//! algebra helpers, servo model, PD/LQI laws with deficiency feedback,
//! constrained MPC, a multirate simulator and benchmark metrics.

pub mod actuation;
pub mod analysis;
pub mod control_math;
pub mod controllers;
mod error;
pub mod mpc;
pub mod sim;

pub use error::{Error, Result};
