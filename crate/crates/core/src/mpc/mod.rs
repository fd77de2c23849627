//! Constrained MPC over control increments.
//!
//! The cost `sum (r - y)^2 + lambda du^2` is condensed into a QP over the
//! increment vector and solved each period, by default with
//! [`ActiveSetSolver`]. The Hessian never changes, so it is factored once
//! per controller.

mod active_set;
mod prediction;
mod qp;

pub use active_set::{ActiveSetSolver, Side, WarmStart};
pub use prediction::{build_prediction, increment_model, prediction_model, with_actuator_lag, PredictionMatrices};
pub use qp::{solve_qp, solve_qp_with, AmplitudeRows, HildrethSolver, QpMethod, QpProblem, QpSolution, Row, MAX_ITERATIONS, MULTIPLIER_TOLERANCE};

use crate::control_math::{Matrix, StateSpace};
use crate::controllers::{ControlInput, ControlLaw};
use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// How future setpoints are presented to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviewPolicy {
    /// The current setpoint is held over the whole horizon.
    #[default]
    None,
    /// The next `Ny` scheduled setpoints are known.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcParams {
    pub ts: f64,
    pub ny: usize,
    /// Free increments; the command is held after the first `nu` moves.
    /// A short control horizon keeps the loop gentle and delay tolerant.
    pub nu: usize,
    pub lambda: f64,
    pub u_max: f64,
    /// Bound on one increment, deg per sample.
    pub du_max: f64,
    /// Predict through the servo lag as well as the plant.
    pub model_actuator_lag: bool,
    pub preview: PreviewPolicy,
    pub solver: QpMethod,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            ts: 0.01,
            ny: 120,
            nu: 2,
            lambda: 0.1,
            u_max: 20.0,
            du_max: 30.0 * 0.01,
            model_actuator_lag: true,
            preview: PreviewPolicy::None,
            solver: QpMethod::ActiveSet,
        }
    }
}

impl MpcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) {
            return Err(Error::Config(format!("mpc ts must be > 0, got {}", self.ts)));
        }
        if self.nu < 1 || self.nu > self.ny {
            return Err(Error::Config(format!("need 1 <= nu <= ny, got nu = {}, ny = {}", self.nu, self.ny)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.u_max > 0.0) || !(self.du_max > 0.0) {
            return Err(Error::Config("u_max and du_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Assembles the QP for state `xi`, setpoint trajectory `r_traj` and the
/// previously applied input.
pub fn build_qp(pred: &PredictionMatrices, xi: &DVector<f64>, r_traj: &DVector<f64>, u_prev: f64, params: &MpcParams) -> Result<QpProblem> {
    if r_traj.len() != pred.horizon() || xi.len() != pred.phi.ncols() {
        return Err(Error::Dimension(format!(
            "state has {} entries and setpoints {}, prediction expects {} and {}",
            xi.len(),
            r_traj.len(),
            pred.phi.ncols(),
            pred.horizon()
        )));
    }
    let nu = pred.control_horizon();
    let gt = pred.g.transpose();
    let h = (&gt * &pred.g + Matrix::identity(nu, nu) * params.lambda) * 2.0;
    let f = gt * (&pred.phi * xi - r_traj) * 2.0;
    Ok(QpProblem {
        h,
        f,
        du_max: params.du_max,
        amplitude: Some(AmplitudeRows { u_prev, u_max: params.u_max }),
    })
}

/// Receding-horizon controller with warm-started multipliers.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub params: MpcParams,
    pred: PredictionMatrices,
    /// `2 G'` cached for the gradient.
    two_gt: Matrix,
    solver: Engine,
    multipliers: Vec<f64>,
    /// Previous optimal increments shifted one sample.
    shifted_du: Option<DVector<f64>>,
    warm_start: bool,
    u_prev: f64,
    with_lag: bool,
    pub stats: MpcStats,
}

#[derive(Debug, Clone)]
enum Engine {
    Hildreth(HildrethSolver),
    ActiveSet(ActiveSetSolver),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpcStats {
    pub solves: usize,
    pub total_iterations: usize,
    /// Solves that hit the iteration cap.
    pub degraded: usize,
}

impl MpcController {
    /// `actuator_tau` is only used when `params.model_actuator_lag` is set.
    pub fn new(plant: &StateSpace, actuator_tau: f64, params: MpcParams) -> Result<Self> {
        params.validate()?;
        let with_lag = params.model_actuator_lag;
        let model = prediction_model(plant, params.ts, with_lag.then_some(actuator_tau))?;
        let pred = build_prediction(&model, params.ny, params.nu)?;
        let nu = params.nu;
        let two_gt = pred.g.transpose() * 2.0;
        let h = (&two_gt * &pred.g) + Matrix::identity(nu, nu) * (2.0 * params.lambda);
        let rows = (0..nu).map(Row::Unit).chain((1..=nu).map(Row::Prefix)).collect();
        let solver = match params.solver {
            QpMethod::Hildreth => Engine::Hildreth(HildrethSolver::new(&h, rows)?),
            QpMethod::ActiveSet => Engine::ActiveSet(ActiveSetSolver::new(&h, rows)?),
        };
        Ok(Self {
            params,
            multipliers: vec![0.0; 2 * nu],
            shifted_du: None,
            pred,
            two_gt,
            solver,
            warm_start: true,
            u_prev: 0.0,
            with_lag,
            stats: MpcStats::default(),
        })
    }

    pub fn set_warm_start(&mut self, on: bool) {
        self.warm_start = on;
    }

    pub fn prediction(&self) -> &PredictionMatrices {
        &self.pred
    }

    pub fn u_prev(&self) -> f64 {
        self.u_prev
    }

    pub fn preview_len(&self) -> usize {
        match self.params.preview {
            PreviewPolicy::None => 0,
            PreviewPolicy::Window => self.params.ny,
        }
    }

    /// Velocity-form state `[x_p, (servo lag), u_prev]`.
    pub fn augmented_state(&self, x_p: &[f64], u_ac: f64) -> DVector<f64> {
        let mut xi: Vec<f64> = x_p.to_vec();
        if self.with_lag {
            xi.push(u_ac);
        }
        xi.push(self.u_prev);
        DVector::from_vec(xi)
    }

    /// Setpoint trajectory over the horizon for the configured preview policy.
    pub fn reference_trajectory(&self, r_now: f64, preview: &[f64]) -> DVector<f64> {
        let ny = self.params.ny;
        match self.params.preview {
            PreviewPolicy::None => DVector::from_element(ny, r_now),
            PreviewPolicy::Window => {
                let last = preview.last().copied().unwrap_or(r_now);
                DVector::from_fn(ny, |i, _| preview.get(i).copied().unwrap_or(last))
            }
        }
    }

    /// Solves the QP for `xi` and `r_traj` and applies the first increment.
    pub fn step(&mut self, xi: &DVector<f64>, r_traj: &DVector<f64>) -> Result<f64> {
        let nu = self.params.nu;
        if xi.len() != self.pred.phi.ncols() || r_traj.len() != self.params.ny {
            return Err(Error::Dimension("MPC state or setpoint length mismatch".into()));
        }
        let (u_max, du_max) = (self.params.u_max, self.params.du_max);
        if self.u_prev.abs() > u_max + du_max {
            return Err(Error::Infeasible(format!("previous input {} outside reachable range", self.u_prev)));
        }
        let f = &self.two_gt * (&self.pred.phi * xi - r_traj);
        let mut lo = vec![-du_max; 2 * nu];
        let mut hi = vec![du_max; 2 * nu];
        for i in nu..2 * nu {
            lo[i] = -u_max - self.u_prev;
            hi[i] = u_max - self.u_prev;
        }
        let sol = match &self.solver {
            Engine::Hildreth(s) => s.solve(&f, &lo, &hi, self.warm_start.then_some(self.multipliers.as_slice()))?,
            Engine::ActiveSet(s) => {
                let warm = if self.warm_start {
                    WarmStart {
                        du: self.shifted_du.take(),
                        active: active_rows(&self.multipliers),
                    }
                } else {
                    WarmStart::default()
                };
                s.solve(&f, &lo, &hi, &warm)?
            }
        };

        self.stats.solves += 1;
        self.stats.total_iterations += sol.iterations;
        if !sol.converged {
            self.stats.degraded += 1;
        }
        // shift the multipliers one sample for the next warm start
        for block in [0..nu, nu..2 * nu] {
            let slice = &mut self.multipliers[block.clone()];
            slice.copy_from_slice(&sol.multipliers[block]);
            slice.rotate_left(1);
            slice[nu - 1] = 0.0;
        }
        let mut shifted = sol.du.clone();
        shifted.as_mut_slice().rotate_left(1);
        shifted[nu - 1] = 0.0;
        self.shifted_du = Some(shifted);

        let du0 = sol.du[0].clamp(-du_max, du_max);
        let u_c = (self.u_prev + du0).clamp(-u_max, u_max);
        self.u_prev = u_c;
        Ok(u_c)
    }
}

/// Rows with a nonzero multiplier and the side it points to.
fn active_rows(multipliers: &[f64]) -> Vec<(usize, Side)> {
    multipliers
        .iter()
        .enumerate()
        .filter(|(_, m)| **m != 0.0)
        .map(|(i, m)| (i, if *m > 0.0 { Side::Upper } else { Side::Lower }))
        .collect()
}

impl ControlLaw for MpcController {
    fn update(&mut self, input: &ControlInput) -> Result<f64> {
        let xi = self.augmented_state(input.x, input.u_ac);
        let r_traj = self.reference_trajectory(input.r, input.preview);
        self.step(&xi, &r_traj)
    }

    /// The velocity form tracks its own last command; nothing to record.
    fn notify_actuation(&mut self, _u_c: f64, _u_ac: f64) {}

    fn reset(&mut self) {
        self.u_prev = 0.0;
        self.multipliers.iter_mut().for_each(|m| *m = 0.0);
        self.shifted_du = None;
        self.stats = MpcStats::default();
    }
}
