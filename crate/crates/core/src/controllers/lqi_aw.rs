use super::{ControlInput, ControlLaw};
use crate::control_math::{is_hurwitz, lqi_augment, lqi_gains, Matrix, StateSpace};
use crate::error::{Error, Result};

/// Gains of the LQI law with deficiency feedback into the integrator.
///
/// `k_i_bar` is the integral gain with its sign flipped relative to the
/// Riccati gain (`k_i_bar = -K_x[0]`), so that `u_c = k_i_bar e_I - K_xp x_p`
/// with `e_I' = e - Kaw du`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqiAwParams {
    pub k_i_bar: f64,
    pub k_xp: Vec<f64>,
    pub kaw: f64,
}

impl LqiAwParams {
    /// Builds the gains from explicit values and checks the unconstrained
    /// closed loop of the augmented plant.
    pub fn new(plant: &StateSpace, k_i_bar: f64, k_xp: Vec<f64>, kaw: f64) -> Result<Self> {
        if k_xp.len() != plant.states() {
            return Err(Error::Dimension(format!(
                "K_xp has {} entries for a {}-state plant",
                k_xp.len(),
                plant.states()
            )));
        }
        if !k_i_bar.is_finite() || !kaw.is_finite() || k_xp.iter().any(|k| !k.is_finite()) {
            return Err(Error::Argument("LQI gains must be finite".into()));
        }
        let params = Self { k_i_bar, k_xp, kaw };
        if !is_hurwitz(&params.closed_loop(plant)?)? {
            return Err(Error::NotStabilizable);
        }
        Ok(params)
    }

    /// Riccati synthesis on the integral-augmented plant.
    pub fn synthesize(plant: &StateSpace, q: &Matrix, r: f64, kaw: f64) -> Result<Self> {
        let gains = lqi_gains(plant, q, r)?;
        Self::new(plant, -gains.k_i, gains.k_xp, kaw)
    }

    /// Weights `Q = diag(1000, 50, 25)`, `R = 1`, `Kaw = 4` on the REMUS yaw model.
    pub fn remus_default() -> Result<Self> {
        let q = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1000.0, 50.0, 25.0]));
        Self::synthesize(&StateSpace::remus_yaw(), &q, 1.0, 4.0)
    }

    /// `A_aug - B_aug K_x` with `K_x = [-k_i_bar | K_xp]`.
    pub fn closed_loop(&self, plant: &StateSpace) -> Result<Matrix> {
        let (a, b) = lqi_augment(plant)?;
        let k = Matrix::from_row_iterator(1, self.k_xp.len() + 1, std::iter::once(-self.k_i_bar).chain(self.k_xp.iter().copied()));
        Ok(a - b * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LqiAwState {
    /// Integral of the (deficiency-corrected) tracking error, deg s.
    pub e_i: f64,
    pub delta_u_prev: f64,
}

/// Forward-Euler integrator update followed by the state-feedback law.
pub fn lqi_aw_step(state: LqiAwState, params: &LqiAwParams, e: f64, x_p: &[f64], ts: f64) -> Result<(f64, LqiAwState)> {
    if x_p.len() != params.k_xp.len() {
        return Err(Error::Dimension(format!(
            "plant state has {} entries, K_xp has {}",
            x_p.len(),
            params.k_xp.len()
        )));
    }
    if !(ts > 0.0) {
        return Err(Error::Argument(format!("control period must be > 0, got {ts}")));
    }
    let e_i = state.e_i + ts * (e - params.kaw * state.delta_u_prev);
    let feedback: f64 = params.k_xp.iter().zip(x_p).map(|(k, x)| k * x).sum();
    let u_c = params.k_i_bar * e_i - feedback;
    Ok((u_c, LqiAwState { e_i, ..state }))
}

pub fn notify_actuation(state: LqiAwState, u_c: f64, u_ac: f64) -> LqiAwState {
    LqiAwState {
        delta_u_prev: u_c - u_ac,
        ..state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqiAw {
    pub params: LqiAwParams,
    pub state: LqiAwState,
}

impl LqiAw {
    pub fn new(params: LqiAwParams) -> Self {
        Self {
            params,
            state: LqiAwState::default(),
        }
    }
}

impl ControlLaw for LqiAw {
    fn update(&mut self, input: &ControlInput) -> Result<f64> {
        let (u_c, state) = lqi_aw_step(self.state, &self.params, input.error(), input.x, input.ts)?;
        self.state = state;
        Ok(u_c)
    }

    fn notify_actuation(&mut self, u_c: f64, u_ac: f64) {
        self.state = notify_actuation(self.state, u_c, u_ac);
    }

    fn reset(&mut self) {
        self.state = LqiAwState::default();
    }
}
