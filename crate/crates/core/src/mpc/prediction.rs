use crate::control_math::{zoh_discretize, DiscreteStateSpace, Matrix, StateSpace};
use crate::error::{Error, Result};
use nalgebra::DVector;

/// Condensed output prediction `y = Phi xi + G du` over `ny` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    /// Row `i` is `C A^(i+1)`.
    pub phi: Matrix,
    /// `G[i][j] = C A^(i-j) B` for `j <= i`, zero above the diagonal.
    pub g: Matrix,
}

impl PredictionMatrices {
    pub fn horizon(&self) -> usize {
        self.g.nrows()
    }

    pub fn control_horizon(&self) -> usize {
        self.g.ncols()
    }

    pub fn predict(&self, xi: &DVector<f64>, du: &DVector<f64>) -> DVector<f64> {
        &self.phi * xi + &self.g * du
    }
}

/// Plant preceded by the servo's linear lag `z' = (u - z) / tau`; state `[x_p, z]`.
pub fn with_actuator_lag(plant: &StateSpace, tau: f64) -> Result<StateSpace> {
    if !plant.is_siso() {
        return Err(Error::Dimension("actuator lag augmentation needs a SISO plant".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be > 0, got {tau}")));
    }
    let n = plant.states();
    let mut a = Matrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    a.view_mut((0, n), (n, 1)).copy_from(&plant.b);
    a[(n, n)] = -1.0 / tau;
    let mut b = Matrix::zeros(n + 1, 1);
    b[(n, 0)] = 1.0 / tau;
    let mut c = Matrix::zeros(1, n + 1);
    c.view_mut((0, 0), (1, n)).copy_from(&plant.c);
    StateSpace::new(a, b, c)
}

/// Velocity form: state `[x, u_prev]`, input the increment `du`.
pub fn increment_model(model: &DiscreteStateSpace) -> Result<DiscreteStateSpace> {
    if model.bd.ncols() != 1 || model.c.nrows() != 1 {
        return Err(Error::Dimension("increment model needs a SISO model".into()));
    }
    let n = model.states();
    let mut a = Matrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(&model.ad);
    a.view_mut((0, n), (n, 1)).copy_from(&model.bd);
    a[(n, n)] = 1.0;
    let mut b = Matrix::zeros(n + 1, 1);
    b.view_mut((0, 0), (n, 1)).copy_from(&model.bd);
    b[(n, 0)] = 1.0;
    let mut c = Matrix::zeros(1, n + 1);
    c.view_mut((0, 0), (1, n)).copy_from(&model.c);
    DiscreteStateSpace::new(a, b, c, model.ts)
}

/// Prediction model used by the MPC: ZOH of the plant (optionally with the
/// servo lag) in velocity form.
pub fn prediction_model(plant: &StateSpace, ts: f64, actuator_tau: Option<f64>) -> Result<DiscreteStateSpace> {
    let cont = match actuator_tau {
        Some(tau) => with_actuator_lag(plant, tau)?,
        None => plant.clone(),
    };
    increment_model(&zoh_discretize(&cont, ts)?)
}

/// Builds `Phi` and `G` for an increment-input model.
pub fn build_prediction(model: &DiscreteStateSpace, ny: usize, nu: usize) -> Result<PredictionMatrices> {
    if model.bd.ncols() != 1 || model.c.nrows() != 1 {
        return Err(Error::Dimension("prediction needs a SISO model".into()));
    }
    if nu == 0 || ny == 0 || nu > ny {
        return Err(Error::Argument(format!("need 1 <= Nu <= Ny, got Nu = {nu}, Ny = {ny}")));
    }
    let n = model.states();
    let mut phi = Matrix::zeros(ny, n);
    let mut markov = Vec::with_capacity(ny);
    // c_pow = C A^i
    let mut c_pow = model.c.clone();
    for i in 0..ny {
        markov.push((&c_pow * &model.bd)[(0, 0)]);
        c_pow = &c_pow * &model.ad;
        phi.set_row(i, &c_pow.row(0));
    }
    let g = Matrix::from_fn(ny, nu, |i, j| if j <= i { markov[i - j] } else { 0.0 });
    Ok(PredictionMatrices { phi, g })
}
