use crate::control_math::StateSpace;
use crate::error::{Error, Result};

/// Dynamic anti-windup compensator driven by the control deficiency:
///
/// ```text
/// x_aw' = (A_p + B_p F_aw) x_aw + B_p du
/// u_aw  = F_aw x_aw
/// y_aw  = C_p x_aw
/// ```
///
/// `F_aw` is supplied by the caller; nothing here synthesizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct MawCompensator {
    pub f_aw: Vec<f64>,
    pub x_aw: Vec<f64>,
    pub plant: StateSpace,
}

impl MawCompensator {
    pub fn new(plant: StateSpace, f_aw: Vec<f64>) -> Result<Self> {
        if !plant.is_siso() {
            return Err(Error::Dimension("MAW compensator needs a SISO plant".into()));
        }
        if f_aw.len() != plant.states() {
            return Err(Error::Dimension(format!(
                "F_aw has {} entries for a {}-state plant",
                f_aw.len(),
                plant.states()
            )));
        }
        let n = plant.states();
        Ok(Self {
            f_aw,
            x_aw: vec![0.0; n],
            plant,
        })
    }

    fn derivative(&self, x: &[f64], delta_u: f64) -> Vec<f64> {
        let u_aw: f64 = self.f_aw.iter().zip(x).map(|(f, xi)| f * xi).sum();
        self.plant.derivative(x, u_aw + delta_u)
    }

    pub fn u_aw(&self) -> f64 {
        self.f_aw.iter().zip(&self.x_aw).map(|(f, x)| f * x).sum()
    }

    pub fn y_aw(&self) -> f64 {
        self.plant.output(&self.x_aw)
    }
}

/// One RK4 step of length `h` with `delta_u` held; returns the post-step
/// `(u_aw, y_aw)` and the advanced compensator.
pub fn maw_step(comp: &MawCompensator, delta_u: f64, h: f64) -> Result<(f64, f64, MawCompensator)> {
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step must be > 0, got {h}")));
    }
    let x = &comp.x_aw;
    let axpy = |a: f64, d: &[f64]| -> Vec<f64> { x.iter().zip(d).map(|(xi, di)| xi + a * di).collect() };
    let k1 = comp.derivative(x, delta_u);
    let k2 = comp.derivative(&axpy(h / 2.0, &k1), delta_u);
    let k3 = comp.derivative(&axpy(h / 2.0, &k2), delta_u);
    let k4 = comp.derivative(&axpy(h, &k3), delta_u);
    let x_aw = (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    let next = MawCompensator { x_aw, ..comp.clone() };
    Ok((next.u_aw(), next.y_aw(), next))
}
