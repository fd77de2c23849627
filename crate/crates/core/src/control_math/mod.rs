//! Small dense linear algebra for controller synthesis: matrix exponential,
//! zero-order-hold discretization, continuous Riccati solution, LQI gain
//! synthesis and a Routh-Hurwitz stability test.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and is sized for the
//! 2-4 state models this crate deals with.

mod expm;
mod riccati;
mod routh;

pub use expm::{mat_exp, zoh_discretize};
pub use riccati::{lqi_augment, lqi_gains, solve_care, solve_lyapunov, LqiGains, RiccatiSolution};
pub use routh::{characteristic_polynomial, is_hurwitz, routh_hurwitz};

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub type Matrix = DMatrix<f64>;

/// Numerical constants shared by the routines in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Scaling target for `mat_exp`: the argument is halved until its
    /// infinity norm is at most this value.
    pub expm_scaled_norm: f64,
    /// Relative size of the last Taylor term kept by `mat_exp`.
    pub expm_term: f64,
    /// Frobenius norm bound on the CARE residual.
    pub care_residual: f64,
    /// Newton-Kleinman iteration cap.
    pub care_max_iterations: usize,
    /// Bound on `|P - P^T|` entries.
    pub symmetry: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    expm_scaled_norm: 0.5,
    expm_term: 1e-16,
    care_residual: 1e-8,
    care_max_iterations: 60,
    symmetry: 1e-10,
};

fn check_finite(m: &Matrix, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} has non-finite entries")))
    }
}

/// Continuous-time linear model `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B must be {n}xm, got {}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C must be px{n}, got {}x{}", c.nrows(), c.ncols())));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        Ok(Self { a, b, c })
    }

    /// Linearized REMUS yaw dynamics at 1 m/s: states `[psi, r]` in degrees
    /// and degrees per second, input rudder angle in degrees.
    pub fn remus_yaw() -> Self {
        Self {
            a: Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.16]),
            b: Matrix::from_row_slice(2, 1, &[0.0, 1.98]),
            c: Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.inputs() == 1 && self.outputs() == 1
    }

    /// `A x + B u` for a single-input model.
    pub fn derivative(&self, x: &[f64], u: f64) -> Vec<f64> {
        let n = self.states();
        (0..n)
            .map(|i| {
                let mut acc = self.b[(i, 0)] * u;
                for (j, xj) in x.iter().enumerate() {
                    acc += self.a[(i, j)] * xj;
                }
                acc
            })
            .collect()
    }

    /// First output row applied to `x`.
    pub fn output(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, xj)| self.c[(0, j)] * xj).sum()
    }
}

/// Discrete-time model `x+ = Ad x + Bd u`, `y = C x` with sampling period `ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub ad: Matrix,
    pub bd: Matrix,
    pub c: Matrix,
    pub ts: f64,
}

impl DiscreteStateSpace {
    pub fn new(ad: Matrix, bd: Matrix, c: Matrix, ts: f64) -> Result<Self> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::Argument(format!("sampling time must be > 0, got {ts}")));
        }
        let sys = StateSpace::new(ad, bd, c)?;
        Ok(Self {
            ad: sys.a,
            bd: sys.b,
            c: sys.c,
            ts,
        })
    }

    pub fn states(&self) -> usize {
        self.ad.nrows()
    }
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
