//! The condensed MPC QP and Hildreth's dual coordinate-ascent method
//!
//! ```text
//! minimize    1/2 du' H du + f' du
//! subject to  |du_i| <= du_max
//!             |u_prev + du_0 + ... + du_i| <= u_max
//! ```
//!
//! Every constraint is a two-sided row `lo <= a' du <= hi`, so each row
//! carries one signed multiplier (positive when the upper side is active).

use super::active_set::{ActiveSetSolver, WarmStart};
use crate::control_math::Matrix;
use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 500;
pub const MULTIPLIER_TOLERANCE: f64 = 1e-8;

/// Bounds on the running sum `u_prev + sum(du)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeRows {
    pub u_prev: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Matrix,
    pub f: DVector<f64>,
    pub du_max: f64,
    pub amplitude: Option<AmplitudeRows>,
}

impl QpProblem {
    pub fn vars(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, du: &DVector<f64>) -> f64 {
        0.5 * du.dot(&(&self.h * du)) + self.f.dot(du)
    }

    /// Row structure and bounds `(lo, hi)` in solver order.
    pub fn rows(&self) -> (Vec<Row>, Vec<f64>, Vec<f64>) {
        let n = self.vars();
        let mut rows = Vec::with_capacity(2 * n);
        let mut lo = Vec::with_capacity(2 * n);
        let mut hi = Vec::with_capacity(2 * n);
        for i in 0..n {
            rows.push(Row::Unit(i));
            lo.push(-self.du_max);
            hi.push(self.du_max);
        }
        if let Some(amp) = self.amplitude {
            for i in 0..n {
                rows.push(Row::Prefix(i + 1));
                lo.push(-amp.u_max - amp.u_prev);
                hi.push(amp.u_max - amp.u_prev);
            }
        }
        (rows, lo, hi)
    }

    /// Largest constraint violation of `du`.
    pub fn violation(&self, du: &DVector<f64>) -> f64 {
        let (rows, lo, hi) = self.rows();
        rows.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(row, (l, h))| {
                let s = row.dot(du.as_slice());
                (s - h).max(l - s).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Moves `du` onto the feasible set greedily, front to back.
    pub fn restore_feasibility(&self, du: &mut DVector<f64>) {
        let mut u = self.amplitude.map_or(0.0, |a| a.u_prev);
        for v in du.iter_mut() {
            let (mut lo, mut hi) = (-self.du_max, self.du_max);
            if let Some(amp) = self.amplitude {
                lo = lo.max(-amp.u_max - u);
                hi = hi.min(amp.u_max - u);
            }
            *v = v.clamp(lo, hi.max(lo));
            u += *v;
        }
    }
}

/// Constraint row shape: a unit vector or a leading block of ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Row {
    Unit(usize),
    Prefix(usize),
}

impl Row {
    pub(crate) fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Unit(i) => x[i],
            Row::Prefix(len) => x[..len].iter().sum(),
        }
    }

    pub(crate) fn dense(&self, n: usize) -> DVector<f64> {
        match *self {
            Row::Unit(i) => DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }),
            Row::Prefix(len) => DVector::from_fn(n, |k, _| if k < len { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    /// Primal active set; exact after finitely many working-set changes.
    #[default]
    ActiveSet,
    /// Dual coordinate ascent, capped at [`MAX_ITERATIONS`] sweeps.
    Hildreth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub du: DVector<f64>,
    /// Signed multipliers, one per row.
    pub multipliers: Vec<f64>,
    /// Hildreth: full sweeps over the rows. Active set: working-set steps.
    pub iterations: usize,
    pub kkt_residual: f64,
    /// False when the iteration cap was hit; `du` was then pushed onto the
    /// feasible set and is only approximately optimal.
    pub converged: bool,
}

/// Pre-factored solver for a fixed Hessian and row structure; only the
/// gradient and bounds change between solves.
#[derive(Debug, Clone)]
pub struct HildrethSolver {
    h_inv: Matrix,
    rows: Vec<Row>,
    /// Column `i` is `H^-1 a_i`.
    w: Matrix,
    /// `a_i' H^-1 a_i`.
    diag: Vec<f64>,
}

impl HildrethSolver {
    pub fn new(h: &Matrix, rows: Vec<Row>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::Dimension(format!("Hessian must be square, got {:?}", h.shape())));
        }
        let chol = h
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Argument("QP Hessian must be positive definite".into()))?;
        let h_inv = chol.inverse();
        let mut w = Matrix::zeros(n, rows.len());
        let mut diag = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let col = &h_inv * row.dense(n);
            diag.push(row.dot(col.as_slice()));
            w.set_column(i, &col);
        }
        Ok(Self { h_inv, rows, w, diag })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn solve(&self, f: &DVector<f64>, lo: &[f64], hi: &[f64], warm: Option<&[f64]>) -> Result<QpSolution> {
        let m = self.rows.len();
        if lo.len() != m || hi.len() != m || f.len() != self.h_inv.nrows() {
            return Err(Error::Dimension("QP bounds or gradient do not match the solver".into()));
        }
        if let Some(i) = (0..m).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Infeasible(format!("row {i} has lower bound {} above upper bound {}", lo[i], hi[i])));
        }

        let mut mu = match warm {
            Some(w) if w.len() == m => w.to_vec(),
            _ => vec![0.0; m],
        };
        // du = -H^-1 (f + A' mu)
        let mut du = -(&self.h_inv * f);
        for (i, &mi) in mu.iter().enumerate() {
            if mi != 0.0 {
                du.axpy(-mi, &self.w.column(i), 1.0);
            }
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut largest = 0.0f64;
            for i in 0..m {
                let s = self.rows[i].dot(du.as_slice());
                let old = mu[i];
                let up = old + (s - hi[i]) / self.diag[i];
                let new = if up > 0.0 {
                    up
                } else {
                    let down = old + (s - lo[i]) / self.diag[i];
                    down.min(0.0)
                };
                let delta = new - old;
                if delta != 0.0 {
                    mu[i] = new;
                    du.axpy(-delta, &self.w.column(i), 1.0);
                    largest = largest.max(delta.abs());
                }
            }
            if largest <= MULTIPLIER_TOLERANCE {
                converged = true;
                break;
            }
        }

        let kkt_residual = self.kkt_residual(&du, &mu, lo, hi);
        Ok(QpSolution {
            du,
            multipliers: mu,
            iterations,
            kkt_residual,
            converged,
        })
    }

    /// Primal violation and complementarity; stationarity holds by construction.
    fn kkt_residual(&self, du: &DVector<f64>, mu: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s = row.dot(du.as_slice());
                let violation = (s - hi[i]).max(lo[i] - s).max(0.0);
                let slack = if mu[i] > 0.0 {
                    (hi[i] - s).abs()
                } else if mu[i] < 0.0 {
                    (s - lo[i]).abs()
                } else {
                    0.0
                };
                violation.max(slack)
            })
            .fold(0.0, f64::max)
    }
}

/// One-shot solve of a condensed MPC QP with the default method.
pub fn solve_qp(prob: &QpProblem) -> Result<QpSolution> {
    solve_qp_with(prob, QpMethod::default())
}

pub fn solve_qp_with(prob: &QpProblem, method: QpMethod) -> Result<QpSolution> {
    if prob.h.shape() != (prob.vars(), prob.vars()) {
        return Err(Error::Dimension("Hessian and gradient sizes differ".into()));
    }
    if !(prob.du_max > 0.0) {
        return Err(Error::Argument(format!("du_max must be > 0, got {}", prob.du_max)));
    }
    if let Some(amp) = prob.amplitude {
        if amp.u_prev.abs() > amp.u_max + prob.du_max {
            return Err(Error::Infeasible(format!(
                "previous input {} cannot return within +-{} in one increment",
                amp.u_prev, amp.u_max
            )));
        }
    }
    let (rows, lo, hi) = prob.rows();
    let mut sol = match method {
        QpMethod::Hildreth => HildrethSolver::new(&prob.h, rows)?.solve(&prob.f, &lo, &hi, None)?,
        QpMethod::ActiveSet => {
            // zero is infeasible only when u_prev sits beyond u_max
            let mut start = DVector::zeros(prob.vars());
            prob.restore_feasibility(&mut start);
            let warm = WarmStart {
                du: Some(start),
                active: Vec::new(),
            };
            ActiveSetSolver::new(&prob.h, rows)?.solve(&prob.f, &lo, &hi, &warm)?
        }
    };
    // Hildreth stops on multiplier change and may leave a residual of the
    // same order; the clamp moves du by at most that residual
    if !sol.converged || prob.violation(&sol.du) > 0.0 {
        prob.restore_feasibility(&mut sol.du);
    }
    Ok(sol)
}
