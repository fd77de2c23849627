//! Primal active-set method for the same two-sided-row QP as
//! [`super::HildrethSolver`], in range-space form: with `H` fixed, the
//! equality-constrained subproblem on a working set `W` only needs the
//! dual block `A_W H^-1 A_W'`, which is kept as an incremental Cholesky
//! factor.

use super::qp::{QpSolution, Row};
use crate::control_math::Matrix;
use crate::error::{Error, Result};
use nalgebra::DVector;

/// Relative pivot below which a row is treated as dependent on the working set.
const DEPENDENCE_TOLERANCE: f64 = 1e-10;
/// Multipliers of the wrong sign smaller than this are treated as zero.
const SIGN_TOLERANCE: f64 = 1e-10;
/// Feasibility slack accepted for a warm-start point.
const WARM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Lower-triangular factor grown one row at a time.
#[derive(Debug, Clone, Default)]
struct GrowingCholesky {
    k: usize,
    /// Row-major, row `i` holds `i + 1` entries.
    l: Vec<Vec<f64>>,
}

impl GrowingCholesky {
    /// Appends a row/column with off-diagonal `col` and diagonal `d`;
    /// refuses nearly dependent additions.
    fn push(&mut self, col: &[f64], d: f64) -> bool {
        let mut y = Vec::with_capacity(self.k + 1);
        for (i, c) in col.iter().enumerate().take(self.k) {
            let s: f64 = (0..i).map(|j| self.l[i][j] * y[j]).sum();
            y.push((c - s) / self.l[i][i]);
        }
        let pivot = d - y.iter().map(|v| v * v).sum::<f64>();
        if pivot <= DEPENDENCE_TOLERANCE * d.abs().max(f64::MIN_POSITIVE) {
            return false;
        }
        y.push(pivot.sqrt());
        self.l.push(y);
        self.k += 1;
        true
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut z = vec![0.0; k];
        for i in 0..k {
            let s: f64 = (0..i).map(|j| self.l[i][j] * z[j]).sum();
            z[i] = (b[i] - s) / self.l[i][i];
        }
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| self.l[j][i] * z[j]).sum();
            z[i] = (z[i] - s) / self.l[i][i];
        }
        z
    }
}

#[derive(Debug, Clone)]
pub struct ActiveSetSolver {
    h_inv: Matrix,
    rows: Vec<Row>,
    /// Column `i` is `H^-1 a_i`.
    w: Matrix,
    /// `A H^-1 A'`.
    dual: Matrix,
    max_iterations: usize,
}

/// Starting point for [`ActiveSetSolver::solve`].
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub du: Option<DVector<f64>>,
    /// Rows assumed active, with the side that binds.
    pub active: Vec<(usize, Side)>,
}

fn prefix_sums(x: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(x.len() + 1);
    let mut s = 0.0;
    cum.push(0.0);
    for v in x {
        s += v;
        cum.push(s);
    }
    cum
}

fn row_value(row: Row, x: &[f64], cum: &[f64]) -> f64 {
    match row {
        Row::Unit(i) => x[i],
        Row::Prefix(len) => cum[len],
    }
}

impl ActiveSetSolver {
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
        for (i, row) in rows.iter().enumerate() {
            w.set_column(i, &(&h_inv * row.dense(n)));
        }
        let m = rows.len();
        let mut dual = Matrix::zeros(m, m);
        for i in 0..m {
            let col = w.column(i);
            for (j, row) in rows.iter().enumerate() {
                dual[(j, i)] = row.dot(col.as_slice());
            }
        }
        Ok(Self {
            h_inv,
            rows,
            w,
            dual,
            max_iterations: 10 * (n + m),
        })
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    fn factor(&self, set: &[(usize, Side)]) -> (GrowingCholesky, Vec<(usize, Side)>) {
        let mut chol = GrowingCholesky::default();
        let mut kept = Vec::with_capacity(set.len());
        for &(i, side) in set {
            let col: Vec<f64> = kept.iter().map(|&(j, _)| self.dual[(j, i)]).collect();
            if chol.push(&col, self.dual[(i, i)]) {
                kept.push((i, side));
            }
        }
        (chol, kept)
    }

    pub fn solve(&self, f: &DVector<f64>, lo: &[f64], hi: &[f64], warm: &WarmStart) -> Result<QpSolution> {
        let n = self.h_inv.nrows();
        let m = self.rows.len();
        if lo.len() != m || hi.len() != m || f.len() != n {
            return Err(Error::Dimension("QP bounds or gradient do not match the solver".into()));
        }
        if let Some(i) = (0..m).find(|&i| lo[i] > hi[i]) {
            return Err(Error::Infeasible(format!("row {i} has lower bound {} above upper bound {}", lo[i], hi[i])));
        }
        let bound = |i: usize, side: Side| match side {
            Side::Lower => lo[i],
            Side::Upper => hi[i],
        };

        // feasible start: the warm point if it qualifies, else zero
        let feasible = |x: &DVector<f64>| {
            let cum = prefix_sums(x.as_slice());
            self.rows.iter().enumerate().all(|(i, r)| {
                let s = row_value(*r, x.as_slice(), &cum);
                s <= hi[i] + WARM_SLACK && s >= lo[i] - WARM_SLACK
            })
        };
        let mut x = match &warm.du {
            Some(d) if d.len() == n && feasible(d) => d.clone(),
            _ => DVector::zeros(n),
        };
        if !feasible(&x) {
            return Err(Error::Infeasible("zero increment violates the constraints".into()));
        }
        let cum = prefix_sums(x.as_slice());
        let start: Vec<(usize, Side)> = warm
            .active
            .iter()
            .copied()
            .filter(|&(i, side)| i < m && (row_value(self.rows[i], x.as_slice(), &cum) - bound(i, side)).abs() <= WARM_SLACK)
            .collect();
        let (mut chol, mut set) = self.factor(&start);

        let x_free = -(&self.h_inv * f);
        let free_cum = prefix_sums(x_free.as_slice());
        let free_row: Vec<f64> = self.rows.iter().map(|r| row_value(*r, x_free.as_slice(), &free_cum)).collect();

        let mut iterations = 0;
        let mut converged = false;
        let mut mu_set: Vec<f64> = Vec::new();
        while iterations < self.max_iterations {
            iterations += 1;
            // minimizer on the working set: x* = x_free - W_s mu, A_s x* = b_s
            let rhs: Vec<f64> = set.iter().map(|&(i, side)| free_row[i] - bound(i, side)).collect();
            mu_set = chol.solve(&rhs);
            let mut target = x_free.clone();
            for (&(i, _), &mu) in set.iter().zip(&mu_set) {
                target.axpy(-mu, &self.w.column(i), 1.0);
            }
            let p = &target - &x;
            let scale = 1.0 + x.amax().max(target.amax());
            if p.amax() <= 1e-13 * scale {
                x = target;
                let wrong = set
                    .iter()
                    .zip(&mu_set)
                    .enumerate()
                    .map(|(k, (&(_, side), &mu))| {
                        let err = match side {
                            Side::Upper => -mu,
                            Side::Lower => mu,
                        };
                        (k, err)
                    })
                    .filter(|(_, err)| *err > SIGN_TOLERANCE)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                match wrong {
                    None => {
                        converged = true;
                        break;
                    }
                    Some((k, _)) => {
                        set.remove(k);
                        (chol, set) = self.factor(&set);
                    }
                }
                continue;
            }

            // longest step along p keeping every row feasible
            let xc = prefix_sums(x.as_slice());
            let pc = prefix_sums(p.as_slice());
            // rows spanned by the working set see only roundoff along p
            let flat = 1e-12 * p.amax() * n as f64;
            let mut alpha = 1.0;
            let mut blocking = None;
            for (i, row) in self.rows.iter().enumerate() {
                if set.iter().any(|&(j, _)| j == i) {
                    continue;
                }
                let dp = row_value(*row, p.as_slice(), &pc);
                let s = row_value(*row, x.as_slice(), &xc);
                let (room, side) = if dp > flat {
                    (hi[i] - s, Side::Upper)
                } else if dp < -flat {
                    (lo[i] - s, Side::Lower)
                } else {
                    continue;
                };
                let a = (room / dp).max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, side));
                }
            }
            x.axpy(alpha, &p, 1.0);
            if let Some((i, side)) = blocking {
                let col: Vec<f64> = set.iter().map(|&(j, _)| self.dual[(j, i)]).collect();
                if chol.push(&col, self.dual[(i, i)]) {
                    set.push((i, side));
                }
            }
        }

        let mut multipliers = vec![0.0; m];
        for (&(i, _), &mu) in set.iter().zip(&mu_set) {
            multipliers[i] = mu;
        }
        let kkt_residual = self.kkt_residual(&x, &multipliers, lo, hi);
        Ok(QpSolution {
            du: x,
            multipliers,
            iterations,
            kkt_residual,
            converged,
        })
    }

    /// Primal violation and complementarity; stationarity holds by construction.
    fn kkt_residual(&self, du: &DVector<f64>, mu: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        let cum = prefix_sums(du.as_slice());
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let s = row_value(*row, du.as_slice(), &cum);
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
