use super::{is_hurwitz, norm_inf, Matrix, StateSpace, TOLERANCES};
use crate::error::{Error, Result};

/// Stabilizing solution of the continuous algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Cost-to-go matrix.
    pub p: Matrix,
    /// Optimal state feedback `u = -K x`.
    pub k: Matrix,
    /// Frobenius norm of `A'P + PA - P B R^-1 B' P + Q`.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `A' X + X A + Q = 0` through the Kronecker-product linear system.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "Lyapunov solve needs square A and Q of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let eye = Matrix::identity(n, n);
    let at = a.transpose();
    // column-major vec: vec(A'X) = (I kron A') vec X, vec(XA) = (A' kron I) vec X
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = lhs.lu().solve(&rhs).ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    let x = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn care_residual(a: &Matrix, b: &Matrix, q: &Matrix, r_inv: &Matrix, p: &Matrix) -> f64 {
    let res = a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q;
    res.norm()
}

/// Stabilizing seed gain `K0 = B' Z^-1` with
/// `(A + bI) Z + Z (A + bI)' = 2 B B'`, where the shift `b` exceeds the
/// spectral radius of `A`. Closed-loop poles end up left of `-b`.
fn seed_gain(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if is_hurwitz(a)? {
        return Ok(Matrix::zeros(b.ncols(), n));
    }
    let mut shift = norm_inf(a) + 1.0;
    for _ in 0..8 {
        let shifted = a + Matrix::identity(n, n) * shift;
        let rhs = b * b.transpose() * -2.0;
        if let Ok(z) = solve_lyapunov(&shifted.transpose(), &rhs) {
            if let Some(z_inv) = z.clone().try_inverse() {
                let k0 = b.transpose() * z_inv;
                if is_hurwitz(&(a - b * &k0))? {
                    return Ok(k0);
                }
            }
        }
        shift *= 2.0;
    }
    Err(Error::NotStabilizable)
}

/// Newton-Kleinman iteration for the CARE, seeded by a pole-shifting gain.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "CARE shapes A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    for (mat, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("{name} has non-finite entries")));
        }
    }
    if (q - q.transpose()).amax() > TOLERANCES.symmetry * (1.0 + q.amax()) {
        return Err(Error::Argument("Q must be symmetric".into()));
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Argument("R must be symmetric positive definite".into()))?;
    let r_inv = r_chol.inverse();

    let mut k = seed_gain(a, b)?;
    let mut p = Matrix::zeros(n, n);
    let mut iterations = 0;
    let tol = TOLERANCES.care_residual;
    loop {
        iterations += 1;
        let closed = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        let p_next = solve_lyapunov(&closed, &rhs)?;
        let step = (&p_next - &p).norm();
        p = p_next;
        k = &r_inv * b.transpose() * &p;
        if step <= 1e-13 * (1.0 + p.norm()) {
            break;
        }
        if iterations >= TOLERANCES.care_max_iterations {
            let residual = care_residual(a, b, q, &r_inv, &p);
            if residual <= tol {
                break;
            }
            return Err(Error::Convergence { iterations, residual });
        }
    }

    let residual = care_residual(a, b, q, &r_inv, &p);
    if residual > tol {
        return Err(Error::Convergence { iterations, residual });
    }
    if !is_hurwitz(&(a - b * &k))? {
        return Err(Error::NotStabilizable);
    }
    Ok(RiccatiSolution { p, k, residual, iterations })
}

/// Plant augmented with the integral of the tracking error:
/// state `[e_I, x_p]`, `A = [[0, -C_p], [0, A_p]]`, `B = [0; B_p]`.
pub fn lqi_augment(plant: &StateSpace) -> Result<(Matrix, Matrix)> {
    if !plant.is_siso() {
        return Err(Error::Dimension("LQI synthesis needs a SISO plant".into()));
    }
    let n = plant.states();
    let mut a = Matrix::zeros(n + 1, n + 1);
    a.view_mut((0, 1), (1, n)).copy_from(&(-&plant.c));
    a.view_mut((1, 1), (n, n)).copy_from(&plant.a);
    let mut b = Matrix::zeros(n + 1, 1);
    b.view_mut((1, 0), (n, 1)).copy_from(&plant.b);
    Ok((a, b))
}

/// LQI gains split as `K_x = [K_I | K_xp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqiGains {
    /// Entry of `K_x` acting on the error integral.
    pub k_i: f64,
    /// Entries of `K_x` acting on the plant state.
    pub k_xp: Vec<f64>,
    pub riccati: RiccatiSolution,
}

impl LqiGains {
    /// `K_x` reassembled as a row vector.
    pub fn k_x(&self) -> Vec<f64> {
        std::iter::once(self.k_i).chain(self.k_xp.iter().copied()).collect()
    }
}

pub fn lqi_gains(plant: &StateSpace, q: &Matrix, r: f64) -> Result<LqiGains> {
    let (a, b) = lqi_augment(plant)?;
    if !(r > 0.0) {
        return Err(Error::Argument(format!("R must be > 0, got {r}")));
    }
    let riccati = solve_care(&a, &b, q, &Matrix::from_element(1, 1, r))?;
    let k_i = riccati.k[(0, 0)];
    let k_xp = riccati.k.iter().skip(1).copied().collect();
    Ok(LqiGains { k_i, k_xp, riccati })
}
