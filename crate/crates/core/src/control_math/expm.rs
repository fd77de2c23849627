use super::{norm_inf, DiscreteStateSpace, Matrix, StateSpace, TOLERANCES};
use crate::error::{Error, Result};

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn mat_exp(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Dimension(format!("mat_exp needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("mat_exp argument has non-finite entries".into()));
    }

    let norm = norm_inf(m);
    let mut squarings = 0u32;
    if norm > TOLERANCES.expm_scaled_norm {
        squarings = (norm / TOLERANCES.expm_scaled_norm).log2().ceil() as u32;
    }
    let scaled = m / 2f64.powi(squarings as i32);

    let mut sum = Matrix::identity(n, n);
    let mut term = Matrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if norm_inf(&term) <= TOLERANCES.expm_term * norm_inf(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Zero-order-hold discretization through the exponential of the block
/// matrix `[[A, B], [0, 0]] * ts`.
pub fn zoh_discretize(sys: &StateSpace, ts: f64) -> Result<DiscreteStateSpace> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::Argument(format!("sampling time must be > 0, got {ts}")));
    }
    let n = sys.states();
    let m = sys.inputs();
    let mut block = Matrix::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(&sys.a * ts));
    block.view_mut((0, n), (n, m)).copy_from(&(&sys.b * ts));
    let e = mat_exp(&block)?;
    DiscreteStateSpace::new(e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned(), sys.c.clone(), ts)
}
