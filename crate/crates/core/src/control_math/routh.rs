use super::Matrix;
use crate::error::{Error, Result};

const MAX_ORDER: usize = 4;

/// Coefficients `[1, a1, ..., an]` of `det(sI - M) = s^n + a1 s^(n-1) + ... + an`
/// via the Faddeev-LeVerrier recursion.
pub fn characteristic_polynomial(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let mut coeffs = vec![1.0];
    let mut aux = Matrix::zeros(n, n);
    for k in 1..=n {
        aux = m * &aux + Matrix::identity(n, n) * coeffs[k - 1];
        let ck = -(m * &aux).trace() / k as f64;
        coeffs.push(ck);
    }
    Ok(coeffs)
}

/// Routh-Hurwitz test on a monic-or-not polynomial given highest power first.
/// True iff every root has strictly negative real part.
pub fn routh_hurwitz(poly: &[f64]) -> bool {
    let poly: Vec<f64> = poly.iter().copied().skip_while(|c| *c == 0.0).collect();
    if poly.len() < 2 {
        return !poly.is_empty();
    }
    let sign = poly[0].signum();
    let poly: Vec<f64> = poly.iter().map(|c| c * sign).collect();
    if poly.iter().any(|c| !(*c > 0.0)) {
        return false;
    }

    let width = poly.len().div_ceil(2);
    let mut prev: Vec<f64> = poly.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = poly.iter().skip(1).step_by(2).copied().collect();
    prev.resize(width, 0.0);
    cur.resize(width, 0.0);
    for _ in 2..poly.len() {
        if !(cur[0] > 0.0) {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = cur.get(j + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    cur[0] > 0.0
}

/// Hurwitz test for square matrices up to 4x4.
pub fn is_hurwitz(m: &Matrix) -> Result<bool> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if n > MAX_ORDER {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(routh_hurwitz(&characteristic_polynomial(m)?))
}
