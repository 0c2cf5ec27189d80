//! Matrix exponential and the structured real logarithms needed to write
//! positive-determinant linear maps as time-one linear flows.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Coefficients of the [6/6] diagonal Padé approximant to `exp`.
const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// Scaled 1-norm threshold below which the [6/6] approximant is accurate to
/// roughly unit roundoff.
const PADE6_THETA: f64 = 0.5;

pub(crate) fn norm_1(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with a [6/6] Padé approximant.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    assert!(a.is_square(), "expm requires a square matrix");
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = norm_1(a);
    let squarings = if norm > PADE6_THETA {
        (norm / PADE6_THETA).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    // Even and odd parts share powers: N = U + V, D = U - V.
    let eye = Matrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let even = &eye * PADE6[0] + &a2 * PADE6[2] + &a4 * PADE6[4] + &a6 * PADE6[6];
    let odd = &scaled * (&eye * PADE6[1] + &a2 * PADE6[3] + &a4 * PADE6[5]);
    let numer = &even + &odd;
    let denom = &even - &odd;

    let mut result = denom.lu().solve(&numer).ok_or(Error::Overflow)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow);
    }
    Ok(result)
}

/// Flow of `x' = A x + b` at time `t`, returned as the affine map `x ↦ W x + c`.
///
/// Uses the exponential of the augmented block matrix `[[A t, b t], [0, 0]]`;
/// a zero coefficient matrix short-circuits to the exact translation.
pub fn affine_flow_matrices(a: &Matrix, b: &Vector, t: f64) -> Result<(Matrix, Vector)> {
    let d = b.len();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: a.nrows(),
        });
    }
    if !t.is_finite() || a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if t == 0.0 {
        return Ok((Matrix::identity(d, d), Vector::zeros(d)));
    }
    if a.iter().all(|&v| v == 0.0) {
        return Ok((Matrix::identity(d, d), b * t));
    }
    let mut aug = Matrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(a * t));
    aug.view_mut((0, d), (d, 1)).copy_from(&(b * t));
    let e = expm(&aug)?;
    let w = e.view((0, 0), (d, d)).into_owned();
    let c = e.view((0, d), (d, 1)).column(0).into_owned();
    Ok((w, c))
}

/// `E_ij` scaled by `lambda`.
pub fn elementary_generator(d: usize, i: usize, j: usize, lambda: f64) -> Matrix {
    let mut g = Matrix::zeros(d, d);
    g[(i, j)] = lambda;
    g
}

/// Real logarithm of an elementary shear `U = I + λE_ij`, which is `U - I`.
///
/// The structure is checked exactly: unit diagonal and at most one nonzero
/// off-diagonal entry.
pub fn log_elementary(u: &Matrix) -> Result<Matrix> {
    if !u.is_square() {
        return Err(Error::NotElementary);
    }
    let n = u.nrows();
    let mut off_diagonal = 0;
    for i in 0..n {
        for j in 0..n {
            let v = u[(i, j)];
            if i == j {
                if v != 1.0 {
                    return Err(Error::NotElementary);
                }
            } else if v != 0.0 {
                if !v.is_finite() {
                    return Err(Error::NotElementary);
                }
                off_diagonal += 1;
            }
        }
    }
    if off_diagonal > 1 {
        return Err(Error::NotElementary);
    }
    Ok(u - Matrix::identity(n, n))
}

/// Real logarithm of a diagonal ±1 matrix with determinant +1.
///
/// The `-1` entries are paired in ascending index order; each pair `(i, j)`
/// contributes a rotation generator with `π` at `(i, j)` and `-π` at `(j, i)`.
pub fn log_signed_diag(signs: &Matrix) -> Result<Matrix> {
    if !signs.is_square() {
        return Err(Error::NotSignDiagonal);
    }
    let n = signs.nrows();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = signs[(i, j)];
            if i != j && v != 0.0 {
                return Err(Error::NotSignDiagonal);
            }
        }
        let v = signs[(i, i)];
        if v == -1.0 {
            negatives.push(i);
        } else if v != 1.0 {
            return Err(Error::NotSignDiagonal);
        }
    }
    if negatives.len() % 2 == 1 {
        return Err(Error::OddNegativeCount {
            count: negatives.len(),
        });
    }
    let mut g = Matrix::zeros(n, n);
    for pair in negatives.chunks(2) {
        g[(pair[0], pair[1])] = PI;
        g[(pair[1], pair[0])] = -PI;
    }
    Ok(g)
}
