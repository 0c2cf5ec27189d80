//! Leaky-ReLU maps `σ_α` as F1 programs on compact boxes.

use crate::error::{Error, Result};
use crate::factor::affine_program;
use crate::linalg::{Matrix, Vector};
use crate::model::{BoxDomain, Family, FlowProgram, PrimitiveField, ProgramBuilder};

/// `σ_α(x) = x` for `x ≥ 0`, `α x` otherwise.
pub fn leaky(alpha: f64, x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

/// Per-coordinate slopes `α⃗` and the compact box the compiled map must be
/// valid on.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakySpec {
    pub alpha: Vector,
    pub domain: BoxDomain,
}

impl LeakySpec {
    pub fn new(alpha: Vector, domain: BoxDomain) -> Result<Self> {
        if alpha.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: alpha.len(),
            });
        }
        if let Some(&bad) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::AlphaOutOfRange { alpha: bad });
        }
        Ok(Self { alpha, domain })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Direct componentwise evaluation of `σ_α⃗`.
pub fn eval_leaky(alpha: &Vector, x: &Vector) -> Vector {
    x.zip_map(alpha, |xi, ai| leaky(ai, xi))
}

/// `σ_α = φ^t_{-I·} ∘ φ^t_{ReLU}` with `t = -ln α`, valid on all of `ℝ^d`.
pub fn uniform_leaky_flow(alpha: f64, dim: usize) -> Result<FlowProgram> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::AlphaOutOfRange { alpha });
    }
    if alpha == 1.0 {
        return Ok(FlowProgram::identity(dim, Family::F1));
    }
    let t = -alpha.ln();
    let mut b = ProgramBuilder::new(dim);
    b.push(PrimitiveField::Relu, t)?;
    b.push(PrimitiveField::linear(-Matrix::identity(dim, dim))?, t)?;
    b.build(Family::F1)
}

/// Slope `alpha` on coordinate `i` and identity elsewhere, valid on `domain`.
///
/// For `alpha < 1` the other coordinates are shifted into the positive
/// orthant where the uniform leaky flow acts as the identity. For `alpha > 1`
/// the identity `σ_α(x) = -α σ_{1/α}(-x)` is used, with coordinate `i` and
/// its partner `(i + 1) mod d` negated together so the determinant stays +1.
pub fn coordinate_leaky_flow(i: usize, alpha: f64, domain: &BoxDomain) -> Result<FlowProgram> {
    let d = domain.dim();
    if i >= d {
        return Err(Error::InvalidArgument(format!(
            "coordinate {i} out of range for dimension {d}"
        )));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::AlphaOutOfRange { alpha });
    }
    if alpha == 1.0 {
        Ok(FlowProgram::identity(d, Family::F1))
    } else if alpha < 1.0 {
        shifted_leaky(i, alpha, domain)
    } else {
        if d < 2 {
            return Err(Error::DimensionTooSmall {
                dim: d,
                reason: "slopes above 1 need a partner coordinate to negate",
            });
        }
        let partner = (i + 1) % d;
        let mut flip = Matrix::identity(d, d);
        flip[(i, i)] = -1.0;
        flip[(partner, partner)] = -1.0;
        let negate = affine_program(&flip, &Vector::zeros(d))?;

        let negated_domain = domain.linear_image(&flip, &Vector::zeros(d));
        let inner = shifted_leaky(i, 1.0 / alpha, &negated_domain)?;

        let mut restore = flip;
        restore[(i, i)] = -alpha;
        let restore = affine_program(&restore, &Vector::zeros(d))?;

        let mut b = ProgramBuilder::new(d);
        b.append(&negate)?.append(&inner)?.append(&restore)?;
        b.build(Family::F1)
    }
}

fn shifted_leaky(i: usize, alpha: f64, domain: &BoxDomain) -> Result<FlowProgram> {
    let d = domain.dim();
    let shift_size = domain.radius() + 1.0;
    let mut shift = Vector::from_element(d, shift_size);
    shift[i] = 0.0;
    let shifted = domain.translate(&shift);
    assert!(
        (0..d).filter(|&j| j != i).all(|j| shifted.lo()[j] > 0.0),
        "shifted box must sit in the positive half-spaces"
    );

    let mut b = ProgramBuilder::new(d);
    if d > 1 {
        b.push(PrimitiveField::translation(shift.clone())?, 1.0)?;
    }
    b.append(&uniform_leaky_flow(alpha, d)?)?;
    if d > 1 {
        b.push(PrimitiveField::translation(-shift)?, 1.0)?;
    }
    b.build(Family::F1)
}

/// `σ_α⃗ = σ_{α⃗_d} ∘ ⋯ ∘ σ_{α⃗_1}`, each factor compiled on the image of the
/// box under the factors before it.
pub fn vector_leaky_flow(spec: &LeakySpec) -> Result<FlowProgram> {
    let d = spec.dim();
    if d < 2 && spec.alpha.iter().any(|&a| a > 1.0) {
        return Err(Error::DimensionTooSmall {
            dim: d,
            reason: "slopes above 1 need a partner coordinate to negate",
        });
    }
    let mut current = spec.domain.clone();
    let mut b = ProgramBuilder::new(d);
    for i in 0..d {
        let a = spec.alpha[i];
        if a == 1.0 {
            continue;
        }
        b.append(&coordinate_leaky_flow(i, a, &current)?)?;
        current = current.monotone_image(|x| {
            let mut y = x.clone();
            y[i] = leaky(a, y[i]);
            y
        });
    }
    b.build(Family::F1)
}
