//! Flow programs: ordered compositions of closed-form flows of affine and
//! ±ReLU vector fields.

mod domain;
mod serial;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use domain::BoxDomain;
pub use serial::{from_json, to_json};
pub(crate) use serial::{matrix_from_rows, matrix_to_rows, to_json_string};

use crate::error::{Error, Result};
use crate::linalg::{affine_flow_matrices, Matrix, Vector};

/// Control family tag. Ordered by inclusion: `F0 ⊂ F1 ⊂ F2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Affine fields only.
    F0,
    /// Affine fields and ReLU.
    F1,
    /// Affine fields and ±ReLU.
    F2,
}

impl Family {
    pub fn join(self, other: Family) -> Family {
        self.max(other)
    }

    pub fn admits(self, field: &PrimitiveField) -> bool {
        field.family() <= self
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::F0 => "F0",
            Family::F1 => "F1",
            Family::F2 => "F2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveField {
    /// `x ↦ A x + b`.
    Affine { a: Matrix, b: Vector },
    /// `x ↦ max(x, 0)` componentwise.
    Relu,
    /// `x ↦ -max(x, 0)` componentwise.
    NegRelu,
}

impl PrimitiveField {
    pub fn affine(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() || a.ncols() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                found: a.nrows().max(a.ncols()),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(PrimitiveField::Affine { a, b })
    }

    pub fn linear(a: Matrix) -> Result<Self> {
        let d = a.nrows();
        Self::affine(a, Vector::zeros(d))
    }

    pub fn translation(b: Vector) -> Result<Self> {
        let d = b.len();
        Self::affine(Matrix::zeros(d, d), b)
    }

    /// Dimension fixed by the field, if any; ±ReLU fit every dimension.
    pub fn dim(&self) -> Option<usize> {
        match self {
            PrimitiveField::Affine { b, .. } => Some(b.len()),
            _ => None,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            PrimitiveField::Affine { .. } => Family::F0,
            PrimitiveField::Relu => Family::F1,
            PrimitiveField::NegRelu => Family::F2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PrimitiveField::Affine { .. } => "affine",
            PrimitiveField::Relu => "relu",
            PrimitiveField::NegRelu => "negrelu",
        }
    }

    pub fn negated(&self) -> PrimitiveField {
        match self {
            PrimitiveField::Affine { a, b } => PrimitiveField::Affine { a: -a, b: -b },
            PrimitiveField::Relu => PrimitiveField::NegRelu,
            PrimitiveField::NegRelu => PrimitiveField::Relu,
        }
    }

    /// Value of the vector field at `x`.
    pub fn eval(&self, x: &Vector) -> Vector {
        match self {
            PrimitiveField::Affine { a, b } => a * x + b,
            PrimitiveField::Relu => x.map(|v| v.max(0.0)),
            PrimitiveField::NegRelu => x.map(|v| -v.max(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStep {
    pub field: PrimitiveField,
    pub duration: f64,
}

impl FlowStep {
    pub fn new(field: PrimitiveField, duration: f64) -> Self {
        Self { field, duration }
    }
}

/// Precomputed closed form of one step.
#[derive(Debug, Clone)]
enum StepMap {
    Identity,
    Affine {
        w: Matrix,
        c: Vector,
    },
    /// Positive coordinates are multiplied by `factor`, the rest are fixed.
    PositiveScale {
        factor: f64,
    },
}

impl StepMap {
    fn of(step: &FlowStep) -> Result<StepMap> {
        if step.duration == 0.0 {
            return Ok(StepMap::Identity);
        }
        Ok(match &step.field {
            PrimitiveField::Affine { a, b } => {
                let (w, c) = affine_flow_matrices(a, b, step.duration)?;
                StepMap::Affine { w, c }
            }
            PrimitiveField::Relu => StepMap::PositiveScale {
                factor: step.duration.exp(),
            },
            PrimitiveField::NegRelu => StepMap::PositiveScale {
                factor: (-step.duration).exp(),
            },
        })
    }

    fn apply(&self, x: &Vector) -> Vector {
        match self {
            StepMap::Identity => x.clone(),
            StepMap::Affine { w, c } => w * x + c,
            StepMap::PositiveScale { factor } => x.map(|v| if v > 0.0 { v * factor } else { v }),
        }
    }

    fn box_image(&self, domain: &BoxDomain) -> BoxDomain {
        match self {
            StepMap::Identity => domain.clone(),
            StepMap::Affine { w, c } => domain.linear_image(w, c),
            StepMap::PositiveScale { .. } => domain.monotone_image(|x| self.apply(x)),
        }
    }
}

fn check_input(x: &Vector, dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

/// `φ^t_f(x)` in closed form: augmented exponential for affine fields,
/// `e^t σ_{e^{-t}}` for ReLU and `e^{-t} σ_{e^t}` for -ReLU.
pub fn eval_step(step: &FlowStep, x: &Vector) -> Result<Vector> {
    if let Some(d) = step.field.dim() {
        check_input(x, d)?;
    } else if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if step.duration < 0.0 || !step.duration.is_finite() {
        return Err(Error::NegativeDuration {
            index: 0,
            duration: step.duration,
        });
    }
    Ok(StepMap::of(step)?.apply(x))
}

/// Checks the structural invariants of a program.
pub fn validate_program(dim: usize, family: Family, steps: &[FlowStep]) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "program dimension must be >= 1".into(),
        ));
    }
    for (index, step) in steps.iter().enumerate() {
        if let Some(d) = step.field.dim() {
            if d != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d,
                });
            }
        }
        if let PrimitiveField::Affine { a, b } = &step.field {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.nrows().max(a.ncols()),
                });
            }
            if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
        }
        if !family.admits(&step.field) {
            return Err(Error::FamilyViolation {
                index,
                field: step.field.kind(),
                family,
            });
        }
        if !(step.duration >= 0.0) || !step.duration.is_finite() {
            return Err(Error::NegativeDuration {
                index,
                duration: step.duration,
            });
        }
    }
    Ok(())
}

/// A validated, immutable composition `φ^{τ_n}_{f_n} ∘ … ∘ φ^{τ_1}_{f_1}`.
/// Steps are listed in the order they are applied.
#[derive(Debug, Clone)]
pub struct FlowProgram {
    dim: usize,
    family: Family,
    steps: Vec<FlowStep>,
    maps: Vec<StepMap>,
}

impl PartialEq for FlowProgram {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.family == other.family && self.steps == other.steps
    }
}

impl FlowProgram {
    pub fn new(dim: usize, family: Family, steps: Vec<FlowStep>) -> Result<Self> {
        validate_program(dim, family, &steps)?;
        let maps = steps.iter().map(StepMap::of).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            family,
            steps,
            maps,
        })
    }

    /// Tags the program with the smallest family containing all its fields.
    pub fn minimal(dim: usize, steps: Vec<FlowStep>) -> Result<Self> {
        let family = steps
            .iter()
            .map(|s| s.field.family())
            .fold(Family::F0, Family::join);
        Self::new(dim, family, steps)
    }

    pub fn identity(dim: usize, family: Family) -> Self {
        Self {
            dim,
            family,
            steps: Vec::new(),
            maps: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        validate_program(self.dim, self.family, &self.steps)
    }

    /// Re-tag with a larger (or equal) family.
    pub fn widen(mut self, family: Family) -> Result<Self> {
        validate_program(self.dim, family, &self.steps)?;
        self.family = family;
        Ok(self)
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_input(x, self.dim)?;
        let mut y = x.clone();
        for map in &self.maps {
            y = map.apply(&y);
        }
        Ok(y)
    }

    pub fn eval_many(&self, points: &[Vector]) -> Result<Vec<Vector>> {
        points.par_iter().map(|x| self.eval(x)).collect()
    }

    /// Program running `self` first, then `next`.
    pub fn compose(&self, next: &FlowProgram) -> Result<FlowProgram> {
        let mut builder = ProgramBuilder::new(self.dim);
        builder.append(self)?;
        builder.append(next)?;
        builder.build(self.family.join(next.family))
    }

    /// Interval enclosure of the image of `domain`, propagated step by step.
    pub fn box_image(&self, domain: &BoxDomain) -> Result<BoxDomain> {
        if domain.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: domain.dim(),
            });
        }
        Ok(self
            .maps
            .iter()
            .fold(domain.clone(), |acc, map| map.box_image(&acc)))
    }

    /// Sum of all step durations.
    pub fn total_time(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }
}

/// Incremental concatenation that reuses the closed forms already computed
/// for appended programs.
#[derive(Debug, Clone)]
pub struct ProgramBuilder {
    dim: usize,
    steps: Vec<FlowStep>,
    maps: Vec<StepMap>,
}

impl ProgramBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            steps: Vec::new(),
            maps: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn push(&mut self, field: PrimitiveField, duration: f64) -> Result<&mut Self> {
        let step = FlowStep::new(field, duration);
        validate_program(self.dim, Family::F2, std::slice::from_ref(&step)).map_err(
            |e| match e {
                Error::NegativeDuration { duration, .. } => Error::NegativeDuration {
                    index: self.steps.len(),
                    duration,
                },
                other => other,
            },
        )?;
        self.maps.push(StepMap::of(&step)?);
        self.steps.push(step);
        Ok(self)
    }

    pub fn append(&mut self, program: &FlowProgram) -> Result<&mut Self> {
        if program.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: program.dim,
            });
        }
        self.steps.extend_from_slice(&program.steps);
        self.maps.extend_from_slice(&program.maps);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn build(self, family: Family) -> Result<FlowProgram> {
        validate_program(self.dim, family, &self.steps)?;
        Ok(FlowProgram {
            dim: self.dim,
            family,
            steps: self.steps,
            maps: self.maps,
        })
    }
}
