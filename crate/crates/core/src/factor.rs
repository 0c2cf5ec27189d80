//! Affine maps `x ↦ W x + b` with `det W > 0` as pure affine-field programs.
//!
//! `W` is reduced to a diagonal matrix by shear row operations only, the
//! diagonal is split into a positive part and a sign part, and every factor
//! is written as the time-one flow of its real logarithm.

use crate::error::{Error, Result};
use crate::linalg::{elementary_generator, log_signed_diag, Matrix, Vector};
use crate::model::{Family, FlowProgram, PrimitiveField, ProgramBuilder};

/// Pivots smaller than this are repaired by an extra shear.
pub const PIVOT_THRESHOLD: f64 = 1e-8;
/// Matrices with `|det| ≤` this are rejected as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;

/// One shear `U = I + λ E_ij` (adds `λ` times row `j` to row `i`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shear {
    pub row: usize,
    pub col: usize,
    pub lambda: f64,
}

impl Shear {
    pub fn matrix(&self, d: usize) -> Matrix {
        let mut u = Matrix::identity(d, d);
        u[(self.row, self.col)] = self.lambda;
        u
    }
}

/// `U_n ⋯ U_1 W = Λ Λ±`, with the shears listed in the order they are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationCertificate {
    pub shears: Vec<Shear>,
    pub scales: Vector,
    pub signs: Vector,
}

impl EliminationCertificate {
    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn scale_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.scales)
    }

    pub fn sign_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.signs)
    }

    /// Max-abs entry of `U_n ⋯ U_1 W − Λ Λ±`.
    pub fn residual(&self, w: &Matrix) -> f64 {
        let d = self.dim();
        let mut m = w.clone();
        for s in &self.shears {
            m = s.matrix(d) * m;
        }
        (m - self.scale_matrix() * self.sign_matrix()).amax()
    }
}

/// Row-reduce `W` to diagonal form with shears only.
pub fn eliminate(w: &Matrix) -> Result<EliminationCertificate> {
    assert!(w.is_square(), "eliminate requires a square matrix");
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let d = w.nrows();
    let det = w.determinant();
    if det.abs() <= SINGULAR_THRESHOLD {
        return Err(Error::SingularMatrix { det });
    }
    if det < 0.0 {
        return Err(Error::NegativeDeterminant { det });
    }

    let mut m = w.clone();
    let mut shears = Vec::new();
    let mut apply = |m: &mut Matrix, row: usize, col: usize, lambda: f64| {
        if lambda != 0.0 {
            for c in 0..m.ncols() {
                let v = m[(col, c)];
                m[(row, c)] += lambda * v;
            }
            shears.push(Shear { row, col, lambda });
        }
    };

    // Forward sweep to upper triangular.
    for k in 0..d {
        if m[(k, k)].abs() < PIVOT_THRESHOLD {
            let donor = (k + 1..d)
                .max_by(|&a, &b| m[(a, k)].abs().total_cmp(&m[(b, k)].abs()))
                .filter(|&r| m[(r, k)] != 0.0)
                .ok_or(Error::SingularMatrix { det })?;
            let lambda = if m[(k, k)] * m[(donor, k)] < 0.0 {
                -1.0
            } else {
                1.0
            };
            apply(&mut m, k, donor, lambda);
        }
        for r in k + 1..d {
            let lambda = -m[(r, k)] / m[(k, k)];
            apply(&mut m, r, k, lambda);
        }
    }
    // Backward sweep to diagonal.
    for k in (0..d).rev() {
        for r in 0..k {
            let lambda = -m[(r, k)] / m[(k, k)];
            apply(&mut m, r, k, lambda);
        }
    }

    let diag = m.diagonal();
    let signs = diag.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
    let negatives = signs.iter().filter(|&&s| s < 0.0).count();
    if negatives % 2 == 1 {
        // Only reachable when rounding flips the sign of a tiny determinant.
        return Err(Error::NegativeDeterminant { det });
    }
    Ok(EliminationCertificate {
        shears,
        scales: diag.abs(),
        signs,
    })
}

/// Result of [`compile_affine`]: the program and the certificate it was built from.
#[derive(Debug, Clone)]
pub struct AffineFactorization {
    pub program: FlowProgram,
    pub certificate: EliminationCertificate,
}

/// Compile `x ↦ W x + b` into an F0 program of time-one affine flows.
///
/// Execution order: sign rotation, positive scaling, inverse shears from last
/// to first, translation. Factors whose generator is zero are omitted.
pub fn compile_affine(w: &Matrix, b: &Vector) -> Result<AffineFactorization> {
    let d = b.len();
    if w.nrows() != d || w.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: w.nrows(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let certificate = eliminate(w)?;
    let mut builder = ProgramBuilder::new(d);

    let rotation = log_signed_diag(&certificate.sign_matrix())?;
    push_linear(&mut builder, rotation)?;
    let log_scale = Matrix::from_diagonal(&certificate.scales.map(f64::ln));
    push_linear(&mut builder, log_scale)?;
    for s in certificate.shears.iter().rev() {
        push_linear(
            &mut builder,
            elementary_generator(d, s.row, s.col, -s.lambda),
        )?;
    }
    if b.iter().any(|&v| v != 0.0) {
        builder.push(PrimitiveField::translation(b.clone())?, 1.0)?;
    }
    Ok(AffineFactorization {
        program: builder.build(Family::F0)?,
        certificate,
    })
}

/// Convenience wrapper returning only the program.
pub fn affine_program(w: &Matrix, b: &Vector) -> Result<FlowProgram> {
    compile_affine(w, b).map(|f| f.program)
}

fn push_linear(builder: &mut ProgramBuilder, generator: Matrix) -> Result<()> {
    if generator.iter().any(|&v| v != 0.0) {
        builder.push(PrimitiveField::linear(generator)?, 1.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::expm;

    fn random_positive_det(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
        loop {
            let w = Matrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0));
            let det = w.determinant();
            if det > 0.1 && det < 10.0 {
                return w;
            }
        }
    }

    #[test]
    fn identity_has_no_factors() {
        let c = eliminate(&Matrix::identity(3, 3)).unwrap();
        assert!(c.shears.is_empty());
        assert_eq!(c.scales, Vector::from_element(3, 1.0));
        assert_eq!(c.signs, Vector::from_element(3, 1.0));
        let p = affine_program(&Matrix::identity(3, 3), &Vector::zeros(3)).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn minus_identity_uses_rotation_generator() {
        let w = -Matrix::identity(2, 2);
        let f = compile_affine(&w, &Vector::zeros(2)).unwrap();
        assert!(f.certificate.residual(&w) <= 1e-10);
        assert_eq!(f.certificate.signs, Vector::from_element(2, -1.0));
        let rot = Matrix::from_row_slice(2, 2, &[0.0, PI, -PI, 0.0]);
        let has_rotation = f.program.steps().iter().any(|s| {
            matches!(&s.field, PrimitiveField::Affine { a, .. } if *a == rot) && s.duration == 1.0
        });
        assert!(has_rotation);
        let x = Vector::from_vec(vec![0.3, -0.8]);
        assert!((f.program.eval(&x).unwrap() + &x).amax() <= 1e-12);
    }

    #[test]
    fn zero_pivot_is_repaired() {
        let w = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let c = eliminate(&w).unwrap();
        assert!(c.residual(&w) <= 1e-10);
        assert!(!c.shears.is_empty());
    }

    #[test]
    fn rejects_singular_and_negative() {
        let s = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(eliminate(&s), Err(Error::SingularMatrix { .. })));
        let n = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0]));
        assert!(matches!(
            eliminate(&n),
            Err(Error::NegativeDeterminant { det }) if det == -1.0
        ));
    }

    #[test]
    fn random_maps_reproduce_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let d = 2 + trial % 3;
            let w = random_positive_det(&mut rng, d);
            let b = Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            let f = compile_affine(&w, &b).unwrap();
            assert!(f.certificate.residual(&w) <= 1e-10);
            assert_eq!(f.program.family(), Family::F0);
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let x = Vector::from_fn(d, |_, _| rng.random_range(-10.0..10.0));
                let diff = f.program.eval(&x).unwrap() - (&w * &x + &b);
                worst = worst.max(diff.amax());
            }
            assert!(worst <= 1e-8, "trial {trial}: {worst:e}");
        }
    }

    #[test]
    fn every_factor_has_positive_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_positive_det(&mut rng, 4);
        let p = affine_program(&w, &Vector::zeros(4)).unwrap();
        for s in p.steps() {
            if let PrimitiveField::Affine { a, .. } = &s.field {
                let det = expm(&(a * s.duration)).unwrap().determinant();
                let expected = (a.trace() * s.duration).exp();
                assert!(det > 0.0);
                assert!((det - expected).abs() <= 1e-8 * expected);
            }
        }
    }

    #[test]
    fn map_then_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_positive_det(&mut rng, 3);
        let b = Vector::from_vec(vec![0.5, -1.0, 2.0]);
        let winv = w.clone().try_inverse().unwrap();
        let forward = affine_program(&w, &b).unwrap();
        let back = affine_program(&winv, &(-(&winv * &b))).unwrap();
        let round = forward.compose(&back).unwrap();
        for x in crate::model::BoxDomain::cube(3, 0.0, 1.0).unwrap().grid(4) {
            assert!((round.eval(&x).unwrap() - &x).amax() <= 1e-7);
        }
    }
}
