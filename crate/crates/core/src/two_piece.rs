//! The two-piece linear coordinate update
//! `y_j = x_j + a σ_α(w·x + β)`, `y_i = x_i` for `i ≠ j`, as an F1 program.

use crate::error::{Error, Result};
use crate::factor::affine_program;
use crate::linalg::{Matrix, Vector};
use crate::model::{BoxDomain, Family, FlowProgram, PrimitiveField, ProgramBuilder};
use crate::relu::{coordinate_leaky_flow, leaky};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPieceMapSpec {
    /// Updated coordinate (0-based).
    pub j: usize,
    pub a: f64,
    pub w: Vector,
    pub beta: f64,
    pub alpha: f64,
}

impl TwoPieceMapSpec {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `max(1, α) |a w_j|`; the map is compilable when this is below 1.
    pub fn condition_value(&self) -> f64 {
        self.alpha.max(1.0) * (self.a * self.w[self.j]).abs()
    }

    pub fn check_admissible(&self) -> Result<()> {
        if self.j >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "target coordinate {} out of range for dimension {}",
                self.j,
                self.dim()
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::AlphaOutOfRange { alpha: self.alpha });
        }
        if !self.a.is_finite() || !self.beta.is_finite() || self.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let c = self.condition_value();
        if !(c < 1.0) {
            return Err(Error::ConditionViolated(format!(
                "max(1, alpha) * |a * w_j| = {c} must be < 1"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        eval_two_piece(self, x)
    }

    /// Interval enclosure of the image of `domain`.
    pub fn box_image(&self, domain: &BoxDomain) -> BoxDomain {
        let (mut lo, mut hi) = (self.beta, self.beta);
        for (k, &wk) in self.w.iter().enumerate() {
            let p = wk * domain.lo()[k];
            let q = wk * domain.hi()[k];
            lo += p.min(q);
            hi += p.max(q);
        }
        let p = self.a * leaky(self.alpha, lo);
        let q = self.a * leaky(self.alpha, hi);
        let mut new_lo = domain.lo().clone();
        let mut new_hi = domain.hi().clone();
        new_lo[self.j] += p.min(q);
        new_hi[self.j] += p.max(q);
        BoxDomain::from_vectors(new_lo, new_hi).expect("enclosure of a valid box is valid")
    }
}

/// Direct evaluation of the two-piece map.
pub fn eval_two_piece(spec: &TwoPieceMapSpec, x: &Vector) -> Vector {
    let mut y = x.clone();
    y[spec.j] += spec.a * leaky(spec.alpha, spec.w.dot(x) + spec.beta);
    y
}

/// Compile the two-piece map into an F1 program valid on `domain`.
pub fn compile_two_piece(spec: &TwoPieceMapSpec, domain: &BoxDomain) -> Result<FlowProgram> {
    let d = spec.dim();
    if domain.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: domain.dim(),
        });
    }
    spec.check_admissible()?;
    if spec.a == 0.0 {
        return Ok(FlowProgram::identity(d, Family::F1));
    }

    let norm_sq = spec.w.norm_squared();
    if norm_sq == 0.0 {
        let shift = spec.a * leaky(spec.alpha, spec.beta);
        let mut b = ProgramBuilder::new(d);
        if shift != 0.0 {
            let mut e = Vector::zeros(d);
            e[spec.j] = shift;
            b.push(PrimitiveField::translation(e)?, 1.0)?;
        }
        return b.build(Family::F1);
    }

    if spec.beta != 0.0 {
        // T(x) = T̃(x + c) - c with c = β w / ‖w‖².
        let c = &spec.w * (spec.beta / norm_sq);
        let unbiased = TwoPieceMapSpec {
            beta: 0.0,
            ..spec.clone()
        };
        let inner = compile_unbiased(&unbiased, &domain.translate(&c))?;
        let mut b = ProgramBuilder::new(d);
        b.push(PrimitiveField::translation(c.clone())?, 1.0)?;
        b.append(&inner)?;
        b.push(PrimitiveField::translation(-c)?, 1.0)?;
        return b.build(Family::F1);
    }
    compile_unbiased(spec, domain)
}

fn compile_unbiased(spec: &TwoPieceMapSpec, domain: &BoxDomain) -> Result<FlowProgram> {
    let d = spec.dim();
    let j = spec.j;
    let pivot = (0..d)
        .filter(|&l| l != j && spec.w[l] != 0.0)
        .max_by(|&p, &q| spec.w[p].abs().total_cmp(&spec.w[q].abs()));

    let Some(l) = pivot else {
        return single_coordinate(spec, domain);
    };

    // a σ_α(ν) = (-a α) σ_{1/α}(-ν) makes the pivot weight positive.
    let (a, w, alpha) = if spec.w[l] < 0.0 {
        (-spec.a * spec.alpha, -&spec.w, 1.0 / spec.alpha)
    } else {
        (spec.a, spec.w.clone(), spec.alpha)
    };
    let zero = Vector::zeros(d);

    // F0: replace coordinate l by ν = w·x.
    let mut lift = Matrix::identity(d, d);
    lift.row_mut(l).copy_from(&w.transpose());
    let lift_inv = lift
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix { det: w[l] })?;
    // F2: x_j += a x_l.
    let mut shear = Matrix::identity(d, d);
    shear[(j, l)] = a;
    // F4: ν ↦ ν + w_j a σ_α(ν) = (1 + a w_j) σ_γ(ν).
    let scale = 1.0 + a * w[j];
    let gamma = (1.0 + alpha * a * w[j]) / scale;
    let mut stretch = Matrix::identity(d, d);
    stretch[(l, l)] = scale;

    let mut b = ProgramBuilder::new(d);
    let mut current = domain.clone();

    b.append(&affine_program(&lift, &zero)?)?;
    current = current.linear_image(&lift, &zero);

    b.append(&coordinate_leaky_flow(l, alpha, &current)?)?;
    current = leaky_image(&current, l, alpha);

    b.append(&affine_program(&shear, &zero)?)?;
    current = current.linear_image(&shear, &zero);

    b.append(&coordinate_leaky_flow(l, 1.0 / alpha, &current)?)?;
    current = leaky_image(&current, l, 1.0 / alpha);

    b.append(&coordinate_leaky_flow(l, gamma, &current)?)?;
    b.append(&affine_program(&stretch, &zero)?)?;

    b.append(&affine_program(&lift_inv, &zero)?)?;
    b.build(Family::F1)
}

/// `w` supported on `j` alone: `T = diag(…, λ, …) ∘ σ_γ⃗` on coordinate `j`.
fn single_coordinate(spec: &TwoPieceMapSpec, domain: &BoxDomain) -> Result<FlowProgram> {
    let d = spec.dim();
    let j = spec.j;
    let aw = spec.a * spec.w[j];
    let (lambda, gamma) = single_coordinate_factors(aw, spec.alpha, spec.w[j] > 0.0);
    let mut stretch = Matrix::identity(d, d);
    stretch[(j, j)] = lambda;
    let mut b = ProgramBuilder::new(d);
    b.append(&coordinate_leaky_flow(j, gamma, domain)?)?;
    b.append(&affine_program(&stretch, &Vector::zeros(d))?)?;
    b.build(Family::F1)
}

/// `(λ, γ)` for the single-coordinate case, chosen by the sign of `w_j`.
pub fn single_coordinate_factors(aw: f64, alpha: f64, positive_weight: bool) -> (f64, f64) {
    if positive_weight {
        let lambda = 1.0 + aw;
        (lambda, (1.0 + alpha * aw) / lambda)
    } else {
        let lambda = 1.0 + alpha * aw;
        (lambda, (1.0 + aw) / lambda)
    }
}

fn leaky_image(domain: &BoxDomain, i: usize, alpha: f64) -> BoxDomain {
    domain.monotone_image(|x| {
        let mut y = x.clone();
        y[i] = leaky(alpha, y[i]);
        y
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn spec(j: usize, a: f64, w: &[f64], beta: f64, alpha: f64) -> TwoPieceMapSpec {
        TwoPieceMapSpec {
            j,
            a,
            w: v(w),
            beta,
            alpha,
        }
    }

    fn sup_dev(s: &TwoPieceMapSpec, k: &BoxDomain, m: usize) -> f64 {
        let p = compile_two_piece(s, k).unwrap();
        assert_eq!(p.family(), Family::F1);
        k.grid(m)
            .iter()
            .map(|x| (p.eval(x).unwrap() - eval_two_piece(s, x)).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn eval_examples() {
        let x = v(&[0.4, -2.0]);
        assert_eq!(eval_two_piece(&spec(1, 0.0, &[1.0, 1.0], 0.3, 0.5), &x), x);
        let y = eval_two_piece(&spec(1, 0.5, &[1.0, 0.0], 0.0, 0.5), &v(&[-1.0, 1.0]));
        assert_eq!(y, v(&[-1.0, 0.75]));
        let y = eval_two_piece(&spec(0, 2.0, &[0.0, 0.0], 1.0, 1.0), &x);
        assert_eq!(y, v(&[2.4, -2.0]));
    }

    #[test]
    fn compile_examples() {
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        assert!(compile_two_piece(&spec(1, 0.0, &[1.0, 0.0], 0.0, 0.5), &k)
            .unwrap()
            .is_empty());
        assert!(sup_dev(&spec(1, 0.5, &[1.0, 0.0], 0.0, 0.5), &k, 20) <= 1e-9);
        assert!(sup_dev(&spec(1, 0.5, &[0.0, 0.8], 0.0, 0.5), &k, 20) <= 1e-9);
    }

    #[test]
    fn single_coordinate_case_table() {
        let (lambda, gamma) = single_coordinate_factors(0.5 * 0.8, 0.5, true);
        assert!((lambda - 1.4).abs() < 1e-15);
        assert!((gamma - 1.2 / 1.4).abs() < 1e-15);
        let (lambda, gamma) = single_coordinate_factors(-0.4, 0.5, false);
        assert!((lambda - 0.8).abs() < 1e-15);
        assert!((gamma - 0.6 / 0.8).abs() < 1e-15);
    }

    #[test]
    fn general_cases() {
        let k = BoxDomain::cube(3, -1.5, 1.0).unwrap();
        for s in [
            spec(2, 0.4, &[0.7, -0.3, 0.5], 0.2, 0.3),
            spec(0, -0.3, &[0.9, -1.2, 0.4], -0.5, 2.5),
            spec(1, 0.6, &[-0.8, 0.2, 0.1], 0.0, 0.6),
            spec(1, 0.6, &[0.0, -1.1, 0.0], 0.7, 0.6),
            spec(0, 0.3, &[0.0, 0.0, 0.0], -0.4, 0.2),
        ] {
            assert!(sup_dev(&s, &k, 9) <= 1e-9, "{s:?}");
        }
    }

    #[test]
    fn single_coordinate_in_one_dimension() {
        let k = BoxDomain::cube(1, -2.0, 2.0).unwrap();
        // With α < 1, a > 0 gives γ < 1, which needs no partner coordinate.
        assert!(sup_dev(&spec(0, 0.5, &[0.8], 0.3, 0.5), &k, 41) <= 1e-9);
        assert!(sup_dev(&spec(0, 0.5, &[-0.8], 0.0, 0.5), &k, 41) <= 1e-9);
        for s in [
            spec(0, -0.5, &[0.8], 0.0, 0.5),
            spec(0, -0.5, &[-0.8], 0.0, 0.5),
        ] {
            assert!(matches!(
                compile_two_piece(&s, &k),
                Err(Error::DimensionTooSmall { .. })
            ));
        }
    }

    #[test]
    fn condition_boundary_rejected() {
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        for s in [
            spec(1, 1.0, &[0.3, 1.0], 0.0, 0.5),
            spec(1, 0.5, &[0.3, 1.0], 0.0, 2.0),
            spec(0, -2.0, &[0.6, 0.3], 0.0, 0.9),
        ] {
            assert!(matches!(
                compile_two_piece(&s, &k),
                Err(Error::ConditionViolated(_))
            ));
        }
    }

    #[test]
    fn bias_absorption_matches_conjugation() {
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let s = spec(0, 0.4, &[0.6, 0.8], 0.5, 0.3);
        let c = &s.w * (s.beta / s.w.norm_squared());
        let direct = compile_two_piece(&s, &k).unwrap();
        let inner = compile_two_piece(
            &TwoPieceMapSpec {
                beta: 0.0,
                ..s.clone()
            },
            &k.translate(&c),
        )
        .unwrap();
        for x in k.grid(9) {
            let conj = inner.eval(&(&x + &c)).unwrap() - &c;
            assert!((direct.eval(&x).unwrap() - conj).amax() <= 1e-10);
        }
    }

    #[test]
    fn lift_and_inverse_compose_to_identity() {
        let w = v(&[0.5, 1.3, -0.2]);
        let mut lift = Matrix::identity(3, 3);
        lift.row_mut(1).copy_from(&w.transpose());
        let inv = lift.clone().try_inverse().unwrap();
        let zero = Vector::zeros(3);
        let round = affine_program(&lift, &zero)
            .unwrap()
            .compose(&affine_program(&inv, &zero).unwrap())
            .unwrap();
        for x in BoxDomain::cube(3, -1.0, 1.0).unwrap().grid(5) {
            assert!((round.eval(&x).unwrap() - &x).amax() <= 1e-10);
        }
    }

    #[test]
    fn box_image_encloses() {
        let s = spec(1, -0.7, &[0.6, 0.8], 0.2, 0.3);
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let img = s.box_image(&k);
        for x in k.grid(15) {
            assert!(img.contains(&eval_two_piece(&s, &x), 1e-12));
        }
    }
}
