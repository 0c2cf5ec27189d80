//! Constructions beyond the compilers: the product formula for sums of
//! fields, the commutator flow, rescaling of a single ReLU summand and the
//! zoom-in linearization of a scalar function.

use crate::error::{Error, Result};
use crate::factor::affine_program;
use crate::linalg::{Matrix, Vector};
use crate::model::{BoxDomain, Family, FlowProgram, FlowStep, PrimitiveField, ProgramBuilder};
use crate::relu::coordinate_leaky_flow;

/// `f = Σ a_i f_i` with `a_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFieldSum {
    dim: usize,
    terms: Vec<(f64, PrimitiveField)>,
}

impl WeightedFieldSum {
    pub fn new(dim: usize, terms: Vec<(f64, PrimitiveField)>) -> Result<Self> {
        for (index, (a, f)) in terms.iter().enumerate() {
            if !(*a >= 0.0) || !a.is_finite() {
                return Err(Error::NegativeCoefficient { index, value: *a });
            }
            if let Some(found) = f.dim().filter(|&k| k != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found,
                });
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(f64, PrimitiveField)] {
        &self.terms
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        self.terms
            .iter()
            .fold(Vector::zeros(self.dim), |acc, (a, f)| acc + f.eval(x) * *a)
    }
}

/// `(φ^{a_m τ/n}_{f_m} ∘ ⋯ ∘ φ^{a_1 τ/n}_{f_1})^{∘n}`.
pub fn product_formula_program(sum: &WeightedFieldSum, tau: f64, n: usize) -> Result<FlowProgram> {
    if !(tau >= 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need tau >= 0 and n >= 1, got tau = {tau}, n = {n}"
        )));
    }
    let mut steps = Vec::with_capacity(n * sum.terms.len());
    if tau > 0.0 {
        for _ in 0..n {
            for (a, f) in &sum.terms {
                if *a > 0.0 {
                    steps.push(FlowStep::new(f.clone(), a * tau / n as f64));
                }
            }
        }
    }
    FlowProgram::minimal(sum.dim, steps)
}

/// `φ^{√τ}_{-g} ∘ φ^{√τ}_{-f} ∘ φ^{√τ}_{g} ∘ φ^{√τ}_{f}`, which approximates
/// the flow of the bracket `[f, g]` for time `τ`.
pub fn commutator_program(
    dim: usize,
    f: &PrimitiveField,
    g: &PrimitiveField,
    tau: f64,
) -> Result<FlowProgram> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be >= 0")));
    }
    if tau == 0.0 {
        return FlowProgram::minimal(dim, Vec::new());
    }
    let s = tau.sqrt();
    let steps = [f.clone(), g.clone(), f.negated(), g.negated()]
        .into_iter()
        .map(|field| FlowStep::new(field, s))
        .collect();
    FlowProgram::minimal(dim, steps)
}

/// Rescaled slope and duration of the middle flow: `(w/λ, |s| λ τ)` when
/// `i = j`, `(w/λ, |s| τ)` otherwise.
pub fn rescaled_parameters(
    s: f64,
    i: usize,
    j: usize,
    w: f64,
    tau: f64,
    lambda: f64,
) -> (f64, f64) {
    let factor = if i == j { lambda } else { 1.0 };
    (w / lambda, s.abs() * factor * tau)
}

/// Direct value of `v(x) = s e_i σ₀(w δ_ij x_j + b_i)`.
pub fn rescale_field(s: f64, i: usize, j: usize, w: f64, b: &Vector, x: &Vector) -> Vector {
    let pre = if i == j { w * x[j] } else { 0.0 } + b[i];
    let mut out = Vector::zeros(x.len());
    out[i] = s * pre.max(0.0);
    out
}

/// `φ^τ_v` for `v(x) = s e_i σ₀(w δ_ij x_j + b_i)`, written as
/// `φ^{ln λ}_{-E_jj·} ∘ φ^T_ṽ ∘ φ^{ln λ}_{E_jj·}` where `ṽ` has slope `w/λ`
/// and unit output weight `sgn(s)`. The middle flow is realized in closed
/// form from translations, a coordinate leaky-ReLU and a diagonal scaling,
/// and is valid on `domain`.
#[allow(clippy::too_many_arguments)]
pub fn restricted_rescale(
    s: f64,
    i: usize,
    j: usize,
    w: f64,
    b: &Vector,
    tau: f64,
    lambda: f64,
    domain: &BoxDomain,
) -> Result<FlowProgram> {
    let d = domain.dim();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.len(),
        });
    }
    if i >= d || j >= d {
        return Err(Error::InvalidArgument(format!(
            "indices ({i}, {j}) out of range for dimension {d}"
        )));
    }
    let bound = w.abs().max(1.0);
    if !(lambda > bound) {
        return Err(Error::LambdaTooSmall { lambda, bound });
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be >= 0")));
    }

    let mut e_jj = Matrix::zeros(d, d);
    e_jj[(j, j)] = 1.0;
    let (mu, duration) = rescaled_parameters(s, i, j, w, tau, lambda);
    let sign = s.signum();

    let mut stretch = Matrix::identity(d, d);
    stretch[(j, j)] = lambda;
    let scaled = domain.linear_image(&stretch, &Vector::zeros(d));

    let mut builder = ProgramBuilder::new(d);
    builder.push(PrimitiveField::linear(e_jj.clone())?, lambda.ln())?;
    if s != 0.0 && duration > 0.0 {
        builder.append(&middle_flow(i, j, mu, b[i], sign, duration, &scaled)?)?;
    }
    builder.push(PrimitiveField::linear(-e_jj)?, lambda.ln())?;
    builder.build(Family::F1)
}

/// Time-`T` flow of `u̇ = sign · σ₀(μ u + β)` on coordinate `i` (`μ` is zero
/// unless `i = j`).
fn middle_flow(
    i: usize,
    j: usize,
    mu: f64,
    beta: f64,
    sign: f64,
    duration: f64,
    domain: &BoxDomain,
) -> Result<FlowProgram> {
    let d = domain.dim();
    let mut e_i = Vector::zeros(d);
    e_i[i] = 1.0;
    let mut builder = ProgramBuilder::new(d);
    if i != j || mu == 0.0 {
        let shift = sign * beta.max(0.0) * duration;
        if shift != 0.0 {
            builder.push(PrimitiveField::translation(e_i * shift)?, 1.0)?;
        }
        return builder.build(Family::F1);
    }

    // z = μ u + β obeys ż = sign μ σ₀(z): positive z grows by κ, the rest is fixed.
    let kink = -beta / mu;
    let kappa = (sign * mu * duration).exp();
    let to_kink = &e_i * -kink;
    let centered = domain.translate(&to_kink);
    builder.push(PrimitiveField::translation(to_kink.clone())?, 1.0)?;
    if mu > 0.0 {
        // u − p ↦ κ σ_{1/κ}(u − p)
        builder.append(&coordinate_leaky_flow(i, 1.0 / kappa, &centered)?)?;
        let mut scale = Matrix::identity(d, d);
        scale[(i, i)] = kappa;
        builder.append(&affine_program(&scale, &Vector::zeros(d))?)?;
    } else {
        // u − p ↦ σ_κ(u − p)
        builder.append(&coordinate_leaky_flow(i, kappa, &centered)?)?;
    }
    builder.push(PrimitiveField::translation(-to_kink)?, 1.0)?;
    builder.build(Family::F1)
}

/// Outcome of [`zoom_linearize`]: `g(x) = d_coef · p(shift + μ x) + c_coef`
/// approximates the identity on `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomResult {
    pub d_coef: f64,
    pub mu: f64,
    pub shift: f64,
    pub c_coef: f64,
    pub sup_dev: f64,
    pub delta: f64,
}

const ZOOM_DELTA_RANGE: (f64, f64) = (1e-12, 1.0);
const ZOOM_BISECTIONS: usize = 40;

fn derivative<P: Fn(f64) -> f64>(p: &P, xi: f64) -> Result<f64> {
    let h = 1e-5 * xi.abs().max(1.0);
    let derivative = (p(xi + h) - p(xi - h)) / (2.0 * h);
    if !(derivative.abs() > 1e-6) {
        return Err(Error::ZeroDerivative { derivative });
    }
    Ok(derivative)
}

fn zoom_at<P: Fn(f64) -> f64>(
    p: &P,
    xi: f64,
    m: f64,
    slope: f64,
    delta: f64,
    n_samples: usize,
) -> ZoomResult {
    let mu = delta / m;
    let d_coef = m / (slope * delta);
    let base = p(xi);
    let sup_dev = (0..n_samples)
        .map(|k| {
            let x = if n_samples == 1 {
                0.0
            } else {
                -m + 2.0 * m * k as f64 / (n_samples - 1) as f64
            };
            (d_coef * (p(xi + mu * x) - base) - x).abs()
        })
        .fold(0.0, f64::max);
    ZoomResult {
        d_coef,
        mu,
        shift: xi,
        c_coef: -d_coef * base,
        sup_dev,
        delta,
    }
}

fn check_zoom_args(m: f64, n_samples: usize) -> Result<()> {
    if !(m > 1.0) || n_samples == 0 {
        return Err(Error::InvalidArgument(format!(
            "need M > 1 and at least one sample, got M = {m}, n = {n_samples}"
        )));
    }
    Ok(())
}

/// Deviation `max |g(x) − x|` over `[-M, M]` for a fixed `δ`.
pub fn zoom_deviation<P: Fn(f64) -> f64>(
    p: P,
    xi: f64,
    m: f64,
    delta: f64,
    n_samples: usize,
) -> Result<ZoomResult> {
    check_zoom_args(m, n_samples)?;
    let slope = derivative(&p, xi)?;
    Ok(zoom_at(&p, xi, m, slope, delta, n_samples))
}

/// A large `δ ∈ [1e-12, 1]` whose zoomed map is within `target` of the
/// identity on `[-M, M]`.
///
/// `δ` is lowered by decades until the target is met, then refined by
/// geometric bisection against the last failing decade. Rounding grows as
/// `δ` shrinks, so the deviation is not monotone; when no decade meets the
/// target the best one is returned.
pub fn zoom_linearize<P: Fn(f64) -> f64>(
    p: P,
    xi: f64,
    m: f64,
    n_samples: usize,
    target: f64,
) -> Result<ZoomResult> {
    check_zoom_args(m, n_samples)?;
    let slope = derivative(&p, xi)?;
    let (floor, mut delta) = ZOOM_DELTA_RANGE;
    let mut best = zoom_at(&p, xi, m, slope, delta, n_samples);
    if best.sup_dev <= target {
        return Ok(best);
    }
    while delta > floor {
        let hi = delta;
        delta = (delta / 10.0).max(floor);
        let r = zoom_at(&p, xi, m, slope, delta, n_samples);
        if r.sup_dev <= target {
            let (mut lo, mut hi, mut good) = (delta, hi, r);
            for _ in 0..ZOOM_BISECTIONS {
                let mid = (lo * hi).sqrt();
                let r = zoom_at(&p, xi, m, slope, mid, n_samples);
                if r.sup_dev <= target {
                    lo = mid;
                    good = r;
                } else {
                    hi = mid;
                }
            }
            return Ok(good);
        }
        if r.sup_dev < best.sup_dev {
            best = r;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{affine_flow_matrices, expm};
    use crate::relu::leaky;
    use crate::verify::integrate_rk4;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn weighted_sum_rejects_negative_coefficients() {
        let err = WeightedFieldSum::new(
            2,
            vec![(1.0, PrimitiveField::Relu), (-0.5, PrimitiveField::Relu)],
        );
        assert!(matches!(
            err,
            Err(Error::NegativeCoefficient { index: 1, .. })
        ));
    }

    #[test]
    fn product_formula_examples() {
        let a = Matrix::from_row_slice(2, 2, &[0.1, -0.7, 0.5, -0.2]);
        let single =
            WeightedFieldSum::new(2, vec![(1.0, PrimitiveField::linear(a.clone()).unwrap())])
                .unwrap();
        let p = product_formula_program(&single, 0.8, 1).unwrap();
        assert_eq!(p.len(), 1);
        let x = v(&[0.3, -0.4]);
        let exact = expm(&(&a * 0.8)).unwrap() * &x;
        assert!((p.eval(&x).unwrap() - exact).amax() <= 1e-14);
        assert!(product_formula_program(&single, 0.0, 5).unwrap().is_empty());

        let b = v(&[0.6, -0.3]);
        let sum = WeightedFieldSum::new(
            2,
            vec![
                (1.0, PrimitiveField::linear(a.clone()).unwrap()),
                (1.0, PrimitiveField::translation(b.clone()).unwrap()),
            ],
        )
        .unwrap();
        let (wt, ct) = affine_flow_matrices(&a, &b, 1.0).unwrap();
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let err = |n| {
            let p = product_formula_program(&sum, 1.0, n).unwrap();
            k.grid(7)
                .iter()
                .map(|x| (p.eval(x).unwrap() - (&wt * x + &ct)).amax())
                .fold(0.0, f64::max)
        };
        assert!(err(64) < err(8));
    }

    #[test]
    fn commutator_examples() {
        let mut e12 = Matrix::zeros(2, 2);
        e12[(0, 1)] = 1.0;
        let f = PrimitiveField::linear(e12.clone()).unwrap();
        let g = PrimitiveField::linear(e12.transpose()).unwrap();
        assert!(commutator_program(2, &f, &g, 0.0).unwrap().is_empty());

        let x = v(&[0.7, -0.4]);
        let err = |tau: f64| {
            let p = commutator_program(2, &f, &g, tau).unwrap();
            let oracle = expm(&Matrix::from_diagonal(&v(&[-tau, tau]))).unwrap();
            (p.eval(&x).unwrap() - oracle * &x).amax()
        };
        for tau in [1e-2, 1e-3] {
            let ratio = err(tau / 4.0) / err(tau);
            assert!(ratio <= 0.6, "tau {tau}: ratio {ratio}");
            let order = -ratio.log(4.0);
            assert!(order >= 1.2, "tau {tau}: order {order}");
        }
        let same = commutator_program(2, &f, &f, 0.3).unwrap();
        assert!((same.eval(&x).unwrap() - &x).amax() <= 1e-9);

        let relu = commutator_program(2, &PrimitiveField::Relu, &f, 0.1).unwrap();
        assert_eq!(relu.family(), Family::F2);
    }

    #[test]
    fn rescale_parameters_follow_index_rule() {
        assert_eq!(rescaled_parameters(-2.0, 1, 1, 3.0, 0.5, 4.0), (0.75, 4.0));
        assert_eq!(rescaled_parameters(-2.0, 0, 1, 3.0, 0.5, 4.0), (0.75, 1.0));
    }

    fn rescale_dev(s: f64, i: usize, j: usize, w: f64, b: &Vector, tau: f64, lambda: f64) -> f64 {
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let p = restricted_rescale(s, i, j, w, b, tau, lambda, &k).unwrap();
        assert_eq!(p.family(), Family::F1);
        k.grid(11)
            .iter()
            .map(|x| {
                let exact =
                    integrate_rk4(|y, _| rescale_field(s, i, j, w, b, y), x, 0.0, tau, 4000)
                        .unwrap();
                (p.eval(x).unwrap() - exact).amax()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn restricted_rescale_matches_rk4() {
        let b = v(&[0.3, -0.2]);
        assert!(rescale_dev(1.0, 0, 0, 2.0, &b, 0.3, 4.0) <= 1e-6);
        assert!(rescale_dev(-0.8, 1, 1, 1.5, &b, 0.5, 2.0) <= 1e-6);
        assert!(rescale_dev(0.9, 1, 1, -1.5, &b, 0.4, 3.0) <= 1e-6);
        assert!(rescale_dev(-1.2, 0, 0, -0.5, &b, 0.7, 1.5) <= 1e-6);
        assert!(rescale_dev(0.6, 0, 1, 2.0, &b, 0.3, 4.0) <= 1e-12);
        assert!(rescale_dev(0.6, 0, 0, 0.0, &b, 0.3, 4.0) <= 1e-12);
    }

    #[test]
    fn restricted_rescale_rejects_small_lambda() {
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let b = Vector::zeros(2);
        assert!(matches!(
            restricted_rescale(1.0, 0, 0, 2.0, &b, 0.3, 2.0, &k),
            Err(Error::LambdaTooSmall { .. })
        ));
        assert!(matches!(
            restricted_rescale(1.0, 0, 0, 0.5, &b, 0.3, 1.0, &k),
            Err(Error::LambdaTooSmall { .. })
        ));
    }

    #[test]
    fn zoom_examples() {
        let r = zoom_linearize(|x| 2.0 * x, 0.7, 2.0, 101, 1e-9).unwrap();
        assert!(r.sup_dev <= 1e-9);
        assert_eq!(r.delta, 1.0);

        let r = zoom_deviation(|x| x * x, 1.0, 2.0, 0.01, 201).unwrap();
        assert!(r.sup_dev <= 0.02);
        assert!((r.sup_dev - 0.01).abs() <= 1e-6);

        let devs: Vec<f64> = [10.0, 5.0, 2.0, 1.0, 0.5]
            .iter()
            .map(|&delta| {
                zoom_deviation(|x| leaky(0.5, x), 1.0, 2.0, delta, 101)
                    .unwrap()
                    .sup_dev
            })
            .collect();
        assert!(devs[0] > 0.1);
        assert!(devs.windows(2).all(|w| w[1] <= w[0]));
        assert!(devs[4] <= 1e-9);

        let r = zoom_linearize(f64::sin, 0.3, 3.0, 101, 1e-4).unwrap();
        assert!(r.sup_dev <= 1e-4);
        let g = |x: f64| r.d_coef * (r.shift + r.mu * x).sin() + r.c_coef;
        assert!((g(1.5) - 1.5).abs() <= 1e-4);

        assert!(matches!(
            zoom_linearize(|_| 1.0, 0.0, 2.0, 11, 0.1),
            Err(Error::ZeroDerivative { .. })
        ));
    }
}
