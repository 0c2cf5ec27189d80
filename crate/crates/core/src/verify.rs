//! Reference oracles and error measures: a fixed-step RK4 integrator, sup and
//! Monte Carlo L^p errors, Grönwall-type bounds, finite-difference Jacobians
//! and one-dimensional convexity checks.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::BoxDomain;

/// Step size for [`jacobian_det`] when the caller has no better choice.
pub const JACOBIAN_STEP: f64 = 1e-5;
/// Slack allowed on second differences by [`convexity_check_1d`].
pub const CONVEXITY_SLACK: f64 = 1e-8;

/// Classical fixed-step RK4 for `ẋ = v(x, t)` from `t0` to `t1`.
pub fn integrate_rk4<F>(field: F, x0: &Vector, t0: f64, t1: f64, steps: usize) -> Result<Vector>
where
    F: Fn(&Vector, f64) -> Vector,
{
    integrate_rk4_segmented(field, x0, t0, t1, steps, &[])
}

/// RK4 that never steps across a breakpoint.
///
/// The interval is cut at every breakpoint inside `(t0, t1)` and each segment
/// gets a share of `steps` proportional to its length (at least one). Within
/// a segment the field is evaluated at times strictly below the segment end,
/// so right-continuous piecewise-constant fields see the piece that is active
/// on that segment.
pub fn integrate_rk4_segmented<F>(
    field: F,
    x0: &Vector,
    t0: f64,
    t1: f64,
    steps: usize,
    breakpoints: &[f64],
) -> Result<Vector>
where
    F: Fn(&Vector, f64) -> Vector,
{
    integrate_rk4_refined(field, |_, _| (), x0, t0, t1, steps, breakpoints, 1)
}

/// Segmented RK4 for fields that are smooth only within regimes.
///
/// `regime(x, t)` labels the smooth piece of the field containing `x`. A step
/// whose end point lies in a different regime than its start point is redone
/// with `refine` substeps, which keeps kink crossings from dominating the
/// error.
#[allow(clippy::too_many_arguments)]
pub fn integrate_rk4_refined<F, R, S>(
    field: F,
    regime: R,
    x0: &Vector,
    t0: f64,
    t1: f64,
    steps: usize,
    breakpoints: &[f64],
    refine: usize,
) -> Result<Vector>
where
    F: Fn(&Vector, f64) -> Vector,
    R: Fn(&Vector, f64) -> S,
    S: PartialEq,
{
    if steps == 0 || refine == 0 {
        return Err(Error::InvalidArgument("RK4 needs at least one step".into()));
    }
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{t0}, {t1}] is not ordered"
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if t1 == t0 {
        return Ok(x0.clone());
    }

    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t1)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(t0);
    edges.extend(cuts);
    edges.push(t1);

    let span = t1 - t0;
    let mut x = x0.clone();
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = ((steps as f64) * (b - a) / span).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        let last = b.next_down();
        let at = |t: f64| t.min(last);
        let step = |x: &Vector, t: f64, h: f64| {
            let k1 = field(x, at(t));
            let k2 = field(&(x + &k1 * (h / 2.0)), at(t + h / 2.0));
            let k3 = field(&(x + &k2 * (h / 2.0)), at(t + h / 2.0));
            let k4 = field(&(x + &k3 * h), at(t + h));
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        };
        for k in 0..n {
            let t = a + k as f64 * h;
            let mut next = step(&x, t, h);
            if refine > 1 && regime(&x, at(t)) != regime(&next, at(t)) {
                let sub = h / refine as f64;
                next = x.clone();
                for m in 0..refine {
                    next = step(&next, t + m as f64 * sub, sub);
                }
            }
            x = next;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { t: t + h });
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Metric {
    Sup,
    Lp(f64),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Sup => f.write_str("sup"),
            Metric::Lp(_) => f.write_str("lp"),
        }
    }
}

/// A measured distance between two maps on a box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub metric: Metric,
    pub value: f64,
    /// Number of grid points or Monte Carlo samples.
    pub points: usize,
    /// Seed of the sample stream; `None` for deterministic grids.
    pub seed: Option<u64>,
}

impl ErrorReport {
    pub const CSV_HEADER: &'static str = "metric,p,value,points,seed";

    pub fn csv_row(&self) -> String {
        let p = match self.metric {
            Metric::Sup => String::new(),
            Metric::Lp(p) => format!("{p}"),
        };
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "{},{p},{:.16e},{},{seed}",
            self.metric, self.value, self.points
        )
    }
}

/// Largest max-norm difference of two maps over a list of points.
pub fn sup_error_at<A, B>(map_a: A, map_b: B, points: &[Vector]) -> Result<f64>
where
    A: Fn(&Vector) -> Result<Vector> + Sync,
    B: Fn(&Vector) -> Result<Vector> + Sync,
{
    points
        .par_iter()
        .map(|x| {
            let ya = map_a(x)?;
            let yb = map_b(x)?;
            if ya.len() != yb.len() {
                return Err(Error::DimensionMismatch {
                    expected: ya.len(),
                    found: yb.len(),
                });
            }
            Ok((ya - yb).amax())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Sup-norm error on a regular grid with `points_per_axis` points per axis.
pub fn sup_error<A, B>(
    map_a: A,
    map_b: B,
    domain: &BoxDomain,
    points_per_axis: usize,
) -> Result<ErrorReport>
where
    A: Fn(&Vector) -> Result<Vector> + Sync,
    B: Fn(&Vector) -> Result<Vector> + Sync,
{
    let grid = domain.grid(points_per_axis);
    let value = sup_error_at(map_a, map_b, &grid)?;
    Ok(ErrorReport {
        metric: Metric::Sup,
        value,
        points: grid.len(),
        seed: None,
    })
}

/// Monte Carlo estimate of `(∫_K ‖a(x) − b(x)‖_∞^p dx)^{1/p}`.
///
/// Samples are drawn sequentially from one seeded stream and summed in
/// order, so the result does not depend on the thread count.
pub fn lp_error<A, B>(
    map_a: A,
    map_b: B,
    domain: &BoxDomain,
    p: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ErrorReport>
where
    A: Fn(&Vector) -> Result<Vector> + Sync,
    B: Fn(&Vector) -> Result<Vector> + Sync,
{
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "p = {p} must lie in [1, inf)"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "lp_error needs at least one sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vector> = (0..n_samples).map(|_| domain.sample(&mut rng)).collect();
    let terms = samples
        .par_iter()
        .map(|x| Ok((map_a(x)? - map_b(x)?).amax().powf(p)))
        .collect::<Result<Vec<f64>>>()?;
    let mean = terms.iter().sum::<f64>() / n_samples as f64;
    Ok(ErrorReport {
        metric: Metric::Lp(p),
        value: (domain.volume() * mean).powf(1.0 / p),
        points: n_samples,
        seed: Some(seed),
    })
}

/// `δ = min(1, ε / (τ e^{Lτ}))`.
pub fn gronwall_delta(eps: f64, tau: f64, lipschitz: f64) -> f64 {
    (eps / (tau * (lipschitz * tau).exp())).min(1.0)
}

/// Radius `(V + 1) τ e^{Lτ}` by which trajectories of length `τ` can leave a set.
pub fn inflation_radius(tau: f64, lipschitz: f64, speed: f64) -> f64 {
    (speed + 1.0) * tau * (lipschitz * tau).exp()
}

pub fn inflate_domain(domain: &BoxDomain, tau: f64, lipschitz: f64, speed: f64) -> BoxDomain {
    domain.inflate(inflation_radius(tau, lipschitz, speed))
}

/// Central-difference Jacobian of `map` at `x`.
pub fn jacobian<F>(map: F, x: &Vector, h: f64) -> Result<Matrix>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let d = x.len();
    let mut jac = Matrix::zeros(d, d);
    for k in 0..d {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        let col = (map(&plus)? - map(&minus)?) / (2.0 * h);
        if col.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: col.len(),
            });
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularStencil);
        }
        jac.set_column(k, &col);
    }
    Ok(jac)
}

pub fn jacobian_det<F>(map: F, x: &Vector, h: f64) -> Result<f64>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    Ok(jacobian(map, x, h)?.determinant())
}

fn interval_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// True iff every second difference of `map` on an `n_grid`-point grid of
/// `[lo, hi]` is at least `-CONVEXITY_SLACK`.
pub fn convexity_check_1d<F>(map: F, lo: f64, hi: f64, n_grid: usize) -> Result<bool>
where
    F: Fn(f64) -> Result<f64>,
{
    if n_grid < 3 {
        return Err(Error::InvalidArgument(
            "convexity check needs 3 or more points".into(),
        ));
    }
    let ys = interval_grid(lo, hi, n_grid)
        .into_iter()
        .map(&map)
        .collect::<Result<Vec<f64>>>()?;
    Ok(ys
        .windows(3)
        .all(|w| w[0] - 2.0 * w[1] + w[2] >= -CONVEXITY_SLACK))
}

/// Lower bound on `inf_h sup_x |h(x) − f(x)|` over convex `h`, from sampling
/// `f` at `n_grid` points of `[lo, hi]`.
///
/// For grid points `x_i < x_k < x_j` with `x_k = λ x_i + (1−λ) x_j`, any convex
/// `h` within `e` of `f` satisfies `2e ≥ f(x_k) − λ f(x_i) − (1−λ) f(x_j)`.
/// The bound is the largest such gap over all triples, halved.
pub fn convex_gap_lower_bound<F>(f: F, lo: f64, hi: f64, n_grid: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let xs = interval_grid(lo, hi, n_grid);
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let n = xs.len();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 2..n {
            for k in i + 1..j {
                let lambda = (xs[j] - xs[k]) / (xs[j] - xs[i]);
                let gap = ys[k] - lambda * ys[i] - (1.0 - lambda) * ys[j];
                best = best.max(gap / 2.0);
            }
        }
    }
    best
}
