//! Piecewise-constant leaky-ReLU neural ODEs compiled into F1 programs:
//! forward Euler on every (neuron, coordinate) summand, then every Euler
//! sub-map compiled as a two-piece map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::model::{
    matrix_from_rows, matrix_to_rows, to_json_string, BoxDomain, Family, FlowProgram,
    ProgramBuilder,
};
use crate::relu::eval_leaky;
use crate::two_piece::{compile_two_piece, eval_two_piece, TwoPieceMapSpec};
use crate::verify::{inflate_domain, integrate_rk4_refined};

/// RK4 steps per unit of time used by the reference flow.
pub const REFERENCE_STEPS_PER_UNIT: usize = 4096;
/// Substeps for reference steps that cross a neuron kink.
pub const KINK_REFINEMENT: usize = 64;
/// Largest `n` tried by [`auto_compile`] unless overridden.
pub const DEFAULT_MAX_N: usize = 1 << 20;
/// Seed of the Monte Carlo measurement points used for `d ≥ 4`.
pub const MEASUREMENT_SEED: u64 = 0x5eed;
const MONTE_CARLO_POINTS: usize = 1000;

const DEMO_SPEC: &str = include_str!("../data/demo_spec.json");

/// Parameters `(S, W, b)` active from `t_start` until the next piece starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub t_start: f64,
    /// `d × N`, column `i` is the output weight `s_i`.
    pub s: Matrix,
    /// `N × d`, row `i` is the input weight `w_i`.
    pub w: Matrix,
    pub b: Vector,
}

/// `v(x, t) = Σ_i s_i(t) σ_α(w_i(t)·x + b_i(t))` on `[0, τ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralOdeSpec {
    dim: usize,
    width: usize,
    alpha: f64,
    tau: f64,
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    dim: usize,
    width: usize,
    alpha: f64,
    tau: f64,
    pieces: Vec<PieceDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceDoc {
    t: f64,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl NeuralOdeSpec {
    pub fn new(dim: usize, width: usize, alpha: f64, tau: f64, pieces: Vec<Piece>) -> Result<Self> {
        if dim == 0 || width == 0 {
            return Err(Error::InvalidArgument(
                "dimension and width must be at least 1".into(),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::AlphaOutOfRange { alpha });
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon {tau} must be positive"
            )));
        }
        if pieces.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one piece is required".into(),
            ));
        }
        for (k, p) in pieces.iter().enumerate() {
            let shapes = [
                (p.s.nrows(), dim),
                (p.s.ncols(), width),
                (p.w.nrows(), width),
                (p.w.ncols(), dim),
                (p.b.len(), width),
            ];
            if let Some(&(found, expected)) = shapes.iter().find(|(f, e)| f != e) {
                return Err(Error::DimensionMismatch { expected, found });
            }
            if p.s
                .iter()
                .chain(p.w.iter())
                .chain(p.b.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::NonFiniteInput);
            }
            let ordered = if k == 0 {
                p.t_start == 0.0
            } else {
                p.t_start > pieces[k - 1].t_start && p.t_start < tau
            };
            if !ordered {
                return Err(Error::InvalidArgument(format!(
                    "piece {k} starts at {}; starts must increase from 0 and stay below tau",
                    p.t_start
                )));
            }
        }
        Ok(Self {
            dim,
            width,
            alpha,
            tau,
            pieces,
        })
    }

    /// A single-piece spec whose field vanishes.
    pub fn zero(dim: usize, width: usize, alpha: f64, tau: f64) -> Result<Self> {
        let piece = Piece {
            t_start: 0.0,
            s: Matrix::zeros(dim, width),
            w: Matrix::zeros(width, dim),
            b: Vector::zeros(width),
        };
        Self::new(dim, width, alpha, tau, vec![piece])
    }

    /// The bundled two-neuron example in the plane.
    pub fn demo() -> Self {
        Self::from_json(DEMO_SPEC).expect("bundled spec is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Interior piece boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces.iter().skip(1).map(|p| p.t_start).collect()
    }

    fn piece_at(&self, t: f64) -> &Piece {
        let k = self.pieces.partition_point(|p| p.t_start <= t);
        &self.pieces[k.saturating_sub(1)]
    }

    fn piece_field(&self, piece: &Piece, x: &Vector) -> Vector {
        let pre = &piece.w * x + &piece.b;
        &piece.s * eval_leaky(&Vector::from_element(self.width, self.alpha), &pre)
    }

    /// `v(x, t)`, right-continuous at piece boundaries.
    pub fn field_eval(&self, x: &Vector, t: f64) -> Result<Vector> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tau: self.tau });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.piece_field(self.piece_at(t), x))
    }

    /// `max |S_{j,i} W_{i,j}|` over pieces, neurons `i` and coordinates `j`.
    pub fn coupling_bound(&self) -> f64 {
        self.pieces
            .iter()
            .flat_map(|p| {
                (0..self.width).flat_map(move |i| {
                    (0..self.dim).map(move |j| (p.s[(j, i)] * p.w[(i, j)]).abs())
                })
            })
            .fold(0.0, f64::max)
    }

    /// `N · max_i ‖s_i‖ ‖w_i‖`, a global Lipschitz constant of `v(·, t)`.
    pub fn lipschitz_bound(&self) -> f64 {
        let per_neuron = self
            .pieces
            .iter()
            .flat_map(|p| (0..self.width).map(move |i| p.s.column(i).norm() * p.w.row(i).norm()))
            .fold(0.0, f64::max);
        self.width as f64 * per_neuron
    }

    /// Largest Euclidean field norm over `points` and all pieces.
    pub fn speed_bound(&self, points: &[Vector]) -> f64 {
        self.pieces
            .iter()
            .flat_map(|p| points.iter().map(move |x| self.piece_field(p, x).norm()))
            .fold(0.0, f64::max)
    }

    /// Reference flow `x(τ)` by segmented RK4, refined at kink crossings.
    pub fn reference_flow(&self, x0: &Vector) -> Result<Vector> {
        self.reference_flow_with(x0, self.reference_steps())
    }

    fn reference_steps(&self) -> usize {
        ((REFERENCE_STEPS_PER_UNIT as f64) * self.tau)
            .ceil()
            .max(64.0) as usize
    }

    fn reference_flow_with(&self, x0: &Vector, steps: usize) -> Result<Vector> {
        integrate_rk4_refined(
            |x, t| self.piece_field(self.piece_at(t), x),
            |x, t| {
                let p = self.piece_at(t);
                (&p.w * x + &p.b)
                    .iter()
                    .map(|&z| z > 0.0)
                    .collect::<Vec<_>>()
            },
            x0,
            0.0,
            self.tau,
            steps,
            &self.breakpoints(),
            KINK_REFINEMENT,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text).map_err(Error::from_json)?;
        let (d, n) = (doc.dim, doc.width);
        let mut pieces = Vec::with_capacity(doc.pieces.len());
        for (k, p) in doc.pieces.into_iter().enumerate() {
            let field = format!("pieces[{k}]");
            if p.b.len() != n {
                return Err(Error::parse_field(
                    format!("{field}.b"),
                    format!("expected {n} entries, found {}", p.b.len()),
                ));
            }
            pieces.push(Piece {
                t_start: p.t,
                s: matrix_from_rows(&p.s, d, n, &format!("{field}.S"))?,
                w: matrix_from_rows(&p.w, n, d, &format!("{field}.W"))?,
                b: Vector::from_vec(p.b),
            });
        }
        Self::new(d, n, doc.alpha, doc.tau, pieces).map_err(|e| Error::parse_field("spec", e))
    }

    pub fn to_json(&self) -> String {
        to_json_string(&SpecDoc {
            dim: self.dim,
            width: self.width,
            alpha: self.alpha,
            tau: self.tau,
            pieces: self
                .pieces
                .iter()
                .map(|p| PieceDoc {
                    t: p.t_start,
                    s: matrix_to_rows(&p.s),
                    w: matrix_to_rows(&p.w),
                    b: p.b.iter().copied().collect(),
                })
                .collect(),
        })
    }
}

/// Euler sub-maps for `n` equal steps, ordered by step, then neuron, then
/// coordinate. Parameters are sampled at the left end of each step.
pub fn split_steps(spec: &NeuralOdeSpec, n: usize) -> Vec<TwoPieceMapSpec> {
    let dt = spec.tau / n as f64;
    let mut out = Vec::with_capacity(n * spec.width * spec.dim);
    for k in 0..n {
        let piece = spec.piece_at(k as f64 * dt);
        for i in 0..spec.width {
            let w = piece.w.row(i).transpose();
            for j in 0..spec.dim {
                out.push(TwoPieceMapSpec {
                    j,
                    a: dt * piece.s[(j, i)],
                    w: w.clone(),
                    beta: piece.b[i],
                    alpha: spec.alpha,
                });
            }
        }
    }
    out
}

/// Composition of the Euler sub-maps, evaluated directly.
pub fn discrete_flow(steps: &[TwoPieceMapSpec], x: &Vector) -> Vector {
    steps.iter().fold(x.clone(), |y, s| eval_two_piece(s, &y))
}

/// Points used to measure errors on `domain`: 15 per axis up to `d = 2`, 7 per
/// axis for `d = 3`, and seeded uniform samples beyond.
pub fn measurement_points(domain: &BoxDomain) -> Vec<Vector> {
    match domain.dim() {
        0..=2 => domain.grid(15),
        3 => domain.grid(7),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(MEASUREMENT_SEED);
            (0..MONTE_CARLO_POINTS)
                .map(|_| domain.sample(&mut rng))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileReport {
    pub n: usize,
    pub dt: f64,
    pub coupling_bound: f64,
    pub lipschitz_bound: f64,
    pub speed_bound: f64,
    /// Box on which every sub-map was compiled to be exact.
    pub validity_box: BoxDomain,
    pub program_steps: usize,
    pub points: usize,
    pub compiled_vs_discrete: f64,
    pub discrete_vs_reference: f64,
    pub compiled_vs_reference: f64,
}

impl CompileReport {
    pub const CSV_HEADER: &'static str = "n,dt,coupling_bound,lipschitz_bound,speed_bound,\
program_steps,points,compiled_vs_discrete,discrete_vs_reference,compiled_vs_reference,validity_box";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},\"{}\"",
            self.n,
            self.dt,
            self.coupling_bound,
            self.lipschitz_bound,
            self.speed_bound,
            self.program_steps,
            self.points,
            self.compiled_vs_discrete,
            self.discrete_vs_reference,
            self.compiled_vs_reference,
            self.validity_box
        )
    }
}

fn check_domain(spec: &NeuralOdeSpec, domain: &BoxDomain) -> Result<()> {
    if domain.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            found: domain.dim(),
        });
    }
    Ok(())
}

fn check_step_count(spec: &NeuralOdeSpec, n: usize) -> Result<()> {
    let m = spec.coupling_bound();
    if n == 0 || !((n as f64) > spec.tau * m) {
        return Err(Error::ConditionViolated(format!(
            "n = {n} must exceed tau * M = {}",
            spec.tau * m
        )));
    }
    Ok(())
}

/// Compile with `n` Euler steps, without measuring errors.
///
/// Returns the program and the box it is valid on.
pub fn compile_program(
    spec: &NeuralOdeSpec,
    domain: &BoxDomain,
    n: usize,
) -> Result<(FlowProgram, BoxDomain, f64)> {
    check_domain(spec, domain)?;
    check_step_count(spec, n)?;
    let speed = spec.speed_bound(&measurement_points(domain));
    let validity = inflate_domain(domain, spec.tau, spec.lipschitz_bound(), speed);

    let mut builder = ProgramBuilder::new(spec.dim);
    let mut tracked = domain.clone();
    for sub in split_steps(spec, n) {
        assert!(
            sub.condition_value() < 1.0,
            "n > tau * M keeps every Euler sub-map admissible"
        );
        if sub.a == 0.0 {
            continue;
        }
        let region = validity.hull(&tracked);
        builder.append(&compile_two_piece(&sub, &region)?)?;
        tracked = sub.box_image(&tracked);
    }
    Ok((builder.build(Family::F1)?, validity, speed))
}

/// Compile with `n` Euler steps and measure every stage against the RK4 flow.
pub fn compile(
    spec: &NeuralOdeSpec,
    domain: &BoxDomain,
    n: usize,
) -> Result<(FlowProgram, CompileReport)> {
    let (program, validity, speed) = compile_program(spec, domain, n)?;
    let points = measurement_points(domain);
    let reference = reference_values(spec, &points)?;
    let report = build_report(spec, n, &program, validity, speed, &points, &reference)?;
    Ok((program, report))
}

fn reference_values(spec: &NeuralOdeSpec, points: &[Vector]) -> Result<Vec<Vector>> {
    points.par_iter().map(|x| spec.reference_flow(x)).collect()
}

/// Max-norm distance between `map` and precomputed values at `points`.
fn error_against<F>(map: F, points: &[Vector], values: &[Vector]) -> Result<f64>
where
    F: Fn(&Vector) -> Result<Vector> + Sync,
{
    points
        .par_iter()
        .zip(values)
        .map(|(x, y)| Ok((map(x)? - y).amax()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

fn build_report(
    spec: &NeuralOdeSpec,
    n: usize,
    program: &FlowProgram,
    validity_box: BoxDomain,
    speed_bound: f64,
    points: &[Vector],
    reference: &[Vector],
) -> Result<CompileReport> {
    let steps = split_steps(spec, n);
    let discrete: Vec<Vector> = points.iter().map(|x| discrete_flow(&steps, x)).collect();
    Ok(CompileReport {
        n,
        dt: spec.tau / n as f64,
        coupling_bound: spec.coupling_bound(),
        lipschitz_bound: spec.lipschitz_bound(),
        speed_bound,
        validity_box,
        program_steps: program.len(),
        points: points.len(),
        compiled_vs_discrete: error_against(|x| program.eval(x), points, &discrete)?,
        discrete_vs_reference: error_against(|x| Ok(discrete_flow(&steps, x)), points, reference)?,
        compiled_vs_reference: error_against(|x| program.eval(x), points, reference)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoCompileOptions {
    pub max_n: usize,
}

impl Default for AutoCompileOptions {
    fn default() -> Self {
        Self {
            max_n: DEFAULT_MAX_N,
        }
    }
}

/// First `n` in `n₀, 2n₀, 4n₀, …` whose compiled program is within `eps` of
/// the RK4 flow at the measurement points, with `n₀ = max(⌈τM⌉ + 1, 4)`.
///
/// Candidates are screened with the direct Euler iteration; only those that
/// pass are compiled and measured again.
pub fn auto_compile(
    spec: &NeuralOdeSpec,
    domain: &BoxDomain,
    eps: f64,
    options: AutoCompileOptions,
) -> Result<(FlowProgram, CompileReport)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {eps} must be positive"
        )));
    }
    check_domain(spec, domain)?;
    let points = measurement_points(domain);
    let reference = reference_values(spec, &points)?;

    let mut n = ((spec.tau * spec.coupling_bound()).ceil() as usize + 1).max(4);
    let mut best = f64::INFINITY;
    while n <= options.max_n {
        let steps = split_steps(spec, n);
        let screened = error_against(|x| Ok(discrete_flow(&steps, x)), &points, &reference)?;
        best = best.min(screened);
        if screened <= eps {
            let (program, validity, speed) = compile_program(spec, domain, n)?;
            let report = build_report(spec, n, &program, validity, speed, &points, &reference)?;
            best = best.min(report.compiled_vs_reference);
            if report.compiled_vs_reference <= eps {
                return Ok((program, report));
            }
        }
        n *= 2;
    }
    Err(Error::BudgetExceeded {
        n: n / 2,
        best_error: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn single_neuron(s: &[f64], w: &[f64], b: f64, alpha: f64) -> NeuralOdeSpec {
        let d = s.len();
        let piece = Piece {
            t_start: 0.0,
            s: Matrix::from_column_slice(d, 1, s),
            w: Matrix::from_row_slice(1, d, w),
            b: v(&[b]),
        };
        NeuralOdeSpec::new(d, 1, alpha, 1.0, vec![piece]).unwrap()
    }

    #[test]
    fn field_eval_examples() {
        let zero = NeuralOdeSpec::zero(2, 3, 0.5, 1.0).unwrap();
        assert_eq!(
            zero.field_eval(&v(&[1.0, 2.0]), 0.3).unwrap(),
            Vector::zeros(2)
        );
        let spec = single_neuron(&[1.0, 0.0], &[1.0, 1.0], 0.0, 0.5);
        assert_eq!(
            spec.field_eval(&v(&[1.0, -2.0]), 0.0).unwrap(),
            v(&[-0.5, 0.0])
        );
        assert!(matches!(
            spec.field_eval(&v(&[1.0, -2.0]), 1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn breakpoints_use_later_piece() {
        let demo = NeuralOdeSpec::demo();
        let x = v(&[0.4, -0.3]);
        let at = demo.field_eval(&x, 0.5).unwrap();
        let late = demo.field_eval(&x, 0.75).unwrap();
        let early = demo.field_eval(&x, 0.25).unwrap();
        assert_eq!(at, late);
        assert_ne!(at, early);
    }

    #[test]
    fn coupling_examples() {
        assert_eq!(
            NeuralOdeSpec::zero(2, 2, 0.5, 1.0)
                .unwrap()
                .coupling_bound(),
            0.0
        );
        let spec = single_neuron(&[0.5, 0.0], &[1.0, 0.0], 0.0, 0.5);
        assert_eq!(spec.coupling_bound(), 0.5);
        assert_eq!(NeuralOdeSpec::demo().coupling_bound(), 0.8);
    }

    #[test]
    fn spec_validation() {
        let piece = |t: f64| Piece {
            t_start: t,
            s: Matrix::zeros(2, 1),
            w: Matrix::zeros(1, 2),
            b: Vector::zeros(1),
        };
        assert!(NeuralOdeSpec::new(2, 1, 0.5, 1.0, vec![piece(0.1)]).is_err());
        assert!(NeuralOdeSpec::new(2, 1, 0.5, 1.0, vec![piece(0.0), piece(0.0)]).is_err());
        assert!(NeuralOdeSpec::new(2, 1, 0.5, 1.0, vec![piece(0.0), piece(1.0)]).is_err());
        assert!(matches!(
            NeuralOdeSpec::new(2, 1, 1.0, 1.0, vec![piece(0.0)]),
            Err(Error::AlphaOutOfRange { .. })
        ));
        assert!(NeuralOdeSpec::new(2, 1, 0.5, 1.0, vec![piece(0.0), piece(0.5)]).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let demo = NeuralOdeSpec::demo();
        assert_eq!(demo.width(), 2);
        assert_eq!(demo.pieces().len(), 2);
        let back = NeuralOdeSpec::from_json(&demo.to_json()).unwrap();
        assert_eq!(back, demo);
        let err = NeuralOdeSpec::from_json(
            r#"{"dim":2,"width":1,"alpha":0.5,"tau":1,
            "pieces":[{"t":0,"S":[[1],[0]],"W":[[1,0,0]],"b":[0]}]}"#,
        )
        .unwrap_err();
        match err {
            Error::Parse { message, .. } => assert!(message.contains("pieces[0].W"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_steps_layout() {
        let zero = NeuralOdeSpec::zero(2, 2, 0.5, 1.0).unwrap();
        assert!(split_steps(&zero, 3).iter().all(|s| s.a == 0.0));
        let spec = single_neuron(&[0.7, -0.2], &[1.0, 0.5], 0.1, 0.5);
        let steps = split_steps(&spec, 2);
        assert_eq!(steps.len(), 4);
        assert_eq!(
            steps.iter().map(|s| s.j).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
        assert_eq!(steps[0].a, 0.5 * 0.7);
        assert_eq!(steps[1].a, 0.5 * -0.2);
    }

    #[test]
    fn split_steps_reproduce_euler_recursion() {
        let demo = NeuralOdeSpec::demo();
        let n = 6;
        let dt = demo.tau() / n as f64;
        let steps = split_steps(&demo, n);
        for x0 in BoxDomain::cube(2, -1.0, 1.0).unwrap().grid(5) {
            // Hand-written recursion: one coordinate update at a time.
            let mut x = x0.clone();
            for k in 0..n {
                let p = demo.piece_at(k as f64 * dt);
                for i in 0..demo.width() {
                    for j in 0..demo.dim() {
                        let pre = p.w.row(i).transpose().dot(&x) + p.b[i];
                        let act = if pre >= 0.0 { pre } else { demo.alpha() * pre };
                        x[j] += dt * p.s[(j, i)] * act;
                    }
                }
            }
            assert!((discrete_flow(&steps, &x0) - x).amax() <= 1e-12);
        }
    }

    #[test]
    fn compile_requires_enough_steps() {
        let demo = NeuralOdeSpec::demo();
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        assert!(matches!(
            compile_program(&demo, &k, 0),
            Err(Error::ConditionViolated(_))
        ));
        let spec = single_neuron(&[2.0, 0.0], &[1.5, 0.0], 0.0, 0.5);
        assert!(matches!(
            compile(&spec, &k, 3),
            Err(Error::ConditionViolated(_))
        ));
        assert!(compile(&spec, &k, 4).is_ok());
    }

    #[test]
    fn zero_field_compiles_to_identity() {
        let zero = NeuralOdeSpec::zero(2, 2, 0.5, 1.0).unwrap();
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let (p, report) = compile(&zero, &k, 4).unwrap();
        assert!(p.is_empty());
        assert_eq!(report.compiled_vs_reference, 0.0);
        let (p, report) = auto_compile(&zero, &k, 1e-3, AutoCompileOptions::default()).unwrap();
        assert!(p.is_empty());
        assert_eq!(report.n, 4);
    }

    #[test]
    fn single_piece_matches_discrete_iteration() {
        let spec = single_neuron(&[0.6, -0.4], &[0.9, 0.7], -0.2, 0.3);
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let (p, report) = compile(&spec, &k, 8).unwrap();
        assert_eq!(p.family(), Family::F1);
        assert_eq!(report.points, 225);
        assert!(report.compiled_vs_discrete <= 1e-8, "{report:?}");
        assert!(report.validity_box.contains_box(&k, 0.0));
    }

    #[test]
    fn reference_is_stable_under_step_halving() {
        let spec = NeuralOdeSpec::demo();
        let points = measurement_points(&BoxDomain::cube(2, -1.0, 1.0).unwrap());
        let half = spec.reference_steps() / 2;
        let mut worst: f64 = 0.0;
        for x in &points {
            let coarse = spec.reference_flow_with(x, half).unwrap();
            worst = worst.max((spec.reference_flow(x).unwrap() - coarse).amax());
        }
        assert!(worst <= 1e-9, "halving changed the reference by {worst:e}");
    }

    #[test]
    fn error_roughly_halves_when_n_doubles() {
        let demo = NeuralOdeSpec::demo();
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let e16 = compile(&demo, &k, 16).unwrap().1.compiled_vs_reference;
        let e32 = compile(&demo, &k, 32).unwrap().1.compiled_vs_reference;
        let order = (e16 / e32).log2();
        assert!((0.6..=1.4).contains(&order), "{e16:e} {e32:e} {order}");
    }

    #[test]
    fn auto_compile_meets_tolerance_or_reports_budget() {
        let demo = NeuralOdeSpec::demo();
        let k = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let (_, report) = auto_compile(&demo, &k, 0.05, AutoCompileOptions::default()).unwrap();
        assert!(report.compiled_vs_reference <= 0.05);
        let tight = AutoCompileOptions { max_n: 64 };
        match auto_compile(&demo, &k, 1e-9, tight) {
            Err(Error::BudgetExceeded { n, best_error }) => {
                assert_eq!(n, 64);
                assert!(best_error > 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_dimensional_spec_compiles() {
        let spec = single_neuron(&[0.5], &[1.0], 0.2, 0.4);
        let k = BoxDomain::cube(1, -2.0, 2.0).unwrap();
        let (p, report) = compile(&spec, &k, 16).unwrap();
        assert_eq!(p.dim(), 1);
        assert!(report.compiled_vs_discrete <= 1e-8);
    }
}
