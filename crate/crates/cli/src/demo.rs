//! Bundled scenarios that write error tables for plotting.

use std::fs;
use std::path::Path;

use flowforge::lab::{commutator_program, product_formula_program, WeightedFieldSum};
use flowforge::linalg::{affine_flow_matrices, expm};
use flowforge::model::to_json;
use flowforge::splitting::{compile, NeuralOdeSpec};
use flowforge::verify::{convex_gap_lower_bound, convexity_check_1d, sup_error};
use flowforge::{BoxDomain, FlowProgram, FlowStep, Matrix, PrimitiveField, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::io::write_text;

pub const NAMES: [&str; 4] = [
    "convexity-obstruction",
    "commutator",
    "product-formula",
    "neural-ode",
];

const RANDOM_PROGRAM_SEED: u64 = 17;
const RANDOM_PROGRAMS: usize = 500;

pub fn run(name: &str, dir: &Path) -> CliResult<Vec<String>> {
    if !NAMES.contains(&name) {
        return Err(CliError::UnknownDemo(name.to_string()));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match name {
        "convexity-obstruction" => convexity_obstruction(dir),
        "commutator" => commutator(dir),
        "product-formula" => product_formula(dir),
        _ => neural_ode(dir),
    }
}

fn save(dir: &Path, file: &str, text: &str, written: &mut Vec<String>) -> CliResult<()> {
    let path = dir.join(file);
    write_text(&path, text)?;
    written.push(path.display().to_string());
    Ok(())
}

fn target(x: f64) -> f64 {
    x - (-x).exp()
}

fn random_program(rng: &mut ChaCha8Rng) -> CliResult<FlowProgram> {
    let len = rng.random_range(1..=6);
    let steps = (0..len)
        .map(|_| {
            let t = rng.random_range(0.0..1.0);
            if rng.random_bool(0.5) {
                Ok(FlowStep::new(PrimitiveField::Relu, t))
            } else {
                let a = Matrix::from_element(1, 1, rng.random_range(-2.0..2.0));
                let b = Vector::from_element(1, rng.random_range(-2.0..2.0));
                Ok(FlowStep::new(PrimitiveField::affine(a, b)?, t))
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(FlowProgram::new(1, flowforge::Family::F1, steps)?)
}

/// Lower bound for convex fits of `x − e^{−x}` on `[−2, 2]`, and the errors
/// of random one-dimensional ReLU/affine programs against it.
fn convexity_obstruction(dir: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let mut floors = String::from("n_grid,floor\n");
    let mut floor: f64 = 0.0;
    for n in [11, 21, 41, 81, 161] {
        let f = convex_gap_lower_bound(target, -2.0, 2.0, n);
        floor = floor.max(f);
        floors.push_str(&format!("{n},{f:.16e}\n"));
    }
    save(dir, "convexity-floor.csv", &floors, &mut written)?;

    let domain = BoxDomain::cube(1, -2.0, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_PROGRAM_SEED);
    let mut rows = String::from("program,steps,sup_error,convex,above_floor\n");
    for k in 0..RANDOM_PROGRAMS {
        let p = random_program(&mut rng)?;
        let err = sup_error(|x| p.eval(x), |x| Ok(x.map(target)), &domain, 401)?.value;
        let convex = convexity_check_1d(
            |x| Ok(p.eval(&Vector::from_element(1, x))?[0]),
            -2.0,
            2.0,
            401,
        )?;
        rows.push_str(&format!(
            "{k},{},{err:.16e},{convex},{}\n",
            p.len(),
            err >= floor
        ));
    }
    save(dir, "convexity-programs.csv", &rows, &mut written)?;
    Ok(written)
}

/// Error of the four-step commutator flow against `exp(τ [f, g])`.
fn commutator(dir: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let mut e12 = Matrix::zeros(2, 2);
    e12[(0, 1)] = 1.0;
    let f = PrimitiveField::linear(e12.clone())?;
    let g = PrimitiveField::linear(e12.transpose())?;
    let grid = BoxDomain::cube(2, -1.0, 1.0)?.grid(9);
    let mut out = String::from("tau,error\n");
    let mut tau = 0.1;
    for _ in 0..7 {
        let p = commutator_program(2, &f, &g, tau)?;
        let oracle = expm(&Matrix::from_diagonal(&Vector::from_vec(vec![-tau, tau])))?;
        let mut err: f64 = 0.0;
        for x in &grid {
            err = err.max((p.eval(x)? - &oracle * x).amax());
        }
        out.push_str(&format!("{tau:.16e},{err:.16e}\n"));
        tau /= 4.0;
    }
    save(
        dir,
        "commutator-program.json",
        &to_json(&commutator_program(2, &f, &g, 0.1)?),
        &mut written,
    )?;
    save(dir, "commutator.csv", &out, &mut written)?;
    Ok(written)
}

/// Product-formula approximation of an affine flow `ẋ = A x + b`.
fn product_formula(dir: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let a = Matrix::from_row_slice(2, 2, &[-0.3, 0.8, -0.6, 0.1]);
    let b = Vector::from_vec(vec![0.5, -0.2]);
    let sum = WeightedFieldSum::new(
        2,
        vec![
            (1.0, PrimitiveField::linear(a.clone())?),
            (1.0, PrimitiveField::translation(b.clone())?),
        ],
    )?;
    let tau = 1.0;
    let (wt, ct) = affine_flow_matrices(&a, &b, tau)?;
    let domain = BoxDomain::cube(2, -1.0, 1.0)?;
    let mut out = String::from("n,error\n");
    for k in 0..9 {
        let n = 1usize << k;
        let p = product_formula_program(&sum, tau, n)?;
        let err = sup_error(|x| p.eval(x), |x| Ok(&wt * x + &ct), &domain, 9)?.value;
        out.push_str(&format!("{n},{err:.16e}\n"));
    }
    save(
        dir,
        "product-formula-cycle.json",
        &to_json(&product_formula_program(&sum, tau, 1)?),
        &mut written,
    )?;
    save(dir, "product-formula.csv", &out, &mut written)?;
    Ok(written)
}

/// Splitting error of the bundled neural ODE as the step count doubles.
fn neural_ode(dir: &Path) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    let spec = NeuralOdeSpec::demo();
    save(dir, "neural-ode-spec.json", &spec.to_json(), &mut written)?;
    let domain = BoxDomain::cube(2, -1.0, 1.0)?;
    let mut out = String::from(
        "n,program_steps,compiled_vs_discrete,discrete_vs_reference,compiled_vs_reference\n",
    );
    for n in [4, 8, 16, 32, 64, 128] {
        let (_, r) = compile(&spec, &domain, n)?;
        out.push_str(&format!(
            "{n},{},{:.16e},{:.16e},{:.16e}\n",
            r.program_steps,
            r.compiled_vs_discrete,
            r.discrete_vs_reference,
            r.compiled_vs_reference
        ));
    }
    save(dir, "neural-ode.csv", &out, &mut written)?;
    Ok(written)
}
