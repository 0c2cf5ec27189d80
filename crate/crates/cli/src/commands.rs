use flowforge::factor::compile_affine;
use flowforge::model::to_json;
use flowforge::splitting::{auto_compile, compile, AutoCompileOptions, NeuralOdeSpec};
use flowforge::verify::{convexity_check_1d, lp_error, sup_error};
use flowforge::{Error, Matrix, Vector};

use crate::args::{CompileArgs, EvalArgs, FactorArgs, MetricArg, VerifyArgs};
use crate::error::{CliError, CliResult};
use crate::io::{
    default_box, emit, format_row, read_program, read_rows, read_text, to_vector, write_text,
};
use crate::oracle::Oracle;

const FACTOR_HEADER: &str = "dim,det,factors,shears,points,verification_error";
const CONVEXITY_POINTS: usize = 401;

pub fn factor(args: &FactorArgs) -> CliResult<()> {
    let rows = read_rows(&args.input)?;
    let d = rows.len();
    if d == 0 {
        return Err(CliError::parse(1, 0, "matrix file is empty"));
    }
    if let Some(k) = rows.iter().position(|r| r.len() != d) {
        return Err(CliError::parse(
            k + 1,
            0,
            format!("row has {} entries, matrix needs {d}", rows[k].len()),
        ));
    }
    let w = Matrix::from_fn(d, d, |i, j| rows[i][j]);
    let b = match &args.offset {
        Some(path) => {
            let values: Vec<f64> = read_rows(path)?.into_iter().flatten().collect();
            if values.len() != d {
                return Err(CliError::parse(
                    1,
                    0,
                    format!("offset has {} entries, expected {d}", values.len()),
                ));
            }
            Vector::from_vec(values)
        }
        None => Vector::zeros(d),
    };

    let factorization = compile_affine(&w, &b)?;
    let program = &factorization.program;
    write_text(&args.output, &to_json(program))?;

    let domain = default_box(args.domain.clone(), d)?;
    let report = sup_error(|x| program.eval(x), |x| Ok(&w * x + &b), &domain, args.grid)?;
    let text = format!(
        "{FACTOR_HEADER}\n{d},{:.16e},{},{},{},{:.16e}\n",
        w.determinant(),
        program.len(),
        factorization.certificate.shears.len(),
        report.points,
        report.value
    );
    emit(args.report.as_deref(), &text)
}

pub fn compile_cmd(args: &CompileArgs) -> CliResult<()> {
    let spec = NeuralOdeSpec::from_json(&read_text(&args.input)?)?;
    let domain = default_box(args.domain.clone(), spec.dim())?;
    let (program, report) = match args.n {
        Some(n) => compile(&spec, &domain, n)?,
        None => {
            let mut options = AutoCompileOptions::default();
            if let Some(max_n) = args.max_n {
                options.max_n = max_n;
            }
            auto_compile(&spec, &domain, args.eps.unwrap_or(0.05), options)?
        }
    };
    write_text(&args.output, &to_json(&program))?;

    let mut header = flowforge::splitting::CompileReport::CSV_HEADER.to_string();
    let mut row = report.csv_row();
    if args.check_convexity {
        if spec.dim() != 1 {
            return Err(Error::DimensionTooSmall {
                dim: spec.dim(),
                reason: "the convexity check applies to one-dimensional programs only",
            }
            .into());
        }
        let convex = convexity_check_1d(
            |x| Ok(program.eval(&Vector::from_element(1, x))?[0]),
            domain.lo()[0],
            domain.hi()[0],
            CONVEXITY_POINTS,
        )?;
        header.push_str(",convex");
        row.push_str(&format!(",{convex}"));
    }
    emit(args.report.as_deref(), &format!("{header}\n{row}\n"))
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let program = read_program(&args.input)?;
    let rows = read_rows(&args.points)?;
    let mut out = String::new();
    for (k, row) in rows.iter().enumerate() {
        if row.len() != program.dim() {
            return Err(CliError::parse(
                k + 1,
                0,
                format!(
                    "point has {} coordinates, program dimension is {}",
                    row.len(),
                    program.dim()
                ),
            ));
        }
        let y = program.eval(&to_vector(row))?;
        out.push_str(&format_row(y.iter().copied()));
        out.push('\n');
    }
    emit(args.output.as_deref(), &out)
}

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    let program = read_program(&args.input)?;
    let oracle = Oracle::from_json(&read_text(&args.oracle)?)?;
    if oracle.dim() != program.dim() {
        return Err(Error::DimensionMismatch {
            expected: program.dim(),
            found: oracle.dim(),
        }
        .into());
    }
    let domain = default_box(args.domain.clone(), program.dim())?;
    let run = |x: &Vector| program.eval(x);
    let reference = |x: &Vector| oracle.eval(x);
    let report = match args.metric {
        MetricArg::Sup => sup_error(run, reference, &domain, args.grid)?,
        MetricArg::Lp => lp_error(run, reference, &domain, args.p, args.points, args.seed)?,
    };
    emit(
        args.output.as_deref(),
        &format!(
            "{}\n{}\n",
            flowforge::verify::ErrorReport::CSV_HEADER,
            report.csv_row()
        ),
    )?;
    match args.eps {
        Some(eps) if report.value > eps => Err(CliError::ToleranceExceeded {
            value: report.value,
            eps,
        }),
        _ => Ok(()),
    }
}
