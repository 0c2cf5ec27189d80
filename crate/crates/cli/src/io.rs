use std::fs;
use std::io::Write;
use std::path::Path;

use flowforge::{BoxDomain, FlowProgram, Vector};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

pub fn read_program(path: &Path) -> CliResult<FlowProgram> {
    Ok(flowforge::model::from_json(&read_text(path)?)?)
}

/// Numeric CSV rows without a header. Blank lines are skipped.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CliError::parse(line, 0, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, field)| {
                field
                    .parse::<f64>()
                    .map_err(|e| CliError::parse(line, k + 1, format!("`{field}`: {e}")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn format_row(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn default_box(domain: Option<BoxDomain>, dim: usize) -> CliResult<BoxDomain> {
    match domain {
        Some(b) if b.dim() != dim => Err(flowforge::Error::DimensionMismatch {
            expected: dim,
            found: b.dim(),
        }
        .into()),
        Some(b) => Ok(b),
        None => Ok(BoxDomain::cube(dim, -1.0, 1.0)?),
    }
}

pub fn to_vector(row: &[f64]) -> Vector {
    Vector::from_vec(row.to_vec())
}
