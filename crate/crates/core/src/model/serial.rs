//! JSON program format. Floats are written with 17 significant digits so a
//! round trip reproduces every value bit for bit.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use super::{Family, FlowProgram, FlowStep, PrimitiveField};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Compact JSON formatter printing every `f64` as `{:.16e}`.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct F64Formatter;

impl Formatter for F64Formatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub(crate) fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, F64Formatter);
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramDoc {
    dim: usize,
    family: Family,
    steps: Vec<StepDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StepDoc {
    Affine {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        t: f64,
    },
    Relu {
        t: f64,
    },
    Negrelu {
        t: f64,
    },
}

pub(crate) fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
    field: &str,
) -> Result<Matrix> {
    if rows.len() != nrows {
        return Err(Error::parse_field(
            field,
            format!("expected {nrows} rows, found {}", rows.len()),
        ));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::parse_field(
                format!("{field}[{i}]"),
                format!("expected {ncols} entries, found {}", r.len()),
            ));
        }
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_json(program: &FlowProgram) -> String {
    let doc = ProgramDoc {
        dim: program.dim(),
        family: program.family(),
        steps: program
            .steps()
            .iter()
            .map(|s| match &s.field {
                PrimitiveField::Affine { a, b } => StepDoc::Affine {
                    a: matrix_to_rows(a),
                    b: b.iter().copied().collect(),
                    t: s.duration,
                },
                PrimitiveField::Relu => StepDoc::Relu { t: s.duration },
                PrimitiveField::NegRelu => StepDoc::Negrelu { t: s.duration },
            })
            .collect(),
    };
    to_json_string(&doc)
}

pub fn from_json(text: &str) -> Result<FlowProgram> {
    let doc: ProgramDoc = serde_json::from_str(text).map_err(Error::from_json)?;
    let d = doc.dim;
    let mut steps = Vec::with_capacity(doc.steps.len());
    for (i, s) in doc.steps.into_iter().enumerate() {
        let step = match s {
            StepDoc::Affine { a, b, t } => {
                let field = format!("steps[{i}]");
                let a = matrix_from_rows(&a, d, d, &format!("{field}.A"))?;
                if b.len() != d {
                    return Err(Error::parse_field(
                        format!("{field}.b"),
                        format!("expected {d} entries, found {}", b.len()),
                    ));
                }
                let field_value = PrimitiveField::affine(a, Vector::from_vec(b))
                    .map_err(|e| Error::parse_field(field, e))?;
                FlowStep::new(field_value, t)
            }
            StepDoc::Relu { t } => FlowStep::new(PrimitiveField::Relu, t),
            StepDoc::Negrelu { t } => FlowStep::new(PrimitiveField::NegRelu, t),
        };
        steps.push(step);
    }
    FlowProgram::new(d, doc.family, steps).map_err(|e| match e {
        Error::FamilyViolation { index, .. } | Error::NegativeDuration { index, .. } => {
            Error::parse_field(format!("steps[{index}]"), e)
        }
        other => Error::parse_field("program", other),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_round_trip() {
        let p = FlowProgram::identity(2, Family::F0);
        let text = to_json(&p);
        assert_eq!(text, r#"{"dim":2,"family":"F0","steps":[]}"#);
        assert_eq!(from_json(&text).unwrap(), p);
    }

    #[test]
    fn seventeen_digit_floats() {
        let p = FlowProgram::new(
            1,
            Family::F1,
            vec![FlowStep::new(PrimitiveField::Relu, 0.1)],
        )
        .unwrap();
        let text = to_json(&p);
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert_eq!(from_json(&text).unwrap().steps()[0].duration, 0.1);
    }

    #[test]
    fn malformed_family_tag() {
        let err = from_json(r#"{"dim":2,"family":"F3","steps":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn bad_matrix_shape_names_the_field() {
        let text =
            r#"{"dim":2,"family":"F0","steps":[{"type":"affine","A":[[1,0]],"b":[0,0],"t":1}]}"#;
        match from_json(text).unwrap_err() {
            Error::Parse { message, .. } => assert!(message.contains("steps[0].A"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn family_violation_is_a_parse_error() {
        let text = r#"{"dim":2,"family":"F1","steps":[{"type":"negrelu","t":1}]}"#;
        assert!(matches!(from_json(text), Err(Error::Parse { .. })));
    }
}
