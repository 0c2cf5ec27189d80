//! Reference maps for `verify`, read from JSON documents tagged by `kind`.

use flowforge::model::from_json;
use flowforge::relu::eval_leaky;
use flowforge::splitting::NeuralOdeSpec;
use flowforge::two_piece::{eval_two_piece, TwoPieceMapSpec};
use flowforge::{Error, FlowProgram, Matrix, Result, Vector};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug)]
pub enum Oracle {
    NeuralOde(NeuralOdeSpec),
    Leaky(Vector),
    TwoPiece(TwoPieceMapSpec),
    Affine { w: Matrix, b: Vector },
    Program(FlowProgram),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LeakyDoc {
    alpha: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoPieceDoc {
    j: usize,
    a: f64,
    w: Vec<f64>,
    beta: f64,
    alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineDoc {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn parse_error(message: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        column: 0,
        message: message.into(),
    }
}

fn decode<T: for<'de> Deserialize<'de>>(value: Value, kind: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| parse_error(format!("{kind} oracle: {e}")))
}

impl Oracle {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let kind = value
            .as_object_mut()
            .and_then(|o| o.remove("kind"))
            .and_then(|k| k.as_str().map(str::to_owned))
            .ok_or_else(|| parse_error("oracle needs a string field `kind`"))?;
        match kind.as_str() {
            "neural-ode" => Ok(Oracle::NeuralOde(NeuralOdeSpec::from_json(&value.to_string())?)),
            "leaky" => {
                let doc: LeakyDoc = decode(value, &kind)?;
                Ok(Oracle::Leaky(Vector::from_vec(doc.alpha)))
            }
            "two-piece" => {
                let doc: TwoPieceDoc = decode(value, &kind)?;
                let spec = TwoPieceMapSpec {
                    j: doc.j,
                    a: doc.a,
                    w: Vector::from_vec(doc.w),
                    beta: doc.beta,
                    alpha: doc.alpha,
                };
                if spec.j >= spec.dim() {
                    return Err(parse_error("two-piece oracle: `j` out of range"));
                }
                Ok(Oracle::TwoPiece(spec))
            }
            "affine" => {
                let doc: AffineDoc = decode(value, &kind)?;
                let d = doc.b.len();
                if doc.w.len() != d || doc.w.iter().any(|r| r.len() != d) {
                    return Err(parse_error(format!("affine oracle: `W` must be {d} x {d}")));
                }
                Ok(Oracle::Affine {
                    w: Matrix::from_fn(d, d, |i, j| doc.w[i][j]),
                    b: Vector::from_vec(doc.b),
                })
            }
            "program" => {
                let inner = value
                    .as_object_mut()
                    .and_then(|o| o.remove("program"))
                    .ok_or_else(|| parse_error("program oracle needs a `program` field"))?;
                Ok(Oracle::Program(from_json(&inner.to_string())?))
            }
            other => Err(parse_error(format!(
                "unknown oracle kind `{other}`; expected neural-ode, leaky, two-piece, affine or program"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Oracle::NeuralOde(s) => s.dim(),
            Oracle::Leaky(a) => a.len(),
            Oracle::TwoPiece(s) => s.dim(),
            Oracle::Affine { b, .. } => b.len(),
            Oracle::Program(p) => p.dim(),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        match self {
            Oracle::NeuralOde(s) => s.reference_flow(x),
            Oracle::Leaky(a) => Ok(eval_leaky(a, x)),
            Oracle::TwoPiece(s) => Ok(eval_two_piece(s, x)),
            Oracle::Affine { w, b } => Ok(w * x + b),
            Oracle::Program(p) => p.eval(x),
        }
    }
}
