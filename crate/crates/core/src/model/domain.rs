use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Axis-aligned compact box `[lo_1, hi_1] × … × [lo_d, hi_d]`.
///
/// Doubles as the interval-arithmetic enclosure used to track where
/// intermediate images of a compact set can land.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vector,
    hi: Vector,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::from_vectors(Vector::from_vec(lo), Vector::from_vec(hi))
    }

    pub fn from_vectors(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument(
                "box must have dimension >= 1".into(),
            ));
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument("box has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    /// Max-norm radius: the smallest `C` with `‖x‖∞ ≤ C` on the box.
    pub fn radius(&self) -> f64 {
        self.lo
            .iter()
            .chain(self.hi.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(l, h)| h - l)
            .product()
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    pub fn contains_box(&self, other: &BoxDomain, tol: f64) -> bool {
        self.contains(&other.lo, tol) && self.contains(&other.hi, tol)
    }

    pub fn hull(&self, other: &BoxDomain) -> BoxDomain {
        BoxDomain {
            lo: self.lo.zip_map(&other.lo, f64::min),
            hi: self.hi.zip_map(&other.hi, f64::max),
        }
    }

    /// Expand every side by `r`.
    pub fn inflate(&self, r: f64) -> BoxDomain {
        BoxDomain {
            lo: self.lo.add_scalar(-r),
            hi: self.hi.add_scalar(r),
        }
    }

    pub fn translate(&self, shift: &Vector) -> BoxDomain {
        BoxDomain {
            lo: &self.lo + shift,
            hi: &self.hi + shift,
        }
    }

    /// Tight enclosure of the image under `x ↦ W x + c`.
    pub fn linear_image(&self, w: &Matrix, c: &Vector) -> BoxDomain {
        let n = w.nrows();
        let mut lo = c.clone();
        let mut hi = c.clone();
        for i in 0..n {
            for j in 0..w.ncols() {
                let a = w[(i, j)] * self.lo[j];
                let b = w[(i, j)] * self.hi[j];
                lo[i] += a.min(b);
                hi[i] += a.max(b);
            }
        }
        BoxDomain { lo, hi }
    }

    /// Image under a map whose `i`-th output is a nondecreasing function of
    /// the `i`-th input alone.
    pub fn monotone_image(&self, map: impl Fn(&Vector) -> Vector) -> BoxDomain {
        BoxDomain {
            lo: map(&self.lo),
            hi: map(&self.hi),
        }
    }

    /// Regular grid with `points_per_axis` points per coordinate, lexicographic
    /// with the first coordinate varying slowest.
    pub fn grid(&self, points_per_axis: usize) -> Vec<Vector> {
        let d = self.dim();
        let m = points_per_axis.max(1);
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                if m == 1 {
                    vec![0.5 * (self.lo[i] + self.hi[i])]
                } else {
                    (0..m)
                        .map(|k| {
                            let s = k as f64 / (m - 1) as f64;
                            self.lo[i] + s * (self.hi[i] - self.lo[i])
                        })
                        .collect()
                }
            })
            .collect();
        let total = m.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                let mut x = Vector::zeros(d);
                for i in (0..d).rev() {
                    x[i] = axes[i][idx % m];
                    idx /= m;
                }
                x
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.lo.iter().zip(self.hi.iter()).map(
                |(&l, &h)| {
                    if h > l {
                        rng.random_range(l..h)
                    } else {
                        l
                    }
                },
            ),
        )
    }
}

impl fmt::Display for BoxDomain {
    /// Same `lo1,hi1;lo2,hi2` syntax accepted by `FromStr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{},{}", self.lo[i], self.hi[i])?;
        }
        Ok(())
    }
}

impl FromStr for BoxDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (k, part) in s.split(';').enumerate() {
            let bounds: Vec<&str> = part.split(',').map(str::trim).collect();
            if bounds.len() != 2 {
                return Err(Error::parse_field(
                    format!("box[{k}]"),
                    format!("expected `lo,hi`, got `{part}`"),
                ));
            }
            let parse = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::parse_field(format!("box[{k}]"), e))
            };
            lo.push(parse(bounds[0])?);
            hi.push(parse(bounds[1])?);
        }
        BoxDomain::new(lo, hi).map_err(|e| Error::parse_field("box", e))
    }
}
