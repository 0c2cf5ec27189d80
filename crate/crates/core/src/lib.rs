//! Compositions of exactly solvable flow maps generated by affine vector
//! fields and the ReLU field, together with compilers that rewrite affine
//! maps, leaky-ReLU maps, two-piece linear maps and piecewise-constant
//! neural-ODE flows as such compositions, and the numerical oracles used to
//! check them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod factor;
pub mod lab;
pub mod linalg;
pub mod model;
pub mod relu;
pub mod splitting;
pub mod two_piece;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use model::{
    eval_step, validate_program, BoxDomain, Family, FlowProgram, FlowStep, PrimitiveField,
};
