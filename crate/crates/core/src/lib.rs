//! Numeric workbench for generalized complex geometry on coordinate charts.
//!
//! Tensor fields are evaluated as truncated Taylor jets at sample points;
//! every identity is checked as a residual against a tolerance.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod courant;
pub mod deform;
pub mod error;
pub mod field;
pub mod forms;
pub mod jet;
pub mod kk;
pub mod linalg;
pub mod models;
pub mod report;
pub mod scenario;
pub mod structures;
pub mod tangent;
pub mod toric;
pub mod twist;

pub use error::{GeomError, Result};
pub use field::{Bindings, Expr, ScalarField};
pub use jet::{At, Jet, Layout, Point, C64};
