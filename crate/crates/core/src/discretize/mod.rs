//! Truncated space-time lattice, fields on it, and the discrete Grushin
//! operators.

mod field;
mod grid;
pub mod io;
mod operator;

pub(crate) use field::bracket;
pub use field::{ScalarField, TimeField};
pub use grid::Grid;
pub use operator::{Advection, GrushinOperator, SolveStats, SOLVER_ACCEPT, SOLVER_MAX_ITER, SOLVER_TOL};
#[allow(unused_imports)]
pub(crate) use operator::dot;
