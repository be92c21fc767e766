//! Convex-program representation and the embedded interior-point solver.
//!
//! Every subproblem in this crate is compiled to an [`LseProgram`]: an
//! objective made of an affine part plus nonnegatively weighted log-sum-exp
//! functions, constrained by log-sum-exp rows (`f(y) ≤ 0`), affine rows,
//! affine equalities and a variable box. Geometric programs reach this form
//! through [`gp_to_lse`] after the change of variables `y = ln x`.

mod gp;
mod lse;
mod program;
mod solver;

pub use gp::{gp_to_lse, GeometricProgram, Monomial, Posynomial};
pub use lse::{ExpTerm, LseFunction};
pub use program::{AffineRow, LseProgram, Objective};
pub use solver::{solve, Solution, SolveStatus, SolverOptions};
