//! Finite-difference discretisation of divergence-form systems on boxes and tori (`d ≤ 2`).

mod function;
mod grid;
mod operator;
mod reduce;
mod solve;

pub use function::{GridFunction, NormKind};
pub use grid::{Boundary, BoxGrid, Window};
pub use operator::{divergence, DiscreteFlux, DiscreteOperator};
pub use solve::{solve, solve_with_boundary, Solution, SolveMethod, SolveOptions};
