//! Per-region quadratic programs and their box-constrained solution.

mod assemble;
mod solve;

pub use assemble::{assemble_qp, RegionQp};
pub use solve::{candidates_for_state, solve_box_qp, Candidate, QpSolution};
