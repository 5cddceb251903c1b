//! Selection of one candidate input sequence by its objective on the original
//! horizon models: exhaustive enumeration or greedy descent over neighbours.

mod budget;
mod graph;
mod select;

pub use budget::Budget;
pub use graph::NeighborGraph;
pub use select::{
    objective_icnn, solve_exhaustive, solve_greedy, Evaluator, IcnnObjective, MiqpInstance, SelectionMode,
    SelectionResult,
};
