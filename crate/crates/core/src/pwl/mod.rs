//! Adaptive piecewise-affine approximation of the horizon models over the
//! joint scaled `(x, u_0, …, u_{N_p-1})` box.

mod fit;
mod tree;

pub use fit::{fit_affine, relative_errors, AffineFit, AffineMap, SurrogateSet};
pub use tree::{build_region_tree, ApproxConfig, Node, Region, RegionTree, TREE_FORMAT_VERSION};
