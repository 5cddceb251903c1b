use std::collections::VecDeque;

use crate::pwl::RegionTree;
use crate::qp::Candidate;

/// Facet adjacency of the candidates' input boxes inside one state slab.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    /// Neighbour candidate indices, ascending.
    pub adjacency: Vec<Vec<usize>>,
}

impl NeighborGraph {
    /// `candidates` must be sorted by region id, as returned by
    /// [`crate::qp::candidates_for_state`].
    pub fn for_state(tree: &RegionTree, x: &[f64], candidates: &[Candidate]) -> Self {
        let index_of = |region: usize| candidates.binary_search_by_key(&region, |c| c.region).ok();
        let adjacency = candidates
            .iter()
            .map(|c| {
                let region = &tree.regions[c.region];
                let mut adj: Vec<usize> = Vec::new();
                for dim in tree.state_dim..tree.joint_dim() {
                    for upper in [false, true] {
                        adj.extend(tree.facet_neighbors(x, region, dim, upper).into_iter().filter_map(index_of));
                    }
                }
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect();
        Self { adjacency }
    }

    /// Builds a graph from explicit neighbour lists, symmetrising them.
    pub fn from_edges(len: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); len];
        for &(a, b) in edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        Self { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn is_connected(&self) -> bool {
        if self.adjacency.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
