use super::{CutResult, GridGraph};
use crate::error::{Error, Result};

pub const MAX_BRUTE_FORCE_NODES: usize = 20;

/// Exhaustive minimum cut. Among equal-cost labelings the lexicographically
/// smallest (node 0 most significant) is returned.
pub fn brute_force_mincut(graph: &GridGraph) -> Result<CutResult> {
    let n = graph.node_count();
    if n > MAX_BRUTE_FORCE_NODES {
        return Err(Error::param(format!(
            "brute force limited to {MAX_BRUTE_FORCE_NODES} nodes, graph has {n}"
        )));
    }
    let tol = 1e-9 * graph.max_capacity().max(1.0);
    let mut labels = vec![0u8; n];
    let mut best = f64::INFINITY;
    let mut best_labels = labels.clone();
    // counting upwards with node 0 as the most significant bit visits labelings in lexicographic order
    for m in 0u32..(1u32 << n) {
        for (k, l) in labels.iter_mut().enumerate() {
            *l = ((m >> (n - 1 - k)) & 1) as u8;
        }
        let cost = graph.cut_cost(&labels);
        if cost < best - tol {
            best = cost;
            best_labels.copy_from_slice(&labels);
        }
    }
    Ok(CutResult {
        flow: best,
        labels: graph.labels_to_mask(best_labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_graph() {
        let g = GridGraph::new([2, 2, 1]).unwrap();
        let r = brute_force_mincut(&g).unwrap();
        assert_eq!(r.flow, 0.0);
        assert_eq!(r.labels.data(), &[0, 0, 0, 0]);
    }

    #[test]
    fn symmetric_optima_pick_lexicographically_smallest() {
        // two isolated nodes each torn between equal source and sink links
        let mut g = GridGraph::new([2, 1, 1]).unwrap();
        g.set_terminals(0, 1.0, 1.0).unwrap();
        g.set_terminals(1, 2.0, 2.0).unwrap();
        let r = brute_force_mincut(&g).unwrap();
        assert_eq!(r.flow, 3.0);
        assert_eq!(r.labels.data(), &[0, 0]);
    }

    #[test]
    fn too_large() {
        let g = GridGraph::new([3, 3, 3]).unwrap();
        assert!(brute_force_mincut(&g).is_err());
    }
}
