//! Inputs shared by the benchmarks.

use hepacut_core::maxflow::GridGraph;
use hepacut_core::volume::{make_phantom, Ellipsoid, Phantom, PhantomSpec};
use hepacut_core::Dims;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A phantom of the given size with the liver filling the middle of the grid.
pub fn phantom(dims: Dims) -> Phantom {
    let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
    let spec = PhantomSpec {
        dims,
        liver: Ellipsoid {
            center: c,
            radii: c.map(|v| v * 0.6),
        },
        confounder: None,
        ..PhantomSpec::default()
    };
    make_phantom(&spec).expect("valid phantom")
}

/// Grid graph with uniformly random capacities.
pub fn random_graph(dims: Dims, seed: u64) -> GridGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = GridGraph::new(dims).expect("valid dims");
    for i in 0..g.node_count() {
        let (s, t) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        g.set_terminals(i, s, t).unwrap();
        for axis in 0..3 {
            if g.forward_neighbour(i, axis).is_some() {
                g.set_link(i, axis, rng.random_range(0.0..5.0)).unwrap();
            }
        }
    }
    g
}
