//! Boykov–Kolmogorov max-flow specialised to 6-connected grids.
//!
//! Two search trees grow from the terminals through non-saturated residual
//! edges; when they touch, flow is pushed along the connecting path and the
//! nodes cut off by saturated edges become orphans that try to re-attach
//! (tree reuse). Adjacency is implicit: node `i` reaches its neighbour in
//! direction `d` at `i + offset[d]`, and a per-node bitmask records which
//! neighbours exist.
//!
//! Directions follow `+x, −x, +y, −y, +z, −z`, so `d ^ 1` is the reverse.

use std::collections::VecDeque;

use super::{CutResult, GridGraph};

const TERMINAL: u8 = 6;
const ORPHAN: u8 = 7;
const FREE: u8 = 8;
const INF_DIST: u32 = u32::MAX;

/// Residuals at or below `RESIDUAL_EPS * max(1, largest capacity)` count as saturated.
pub const RESIDUAL_EPS: f64 = 1e-12;

struct Solver {
    offsets: [isize; 6],
    has_nbr: Vec<u8>,
    rcap: Vec<f64>,
    /// Positive: residual from the source. Negative: residual to the sink.
    tr: Vec<f64>,
    parent: Vec<u8>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    in_active: Vec<bool>,
    active: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u32,
    flow: f64,
    eps: f64,
}

impl Solver {
    fn new(graph: &GridGraph) -> Self {
        let n = graph.node_count();
        let [sx, sy, sz] = [graph.stride(0) as isize, graph.stride(1) as isize, graph.stride(2) as isize];
        let offsets = [sx, -sx, sy, -sy, sz, -sz];
        let [nx, ny, nz] = graph.dims();
        let mut has_nbr = vec![0u8; n];
        let mut rcap = vec![0.0; n * 6];
        for (i, mask) in has_nbr.iter_mut().enumerate() {
            let c = graph.coords(i);
            let lim = [nx, ny, nz];
            for a in 0..3 {
                if c[a] + 1 < lim[a] {
                    *mask |= 1 << (2 * a);
                }
                if c[a] > 0 {
                    *mask |= 1 << (2 * a + 1);
                }
            }
        }
        for i in 0..n {
            for axis in 0..3 {
                if let Some(j) = graph.forward_neighbour(i, axis) {
                    let cap = graph.link_cap(i, axis);
                    rcap[i * 6 + 2 * axis] = cap;
                    rcap[j * 6 + 2 * axis + 1] = cap;
                }
            }
        }
        let eps = RESIDUAL_EPS * graph.max_capacity().max(1.0);
        let mut s = Solver {
            offsets,
            has_nbr,
            rcap,
            tr: vec![0.0; n],
            parent: vec![FREE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            in_active: vec![false; n],
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
            eps,
        };
        for i in 0..n {
            let (src, snk) = (graph.source_cap(i), graph.sink_cap(i));
            s.flow += src.min(snk);
            let r = src - snk;
            s.tr[i] = r;
            if r > eps || r < -eps {
                s.is_sink[i] = r < 0.0;
                s.parent[i] = TERMINAL;
                s.ts[i] = 0;
                s.dist[i] = 1;
                s.set_active(i);
            }
        }
        s
    }

    #[inline]
    fn nbr(&self, i: usize, d: u8) -> usize {
        (i as isize + self.offsets[d as usize]) as usize
    }

    #[inline]
    fn has(&self, i: usize, d: u8) -> bool {
        self.has_nbr[i] & (1 << d) != 0
    }

    #[inline]
    fn set_active(&mut self, i: usize) {
        if !self.in_active[i] {
            self.in_active[i] = true;
            self.active.push_back(i as u32);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            let i = i as usize;
            self.in_active[i] = false;
            if self.parent[i] != FREE {
                return Some(i);
            }
        }
        None
    }

    /// Grow the tree of `i` by one layer. Returns the connecting edge as
    /// `(source-tree node, direction)` when the trees meet.
    fn grow(&mut self, i: usize) -> Option<(usize, u8)> {
        let eps = self.eps;
        if !self.is_sink[i] {
            for d in 0..6u8 {
                if !self.has(i, d) || self.rcap[i * 6 + d as usize] <= eps {
                    continue;
                }
                let j = self.nbr(i, d);
                if self.parent[j] == FREE {
                    self.is_sink[j] = false;
                    self.parent[j] = d ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.set_active(j);
                } else if self.is_sink[j] {
                    return Some((i, d));
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = d ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
        } else {
            for d in 0..6u8 {
                if !self.has(i, d) {
                    continue;
                }
                let j = self.nbr(i, d);
                if self.rcap[j * 6 + (d ^ 1) as usize] <= eps {
                    continue;
                }
                if self.parent[j] == FREE {
                    self.is_sink[j] = true;
                    self.parent[j] = d ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.set_active(j);
                } else if !self.is_sink[j] {
                    return Some((j, d ^ 1));
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = d ^ 1;
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
        }
        None
    }

    fn orphan_front(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i as u32);
    }

    fn orphan_back(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i as u32);
    }

    fn augment(&mut self, s_node: usize, d: u8) {
        let t_node = self.nbr(s_node, d);
        let mut b = self.rcap[s_node * 6 + d as usize];

        let mut k = s_node;
        loop {
            let p = self.parent[k];
            if p == TERMINAL {
                b = b.min(self.tr[k]);
                break;
            }
            let par = self.nbr(k, p);
            b = b.min(self.rcap[par * 6 + (p ^ 1) as usize]);
            k = par;
        }
        let mut k = t_node;
        loop {
            let p = self.parent[k];
            if p == TERMINAL {
                b = b.min(-self.tr[k]);
                break;
            }
            b = b.min(self.rcap[k * 6 + p as usize]);
            k = self.nbr(k, p);
        }

        self.rcap[s_node * 6 + d as usize] -= b;
        self.rcap[t_node * 6 + (d ^ 1) as usize] += b;

        let eps = self.eps;
        let mut k = s_node;
        loop {
            let p = self.parent[k];
            if p == TERMINAL {
                self.tr[k] -= b;
                if self.tr[k] <= eps {
                    self.orphan_front(k);
                }
                break;
            }
            let par = self.nbr(k, p);
            self.rcap[par * 6 + (p ^ 1) as usize] -= b;
            self.rcap[k * 6 + p as usize] += b;
            if self.rcap[par * 6 + (p ^ 1) as usize] <= eps {
                self.orphan_front(k);
            }
            k = par;
        }
        let mut k = t_node;
        loop {
            let p = self.parent[k];
            if p == TERMINAL {
                self.tr[k] += b;
                if self.tr[k] >= -eps {
                    self.orphan_front(k);
                }
                break;
            }
            let par = self.nbr(k, p);
            self.rcap[k * 6 + p as usize] -= b;
            self.rcap[par * 6 + (p ^ 1) as usize] += b;
            if self.rcap[k * 6 + p as usize] <= eps {
                self.orphan_front(k);
            }
            k = par;
        }
        self.flow += b;
    }

    /// Length of the path from `j` to its terminal, or `INF_DIST` when the
    /// path runs into an orphan. Marks visited nodes with the current time.
    fn origin_distance(&mut self, j: usize) -> u32 {
        let mut k = j;
        let mut d = 0u32;
        loop {
            if self.ts[k] == self.time {
                d += self.dist[k];
                break;
            }
            let p = self.parent[k];
            d += 1;
            if p == TERMINAL {
                self.ts[k] = self.time;
                self.dist[k] = 1;
                break;
            }
            if p == ORPHAN {
                return INF_DIST;
            }
            k = self.nbr(k, p);
        }
        let mut k = j;
        let mut dk = d;
        while self.ts[k] != self.time {
            self.ts[k] = self.time;
            self.dist[k] = dk;
            dk -= 1;
            k = self.nbr(k, self.parent[k]);
        }
        d
    }

    fn process_orphan(&mut self, i: usize) {
        let sink = self.is_sink[i];
        let eps = self.eps;
        let mut best: Option<u8> = None;
        let mut d_min = INF_DIST;
        for d in 0..6u8 {
            if !self.has(i, d) {
                continue;
            }
            let j = self.nbr(i, d);
            let open = if sink {
                self.rcap[i * 6 + d as usize] > eps
            } else {
                self.rcap[j * 6 + (d ^ 1) as usize] > eps
            };
            if !open || self.is_sink[j] != sink || self.parent[j] == FREE {
                continue;
            }
            let dj = self.origin_distance(j);
            if dj < d_min {
                d_min = dj;
                best = Some(d);
            }
        }
        if let Some(d) = best {
            self.parent[i] = d;
            self.ts[i] = self.time;
            self.dist[i] = d_min + 1;
            return;
        }
        self.parent[i] = FREE;
        for d in 0..6u8 {
            if !self.has(i, d) {
                continue;
            }
            let j = self.nbr(i, d);
            if self.is_sink[j] != sink || self.parent[j] == FREE {
                continue;
            }
            let open = if sink {
                self.rcap[i * 6 + d as usize] > eps
            } else {
                self.rcap[j * 6 + (d ^ 1) as usize] > eps
            };
            if open {
                self.set_active(j);
            }
            let pj = self.parent[j];
            if pj != TERMINAL && pj != ORPHAN && self.nbr(j, pj) == i {
                self.orphan_back(j);
            }
        }
    }

    fn run(&mut self) {
        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(c) => {
                    self.in_active[c] = false;
                    if self.parent[c] == FREE {
                        self.next_active()
                    } else {
                        Some(c)
                    }
                }
                None => self.next_active(),
            };
            let Some(i) = i else { break };
            let meeting = self.grow(i);
            self.time += 1;
            if let Some((s_node, d)) = meeting {
                // keep `i` as the current node: it may have more edges to the other tree
                self.in_active[i] = true;
                current = Some(i);
                self.augment(s_node, d);
                while let Some(o) = self.orphans.pop_front() {
                    self.process_orphan(o as usize);
                }
            }
        }
    }

    /// Nodes reachable from the source through non-saturated residual edges.
    fn source_side(&self) -> Vec<u8> {
        let n = self.tr.len();
        let mut labels = vec![0u8; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| self.tr[i] > self.eps).collect();
        for &i in &stack {
            labels[i] = 1;
        }
        while let Some(i) = stack.pop() {
            for d in 0..6u8 {
                if self.has(i, d) && self.rcap[i * 6 + d as usize] > self.eps {
                    let j = self.nbr(i, d);
                    if labels[j] == 0 {
                        labels[j] = 1;
                        stack.push(j);
                    }
                }
            }
        }
        labels
    }
}

/// Maximum flow and the minimum cut formed by the nodes still reachable from
/// the source in the residual graph.
pub fn solve_maxflow(graph: &GridGraph) -> CutResult {
    let mut solver = Solver::new(graph);
    solver.run();
    let labels = solver.source_side();
    debug_assert!({
        let cut = graph.cut_cost(&labels);
        (cut - solver.flow).abs() <= 1e-9 * cut.abs().max(1.0)
    });
    CutResult {
        flow: solver.flow,
        labels: graph.labels_to_mask(labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxflow::brute_force_mincut;
    use rand::{Rng, SeedableRng};

    #[test]
    fn single_source_node() {
        let mut g = GridGraph::new([1, 1, 1]).unwrap();
        g.set_terminals(0, 5.0, 0.0).unwrap();
        let r = solve_maxflow(&g);
        assert_eq!(r.flow, 0.0);
        assert_eq!(r.labels.data(), &[1]);
    }

    #[test]
    fn bottleneck_n_link() {
        let mut g = GridGraph::new([2, 1, 1]).unwrap();
        g.set_terminals(0, 3.0, 0.0).unwrap();
        g.set_terminals(1, 0.0, 3.0).unwrap();
        g.set_link(0, 0, 1.0).unwrap();
        let r = solve_maxflow(&g);
        assert_eq!(r.flow, 1.0);
        assert_eq!(r.labels.data(), &[1, 0]);
    }

    #[test]
    fn both_terminals_on_one_node() {
        let mut g = GridGraph::new([1, 1, 1]).unwrap();
        g.set_terminals(0, 2.0, 5.0).unwrap();
        let r = solve_maxflow(&g);
        assert_eq!(r.flow, 2.0);
        assert_eq!(r.labels.data(), &[0]);
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let dims = [rng.random_range(1..4), rng.random_range(1..3), rng.random_range(1..3)];
            let mut g = GridGraph::new(dims).unwrap();
            for i in 0..g.node_count() {
                let c = rng.random_range(0..11) as f64;
                if rng.random_bool(0.5) {
                    g.set_terminals(i, c, 0.0).unwrap();
                } else {
                    g.set_terminals(i, 0.0, c).unwrap();
                }
                for a in 0..3 {
                    g.set_link(i, a, rng.random_range(0..11) as f64).unwrap_or(());
                }
            }
            let fast = solve_maxflow(&g);
            let slow = brute_force_mincut(&g).unwrap();
            assert_eq!(fast.flow, slow.flow);
            assert_eq!(g.cut_cost(fast.labels.data()), fast.flow);
        }
    }

    #[test]
    fn larger_grid_duality() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut g = GridGraph::new([20, 17, 9]).unwrap();
        for i in 0..g.node_count() {
            let r: f64 = rng.random_range(-3.0..3.0);
            g.set_terminals(i, r.max(0.0), (-r).max(0.0)).unwrap();
            for a in 0..3 {
                let _ = g.set_link(i, a, rng.random_range(0.0..2.0));
            }
        }
        let r = solve_maxflow(&g);
        let cut = g.cut_cost(r.labels.data());
        assert!((cut - r.flow).abs() <= 1e-9 * cut);
    }
}
