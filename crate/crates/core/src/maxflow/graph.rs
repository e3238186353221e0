use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelMask};

/// Two-terminal graph over a regular 6-connected grid.
///
/// Node `i` is the voxel with the same linear index. Each unordered n-link is
/// stored once, on its lower endpoint, per positive axis direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGraph {
    dims: Dims,
    source: Vec<f64>,
    sink: Vec<f64>,
    links: [Vec<f64>; 3],
}

fn check_cap(c: f64) -> Result<()> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::param(format!("capacity must be finite and non-negative, got {c}")));
    }
    Ok(())
}

impl GridGraph {
    pub fn new(dims: Dims) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidDims(dims));
        }
        let n = dims.iter().product();
        Ok(GridGraph {
            dims,
            source: vec![0.0; n],
            sink: vec![0.0; n],
            links: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn node_count(&self) -> usize {
        self.source.len()
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    #[inline]
    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    /// Index of the `+axis` neighbour of `i`, if any.
    #[inline]
    pub fn forward_neighbour(&self, i: usize, axis: usize) -> Option<usize> {
        (self.coords(i)[axis] + 1 < self.dims[axis]).then(|| i + self.stride(axis))
    }

    pub fn set_terminals(&mut self, i: usize, source: f64, sink: f64) -> Result<()> {
        check_cap(source)?;
        check_cap(sink)?;
        self.source[i] = source;
        self.sink[i] = sink;
        Ok(())
    }

    /// Capacity of the n-link between `i` and its `+axis` neighbour.
    pub fn set_link(&mut self, i: usize, axis: usize, cap: f64) -> Result<()> {
        check_cap(cap)?;
        if self.forward_neighbour(i, axis).is_none() {
            if cap == 0.0 {
                return Ok(());
            }
            return Err(Error::param(format!("node {i} has no +{axis} neighbour")));
        }
        self.links[axis][i] = cap;
        Ok(())
    }

    pub fn source_cap(&self, i: usize) -> f64 {
        self.source[i]
    }

    pub fn sink_cap(&self, i: usize) -> f64 {
        self.sink[i]
    }

    pub fn link_cap(&self, i: usize, axis: usize) -> f64 {
        self.links[axis][i]
    }

    /// All n-links as `(node, neighbour, capacity)`, including zero-capacity ones.
    pub fn n_links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            (0..3).filter_map(move |a| self.forward_neighbour(i, a).map(|j| (i, j, self.links[a][i])))
        })
    }

    pub fn max_capacity(&self) -> f64 {
        self.source
            .iter()
            .chain(&self.sink)
            .chain(self.links.iter().flatten())
            .fold(0.0, |m, &c| m.max(c))
    }

    /// Scale every capacity by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| x * c).collect();
        GridGraph {
            dims: self.dims,
            source: s(&self.source),
            sink: s(&self.sink),
            links: [s(&self.links[0]), s(&self.links[1]), s(&self.links[2])],
        }
    }

    /// Cost of the cut induced by `labels` (1 = source side): source links of
    /// sink-side nodes, sink links of source-side nodes, and n-links whose
    /// endpoints differ. Panics if `labels` does not have one entry per node.
    pub fn cut_cost(&self, labels: &[u8]) -> f64 {
        assert_eq!(labels.len(), self.node_count(), "one label per node");
        let mut cost = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                cost += self.source[i];
            } else {
                cost += self.sink[i];
            }
        }
        for (i, j, c) in self.n_links() {
            if labels[i] != labels[j] {
                cost += c;
            }
        }
        cost
    }

    pub(crate) fn labels_to_mask(&self, labels: Vec<u8>) -> LabelMask {
        LabelMask::new(self.dims, [1.0; 3], labels).expect("node count matches dims")
    }

    /// Text dump: a `dims` line, a `nodes` line, then `t <node> <source> <sink>`
    /// for every node with a non-zero terminal capacity and
    /// `n <node> <node> <capacity>` for every non-zero n-link.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# grid graph\n");
        writeln!(s, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]).unwrap();
        writeln!(s, "nodes {}", self.node_count()).unwrap();
        for i in 0..self.node_count() {
            if self.source[i] != 0.0 || self.sink[i] != 0.0 {
                writeln!(s, "t {i} {} {}", self.source[i], self.sink[i]).unwrap();
            }
        }
        for (i, j, c) in self.n_links() {
            if c != 0.0 {
                writeln!(s, "n {i} {j} {c}").unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::param(format!("graph dump: {m}"));
        let mut graph: Option<GridGraph> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64> {
                toks.get(k)
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("bad line `{line}`")))
            };
            let idx = |k: usize| -> Result<usize> {
                toks.get(k)
                    .and_then(|t| t.parse::<usize>().ok())
                    .ok_or_else(|| bad(format!("bad line `{line}`")))
            };
            match toks[0] {
                "dims" => graph = Some(GridGraph::new([idx(1)?, idx(2)?, idx(3)?])?),
                "nodes" => {
                    let g = graph.as_ref().ok_or_else(|| bad("`nodes` before `dims`".into()))?;
                    if idx(1)? != g.node_count() {
                        return Err(bad("node count does not match dims".into()));
                    }
                }
                "t" => {
                    let g = graph.as_mut().ok_or_else(|| bad("`t` before `dims`".into()))?;
                    let i = idx(1)?;
                    if i >= g.node_count() {
                        return Err(bad(format!("node {i} out of range")));
                    }
                    g.set_terminals(i, num(2)?, num(3)?)?;
                }
                "n" => {
                    let g = graph.as_mut().ok_or_else(|| bad("`n` before `dims`".into()))?;
                    let (i, j) = (idx(1)?, idx(2)?);
                    let (lo, hi) = (i.min(j), i.max(j));
                    let axis = (0..3)
                        .find(|&a| g.forward_neighbour(lo, a) == Some(hi))
                        .ok_or_else(|| bad(format!("nodes {i} and {j} are not grid neighbours")))?;
                    g.set_link(lo, axis, num(3)?)?;
                }
                other => return Err(bad(format!("unknown record `{other}`"))),
            }
        }
        graph.ok_or_else(|| bad("missing `dims`".into()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_bookkeeping() {
        let mut g = GridGraph::new([3, 2, 2]).unwrap();
        assert_eq!(g.n_links().count(), 2 * 2 * 2 + 3 * 2 + 3 * 2);
        assert!(g.set_link(2, 0, 1.0).is_err());
        assert!(g.set_link(2, 0, 0.0).is_ok());
        assert!(g.set_terminals(0, -1.0, 0.0).is_err());
        assert!(g.set_terminals(0, f64::NAN, 0.0).is_err());
        g.set_link(0, 2, 4.0).unwrap();
        assert_eq!(g.n_links().find(|&(i, _, _)| i == 0).map(|l| l.1), Some(1));
        assert!(g.n_links().any(|l| l == (0, 6, 4.0)));
    }

    #[test]
    fn cut_cost_counts_each_side() {
        let mut g = GridGraph::new([2, 1, 1]).unwrap();
        g.set_terminals(0, 3.0, 0.0).unwrap();
        g.set_terminals(1, 0.0, 3.0).unwrap();
        g.set_link(0, 0, 1.0).unwrap();
        assert_eq!(g.cut_cost(&[1, 0]), 1.0);
        assert_eq!(g.cut_cost(&[0, 0]), 3.0);
        assert_eq!(g.cut_cost(&[0, 1]), 7.0);
    }

    #[test]
    fn text_dump_round_trip() {
        let mut g = GridGraph::new([2, 2, 1]).unwrap();
        g.set_terminals(0, 1.5, 0.0).unwrap();
        g.set_terminals(3, 0.0, 2.25).unwrap();
        g.set_link(0, 1, 0.125).unwrap();
        g.set_link(1, 1, 7.0).unwrap();
        assert_eq!(GridGraph::parse(&g.to_text()).unwrap(), g);
        assert!(GridGraph::parse("dims 2 1 1\nn 0 1 x\n").is_err());
        assert!(GridGraph::parse("dims 3 1 1\nn 0 2 1\n").is_err());
    }
}
