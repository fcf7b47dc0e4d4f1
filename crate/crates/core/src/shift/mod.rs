//! Markov shifts presented by directed graphs.
//!
//! The bi-infinite path space of a [`MarkovGraph`] is the shift; everything
//! the rest of the crate needs from it (irreducible components, periods,
//! Gurevich entropy, Parry and equilibrium measures) is computed from the
//! adjacency structure.

mod components;
mod lazy;
mod measure;
mod perron;

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{cyclic_classes, period, scc_decompose, ShiftComponent};
pub use lazy::{gurevich_entropy_lazy, LazyEntropy, LazyGraph, LoopTree};
pub use measure::{
    equilibrium_measure, markov_entropy, mme_census, parry_measure, stationary_vector, Census,
    CensusEntry, MarkovMeasure, TIE_TOLERANCE,
};
pub use perron::{gurevich_entropy, perron_pair, EntropyMethod, EntropyValue, PerronConfig};

/// Finite directed graph; parallel edges are collapsed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkovGraph {
    succ: Vec<Vec<usize>>,
    labels: Vec<String>,
}

impl MarkovGraph {
    pub fn new(n: usize) -> Self {
        Self { succ: vec![Vec::new(); n], labels: (0..n).map(|i| i.to_string()).collect() }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        let row = &mut self.succ[u];
        if let Err(pos) = row.binary_search(&v) {
            row.insert(pos, v);
        }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.succ[u].binary_search(&v).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(u, row)| row.iter().map(move |&v| (u, v)))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<String>) {
        assert_eq!(labels.len(), self.len());
        self.labels = labels;
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.len()];
        for (_, v) in self.edges() {
            deg[v] += 1;
        }
        deg
    }

    /// Every vertex has an incoming and an outgoing edge.
    pub fn satisfies_standing_assumption(&self) -> bool {
        let indeg = self.in_degrees();
        (0..self.len()).all(|v| indeg[v] > 0 && !self.succ[v].is_empty())
    }

    /// Induced subgraph on `vertices` (in the given order).
    pub fn subgraph(&self, vertices: &[usize]) -> MarkovGraph {
        let index: HashMap<usize, usize> =
            vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut g = MarkovGraph::new(vertices.len());
        for (i, &v) in vertices.iter().enumerate() {
            for w in &self.succ[v] {
                if let Some(&j) = index.get(w) {
                    g.add_edge(i, j);
                }
            }
        }
        g.labels = vertices.iter().map(|&v| self.labels[v].clone()).collect();
        g
    }

    /// Repeatedly removes vertices lacking an in- or out-edge. Returns the
    /// pruned graph and, for each of its vertices, the original index.
    pub fn prune(&self) -> (MarkovGraph, Vec<usize>) {
        let n = self.len();
        let mut alive = vec![true; n];
        let mut indeg = self.in_degrees();
        let mut outdeg: Vec<usize> = self.succ.iter().map(Vec::len).collect();
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in self.edges() {
            pred[v].push(u);
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0 || outdeg[v] == 0).collect();
        while let Some(v) = stack.pop() {
            if !alive[v] {
                continue;
            }
            alive[v] = false;
            for &w in &self.succ[v] {
                if alive[w] {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        stack.push(w);
                    }
                }
            }
            for &u in &pred[v] {
                if alive[u] {
                    outdeg[u] -= 1;
                    if outdeg[u] == 0 {
                        stack.push(u);
                    }
                }
            }
        }
        let kept: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        (self.subgraph(&kept), kept)
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for (u, v) in self.edges() {
            a[(u, v)] = 1.0;
        }
        a
    }

    /// Graph with an edge `u → w` whenever a path of exactly `k` edges joins them.
    pub fn power(&self, k: usize) -> MarkovGraph {
        let n = self.len();
        let mut g = MarkovGraph::new(n);
        g.labels = self.labels.clone();
        for s in 0..n {
            let mut frontier = vec![false; n];
            frontier[s] = true;
            for _ in 0..k {
                let mut next = vec![false; n];
                for v in (0..n).filter(|&v| frontier[v]) {
                    for &w in &self.succ[v] {
                        next[w] = true;
                    }
                }
                frontier = next;
            }
            for (w, &hit) in frontier.iter().enumerate() {
                if hit {
                    g.add_edge(s, w);
                }
            }
        }
        g
    }

    /// Parses one `u v` pair per line; `#` starts a comment. Vertex tokens are
    /// arbitrary strings, numbered in order of first appearance.
    pub fn parse_edge_list(text: &str) -> Result<MarkovGraph> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        let mut id_of = |tok: &str, labels: &mut Vec<String>| -> usize {
            *ids.entry(tok.to_string()).or_insert_with(|| {
                labels.push(tok.to_string());
                labels.len() - 1
            })
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected `u v`, got {line:?}",
                    lineno + 1
                )));
            }
            let u = id_of(toks[0], &mut labels);
            let v = id_of(toks[1], &mut labels);
            edges.push((u, v));
        }
        let mut g = MarkovGraph::from_edges(labels.len(), edges);
        g.labels = labels;
        Ok(g)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            out += &format!("{} {}\n", self.labels[u], self.labels[v]);
        }
        out
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {name} {{\n");
        for (i, l) in self.labels.iter().enumerate() {
            out += &format!("  v{i} [label=\"{l}\"];\n");
        }
        for (u, v) in self.edges() {
            out += &format!("  v{u} -> v{v};\n");
        }
        out += "}\n";
        out
    }
}

/// Full shift on `k` symbols.
pub fn full_shift(k: usize) -> MarkovGraph {
    MarkovGraph::from_edges(k, (0..k).flat_map(|u| (0..k).map(move |v| (u, v))))
}

/// `a → a, a → b, b → a`.
pub fn golden_mean() -> MarkovGraph {
    let mut g = MarkovGraph::from_edges(2, [(0, 0), (0, 1), (1, 0)]);
    g.set_labels(vec!["a".into(), "b".into()]);
    g
}

/// Directed cycle `0 → 1 → … → n−1 → 0`.
pub fn cycle(n: usize) -> MarkovGraph {
    MarkovGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let g = MarkovGraph::parse_edge_list("# golden\na a\na b\nb a  # back\n").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edge_count(), 3);
        let again = MarkovGraph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(again, g);
        assert!(MarkovGraph::parse_edge_list("a b c\n").is_err());
    }

    #[test]
    fn prune_removes_dangling_chains() {
        // 0 -> 1 -> 2 -> 1, 3 -> 0 ; 4 isolated ; 2 -> 5 (sink)
        let g = MarkovGraph::from_edges(6, [(0, 1), (1, 2), (2, 1), (3, 0), (2, 5)]);
        let (p, kept) = g.prune();
        assert_eq!(kept, vec![1, 2]);
        assert!(p.satisfies_standing_assumption());
    }

    #[test]
    fn power_of_cycle() {
        let c = cycle(4).power(2);
        assert!(c.has_edge(0, 2) && c.has_edge(1, 3) && !c.has_edge(0, 1));
    }

    #[test]
    fn dot_lists_edges() {
        let dot = golden_mean().to_dot("g");
        assert!(dot.contains("v0 -> v1;") && dot.contains("label=\"a\""));
    }
}
