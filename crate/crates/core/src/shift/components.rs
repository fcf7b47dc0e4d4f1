use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{EntropyValue, MarkovGraph};
use crate::linalg::gcd;

/// An irreducible component: a maximal strongly connected vertex set that
/// carries at least one cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftComponent {
    /// Sorted vertex indices of the parent graph.
    pub vertices: Vec<usize>,
    pub period: u64,
    pub entropy: Option<EntropyValue>,
}

/// Tarjan's algorithm, iterative. Components are returned ordered by their
/// smallest vertex; vertices lying on no cycle belong to no component.
pub fn scc_decompose(graph: &MarkovGraph) -> Vec<ShiftComponent> {
    let n = graph.len();
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0;
    let mut raw: Vec<Vec<usize>> = Vec::new();
    // (vertex, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            let succ = graph.successors(v);
            if top.1 < succ.len() {
                let w = succ[top.1];
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                raw.push(comp);
            }
        }
    }

    let mut comps: Vec<ShiftComponent> = raw
        .into_iter()
        .filter(|c| c.len() > 1 || graph.has_edge(c[0], c[0]))
        .map(|mut c| {
            c.sort_unstable();
            let p = period_of(graph, &c);
            ShiftComponent { vertices: c, period: p, entropy: None }
        })
        .collect();
    comps.sort_by_key(|c| c.vertices[0]);
    comps
}

/// BFS levels inside `vertices` from its first element; `None` entries are
/// outside the set.
fn levels(graph: &MarkovGraph, vertices: &[usize]) -> Vec<Option<i64>> {
    let mut inside = vec![false; graph.len()];
    for &v in vertices {
        inside[v] = true;
    }
    let mut level = vec![None; graph.len()];
    let mut queue = VecDeque::new();
    level[vertices[0]] = Some(0);
    queue.push_back(vertices[0]);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].expect("queued vertices are labeled");
        for &w in graph.successors(u) {
            if inside[w] && level[w].is_none() {
                level[w] = Some(lu + 1);
                queue.push_back(w);
            }
        }
    }
    level
}

fn period_of(graph: &MarkovGraph, vertices: &[usize]) -> u64 {
    let level = levels(graph, vertices);
    let mut g = 0u64;
    for &u in vertices {
        let Some(lu) = level[u] else { continue };
        for &w in graph.successors(u) {
            if let Some(lw) = level[w] {
                g = gcd(g, (lu + 1 - lw).unsigned_abs());
            }
        }
    }
    g
}

/// gcd of the cycle lengths of a strongly connected component, from BFS
/// level differences along non-tree edges.
pub fn period(graph: &MarkovGraph, component: &ShiftComponent) -> u64 {
    period_of(graph, &component.vertices)
}

/// Splits a component of period ℓ into its ℓ cyclic classes (class `k`
/// holds the vertices at BFS level ≡ k mod ℓ).
pub fn cyclic_classes(graph: &MarkovGraph, component: &ShiftComponent) -> Vec<Vec<usize>> {
    let l = component.period.max(1);
    let level = levels(graph, &component.vertices);
    let mut classes = vec![Vec::new(); l as usize];
    for &v in &component.vertices {
        let lv = level[v].expect("strongly connected");
        classes[(lv as u64 % l) as usize].push(v);
    }
    classes
}

#[cfg(test)]
mod tests {
    use super::super::{cycle, full_shift, golden_mean};
    use super::*;

    #[test]
    fn spec_examples() {
        // edges {1→2, 2→1, 2→3, 3→3} with 0 unused
        let g = MarkovGraph::from_edges(4, [(1, 2), (2, 1), (2, 3), (3, 3)]);
        let comps = scc_decompose(&g);
        let sets: Vec<_> = comps.iter().map(|c| c.vertices.clone()).collect();
        assert_eq!(sets, vec![vec![1, 2], vec![3]]);

        let c = scc_decompose(&cycle(7));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].vertices.len(), 7);
        assert_eq!(c[0].period, 7);

        let dag = MarkovGraph::from_edges(4, [(0, 1), (1, 2), (0, 3), (3, 2)]);
        assert!(scc_decompose(&dag).is_empty());
    }

    #[test]
    fn periods() {
        assert_eq!(scc_decompose(&cycle(2))[0].period, 2);
        // loops of length 2 and 3 through vertex 0
        let g = MarkovGraph::from_edges(4, [(0, 1), (1, 0), (0, 2), (2, 3), (3, 0)]);
        assert_eq!(scc_decompose(&g)[0].period, 1);
        let g = MarkovGraph::from_edges(1, [(0, 0)]);
        assert_eq!(scc_decompose(&g)[0].period, 1);
        assert_eq!(scc_decompose(&full_shift(3))[0].period, 1);
        assert_eq!(scc_decompose(&golden_mean())[0].period, 1);
    }

    #[test]
    fn period_independent_of_start_vertex() {
        // bipartite-like: 0→1→2→3→0 and 0→1→4→... period 2 structure
        let g = MarkovGraph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 0), (1, 4), (4, 5), (5, 2)]);
        let comp = &scc_decompose(&g)[0];
        for start in [0, 2, 5] {
            let mut vs = comp.vertices.clone();
            vs.retain(|&v| v != start);
            vs.insert(0, start);
            assert_eq!(period_of(&g, &vs), comp.period);
        }
    }

    #[test]
    fn classes_of_period_three() {
        // 6-cycle plus the chord 0→4 closes a 3-cycle 0→4→5→0
        let mut g = cycle(6);
        g.add_edge(0, 4);
        let comp = &scc_decompose(&g)[0];
        assert_eq!(comp.period, 3);
        let classes = cyclic_classes(&g, comp);
        assert_eq!(classes, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let g = MarkovGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)));
        assert_eq!(scc_decompose(&g).len(), 1);
    }
}
