use serde::{Deserialize, Serialize};

use super::{gurevich_entropy, MarkovGraph, PerronConfig};
use crate::error::Result;

/// A countable graph exposed through an exhausting sequence of finite
/// induced subgraphs: `truncation(n)` must be an induced subgraph of
/// `truncation(n + 1)`.
pub trait LazyGraph {
    fn truncation(&self, level: usize) -> MarkovGraph;
}

/// The renewal graph: vertices `0, 1, 2, …`, edges `k → k+1` and `k → 0`.
/// It has exactly one first-return loop at 0 of every length, so its
/// Gurevich entropy is `log 2`, approached strictly from below by its
/// truncations and never attained.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoopTree;

impl LazyGraph for LoopTree {
    fn truncation(&self, level: usize) -> MarkovGraph {
        let n = level.max(1);
        let mut g = MarkovGraph::new(n);
        for k in 0..n {
            g.add_edge(k, 0);
            if k + 1 < n {
                g.add_edge(k, k + 1);
            }
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LazyEntropy {
    pub levels: Vec<usize>,
    /// Entropy of each truncation; non-decreasing for nested truncations.
    pub values: Vec<f64>,
    pub value: f64,
    /// Last increment of the sequence, used as the error proxy.
    pub error_proxy: f64,
    /// False when the schedule is still strictly increasing at its end, i.e.
    /// no truncation is seen to attain the supremum.
    pub stabilized: bool,
}

pub fn gurevich_entropy_lazy(
    graph: &dyn LazyGraph,
    schedule: &[usize],
    cfg: &PerronConfig,
) -> Result<LazyEntropy> {
    let mut values = Vec::with_capacity(schedule.len());
    let mut running = f64::NEG_INFINITY;
    for &level in schedule {
        let h = gurevich_entropy(&graph.truncation(level), cfg)?;
        // nested subgraphs cannot lose entropy; clamp numerical jitter
        running = running.max(h.value);
        values.push(running);
    }
    let value = values.last().copied().unwrap_or(f64::NEG_INFINITY);
    let error_proxy = match values.as_slice() {
        [.., a, b] if a.is_finite() => b - a,
        _ => f64::INFINITY,
    };
    Ok(LazyEntropy {
        levels: schedule.to_vec(),
        values,
        value,
        error_proxy,
        stabilized: error_proxy <= 1e-12,
    })
}
