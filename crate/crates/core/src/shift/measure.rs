use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{perron_pair, scc_decompose, MarkovGraph, PerronConfig};
use crate::error::{Error, Result};

/// Stationary Markov measure on an irreducible graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovMeasure {
    /// Row-stochastic transition matrix, indexed like the graph's vertices.
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub entropy: f64,
    /// Pressure `log ρ(A∘e^φ)` when built as an equilibrium state.
    pub pressure: Option<f64>,
}

impl MarkovMeasure {
    pub fn from_transition(transition: Vec<Vec<f64>>) -> Result<Self> {
        let stationary = stationary_vector(&transition)?;
        let entropy = markov_entropy(&transition, &stationary);
        Ok(Self { transition, stationary, entropy, pressure: None })
    }

    pub fn max_row_defect(&self) -> f64 {
        self.transition.iter().map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_j |(πP)_j − π_j|`.
    pub fn stationarity_defect(&self) -> f64 {
        let n = self.stationary.len();
        (0..n)
            .map(|j| {
                let s: f64 = (0..n).map(|i| self.stationary[i] * self.transition[i][j]).sum();
                (s - self.stationary[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Every positive transition probability sits on an edge of `graph`.
    pub fn supported_on(&self, graph: &MarkovGraph) -> bool {
        self.transition.iter().enumerate().all(|(i, row)| {
            row.iter().enumerate().all(|(j, &p)| p == 0.0 || graph.has_edge(i, j))
        })
    }

    /// `∫φ dμ = Σᵢ πᵢ Σⱼ Pᵢⱼ φ(i, j)`.
    pub fn integrate(&self, potential: &dyn Fn(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.transition.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    total += self.stationary[i] * p * potential(i, j);
                }
            }
        }
        total
    }
}

/// `−Σᵢ πᵢ Σⱼ Pᵢⱼ log Pᵢⱼ`.
pub fn markov_entropy(transition: &[Vec<f64>], stationary: &[f64]) -> f64 {
    let mut h = 0.0;
    for (row, &pi) in transition.iter().zip(stationary) {
        for &p in row {
            if p > 0.0 {
                h -= pi * p * p.ln();
            }
        }
    }
    h
}

/// Solves `πP = π, Σπ = 1` directly (last balance equation replaced by the
/// normalization).
pub fn stationary_vector(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = transition.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(j, i)] = transition[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        m[(n - 1, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = m.lu().solve(&rhs).ok_or(Error::Reducible)?;
    Ok(sol.iter().copied().collect())
}

fn require_irreducible(graph: &MarkovGraph) -> Result<()> {
    let comps = scc_decompose(graph);
    if graph.is_empty() || comps.len() != 1 || comps[0].vertices.len() != graph.len() {
        return Err(Error::Reducible);
    }
    Ok(())
}

/// Markov measure `Pᵢⱼ = Wᵢⱼ vⱼ / (ρ vᵢ)` with `(ρ, v)` the Perron pair of
/// `W` and `πᵢ ∝ uᵢ vᵢ` from the left eigenvector.
fn perron_measure(w: &DMatrix<f64>, cfg: &PerronConfig) -> Result<(f64, MarkovMeasure)> {
    let n = w.nrows();
    let (rho, _, v) = perron_pair(w, cfg)?;
    let (_, _, u) = perron_pair(&w.transpose(), cfg)?;
    let mut transition = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if w[(i, j)] > 0.0 {
                transition[i][j] = w[(i, j)] * v[j] / (rho * v[i]);
            }
        }
        // renormalize away the last few ulps
        let s: f64 = transition[i].iter().sum();
        transition[i].iter_mut().for_each(|p| *p /= s);
    }
    let z: f64 = (0..n).map(|i| u[i] * v[i]).sum();
    let stationary: Vec<f64> = (0..n).map(|i| u[i] * v[i] / z).collect();
    let entropy = markov_entropy(&transition, &stationary);
    Ok((rho, MarkovMeasure { transition, stationary, entropy, pressure: None }))
}

/// The measure of maximal entropy of a finite irreducible graph.
pub fn parry_measure(graph: &MarkovGraph, cfg: &PerronConfig) -> Result<MarkovMeasure> {
    require_irreducible(graph)?;
    let (rho, mut m) = perron_measure(&graph.adjacency_matrix(), cfg)?;
    m.pressure = Some(rho.ln());
    Ok(m)
}

/// Equilibrium state of an edge potential `φ(i, j)` on a finite irreducible
/// graph. Returns the pressure `log ρ(A∘e^φ)` and the Gibbs Markov measure.
pub fn equilibrium_measure(
    graph: &MarkovGraph,
    potential: &dyn Fn(usize, usize) -> f64,
    cfg: &PerronConfig,
) -> Result<(f64, MarkovMeasure)> {
    require_irreducible(graph)?;
    let n = graph.len();
    let mut w = DMatrix::zeros(n, n);
    for (u, v) in graph.edges() {
        let phi = potential(u, v);
        if !phi.is_finite() {
            return Err(Error::InvalidParams(format!("potential on {u}→{v} is {phi}")));
        }
        w[(u, v)] = phi.exp();
    }
    let (rho, mut m) = perron_measure(&w, cfg)?;
    let pressure = rho.ln();
    m.pressure = Some(pressure);
    Ok((pressure, m))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub vertices: Vec<usize>,
    pub period: u64,
    pub entropy: f64,
    pub error_bound: f64,
}

/// Per-component entropies, sorted by decreasing entropy, and the
/// components attaining the maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub entries: Vec<CensusEntry>,
    /// Indices into `entries` of the entropy maximizers (each carries its own
    /// Parry measure).
    pub maximizers: Vec<usize>,
    pub tie: bool,
    /// Distance from the maximum to the best non-maximizing component.
    pub gap: Option<f64>,
}

pub const TIE_TOLERANCE: f64 = 1e-9;

pub fn mme_census(graph: &MarkovGraph, cfg: &PerronConfig) -> Result<Census> {
    let mut entries = Vec::new();
    for comp in scc_decompose(graph) {
        let sub = graph.subgraph(&comp.vertices);
        let (rho, err, _) = perron_pair(&sub.adjacency_matrix(), cfg)?;
        entries.push(CensusEntry {
            vertices: comp.vertices,
            period: comp.period,
            entropy: rho.ln(),
            error_bound: err / rho,
        });
    }
    entries.sort_by(|a, b| {
        b.entropy.partial_cmp(&a.entropy).expect("finite entropies").then(a.vertices.cmp(&b.vertices))
    });
    let top = entries.first().map(|e| e.entropy);
    let maximizers: Vec<usize> = match top {
        Some(t) => (0..entries.len()).filter(|&i| t - entries[i].entropy <= TIE_TOLERANCE).collect(),
        None => Vec::new(),
    };
    let gap = top.and_then(|t| entries.get(maximizers.len()).map(|e| t - e.entropy));
    Ok(Census { tie: maximizers.len() > 1, maximizers, gap, entries })
}
