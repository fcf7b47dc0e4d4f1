use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{scc_decompose, MarkovGraph};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronConfig {
    /// Relative width of the Collatz–Wielandt bracket at which to stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PerronConfig {
    fn default() -> Self {
        Self { tol: 1e-13, max_iter: 2_000_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntropyMethod {
    PerronPowerIteration,
    LazyTruncation,
}

/// An entropy value in nats with an error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub error_bound: f64,
    pub method: EntropyMethod,
}

/// Perron root and positive right eigenvector (unit 1-norm) of an
/// irreducible nonnegative matrix.
///
/// Periodic matrices are handled by iterating `M + cI` with `c` the largest
/// row sum: this shifts every eigenvalue by `c` and leaves the Perron root as
/// the unique one of maximal modulus. The iteration stops once the
/// Collatz–Wielandt bracket `min (Bx)ᵢ/xᵢ ≤ ρ(B) ≤ max (Bx)ᵢ/xᵢ` is narrow.
/// Returns `(ρ, error bound on ρ, v)`.
pub fn perron_pair(m: &DMatrix<f64>, cfg: &PerronConfig) -> Result<(f64, f64, DVector<f64>)> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let shift = (0..n).map(|i| m.row(i).sum()).fold(0.0, f64::max);
    if shift == 0.0 {
        return Ok((0.0, 0.0, DVector::from_element(n, 1.0 / n as f64)));
    }
    let b = m + DMatrix::identity(n, n) * shift;
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut bracket = (0.0, f64::INFINITY);
    for it in 0..cfg.max_iter {
        let y = &b * &x;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let s = y.sum();
        x = y / s;
        bracket = (lo - shift, hi - shift);
        let rho = 0.5 * (bracket.0 + bracket.1);
        if it > 0 && hi - lo <= cfg.tol * rho.max(1e-300) {
            // one more multiplication keeps v consistent with the bracket
            let v = &b * &x;
            let v = &v / v.sum();
            return Ok((rho, 0.5 * (hi - lo), v));
        }
        if !lo.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergent(it));
        }
    }
    let _ = bracket;
    Err(Error::NonConvergent(cfg.max_iter))
}

/// Gurevich entropy of a finite graph: the largest log Perron root over its
/// irreducible components. Graphs with no cycle have entropy `-∞`.
pub fn gurevich_entropy(graph: &MarkovGraph, cfg: &PerronConfig) -> Result<EntropyValue> {
    let mut best = EntropyValue {
        value: f64::NEG_INFINITY,
        error_bound: 0.0,
        method: EntropyMethod::PerronPowerIteration,
    };
    for comp in scc_decompose(graph) {
        let sub = graph.subgraph(&comp.vertices);
        let (rho, err, _) = perron_pair(&sub.adjacency_matrix(), cfg)?;
        let value = rho.ln();
        if value > best.value {
            best.value = value;
            best.error_bound = err / rho;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::super::{cycle, full_shift, golden_mean};
    use super::*;

    #[test]
    fn full_shift_is_log_k() {
        for k in 1..6 {
            let h = gurevich_entropy(&full_shift(k), &PerronConfig::default()).unwrap();
            assert!((h.value - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn golden_mean_entropy() {
        let h = gurevich_entropy(&golden_mean(), &PerronConfig::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((h.value - phi.ln()).abs() < 1e-12);
        assert!((h.value - 0.48121182505960347).abs() < 1e-12);
    }

    #[test]
    fn periodic_cycle_converges() {
        let h = gurevich_entropy(&cycle(30), &PerronConfig::default()).unwrap();
        assert!(h.value.abs() < 1e-12);
    }

    #[test]
    fn dag_is_minus_infinity() {
        let g = MarkovGraph::from_edges(3, [(0, 1), (1, 2)]);
        assert_eq!(gurevich_entropy(&g, &PerronConfig::default()).unwrap().value, f64::NEG_INFINITY);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let cfg = PerronConfig { tol: 1e-15, max_iter: 3 };
        let err = gurevich_entropy(&golden_mean(), &cfg).unwrap_err();
        assert_eq!(err.name(), "NonConvergent");
    }
}
