//! Hyperbolic periodic orbits and Lyapunov exponents.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Mat2, Point, SmoothMap2D};
use crate::error::{Error, Result};
use crate::linalg::eigenvalues2;

/// Acceptance bound on the closing defect of a periodic orbit.
pub const ORBIT_TOLERANCE: f64 = 1e-10;
/// Orbits whose points come this close are the same orbit.
pub const MERGE_TOLERANCE: f64 = 1e-8;
/// Multipliers with modulus in `[1 − δ, 1 + δ]` are treated as neutral.
pub const NEUTRAL_BAND: f64 = 1e-6;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitType {
    Saddle,
    Sink,
    Source,
    Nonhyperbolic,
}

/// A periodic orbit listed from its lexicographically smallest point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<Point>,
    pub period: usize,
    /// Eigenvalues of `Df(x_{p−1})⋯Df(x₀)`, ordered by increasing modulus.
    pub multipliers: [Complex<f64>; 2],
    #[serde(rename = "type")]
    pub kind: OrbitType,
    pub lambda_s: Option<f64>,
    pub lambda_u: Option<f64>,
    pub residual: f64,
}

impl PeriodicOrbit {
    /// Builds the orbit record from an ordered cycle of points: multipliers
    /// from the Jacobian product, closing residual and classification.
    pub fn from_cycle(map: &SmoothMap2D, points: Vec<Point>) -> Self {
        let p = points.len();
        assert!(p >= 1);
        let mut product = Mat2::identity();
        let mut residual: f64 = 0.0;
        for i in 0..p {
            product = map.jacobian(&points[i]) * product;
            residual = residual.max(map.domain().distance(&map.forward(&points[i]), &points[(i + 1) % p]));
        }
        let multipliers = eigenvalues2(&product);
        let c = classify(&multipliers, p);
        let mut orbit = PeriodicOrbit {
            points,
            period: p,
            multipliers,
            kind: c.kind,
            lambda_s: c.lambda_s,
            lambda_u: c.lambda_u,
            residual,
        };
        orbit.rotate_to_anchor();
        orbit
    }

    pub fn anchor(&self) -> Point {
        self.points[0]
    }

    pub fn is_saddle(&self) -> bool {
        self.kind == OrbitType::Saddle
    }

    /// Distance from `q` to the nearest point of the orbit.
    pub fn distance_to(&self, map: &SmoothMap2D, q: &Point) -> f64 {
        self.points.iter().map(|x| map.domain().distance(x, q)).fold(f64::INFINITY, f64::min)
    }

    fn rotate_to_anchor(&mut self) {
        let k = (0..self.points.len())
            .min_by(|&i, &j| lex_cmp(&self.points[i], &self.points[j]))
            .unwrap_or(0);
        self.points.rotate_left(k);
    }
}

fn lex_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: OrbitType,
    pub lambda_s: Option<f64>,
    pub lambda_u: Option<f64>,
}

/// Type and per-iterate exponents of an orbit of period `p` from its
/// multipliers.
pub fn classify(multipliers: &[Complex<f64>; 2], p: usize) -> Classification {
    let lo = multipliers[0].norm().min(multipliers[1].norm());
    let hi = multipliers[0].norm().max(multipliers[1].norm());
    let neutral = |m: f64| (m - 1.0).abs() <= NEUTRAL_BAND;
    let kind = if neutral(lo) || neutral(hi) {
        OrbitType::Nonhyperbolic
    } else if lo < 1.0 && hi > 1.0 {
        OrbitType::Saddle
    } else if hi < 1.0 {
        OrbitType::Sink
    } else {
        OrbitType::Source
    };
    let saddle = kind == OrbitType::Saddle;
    Classification {
        kind,
        lambda_s: saddle.then(|| -lo.ln() / p as f64),
        lambda_u: saddle.then(|| hi.ln() / p as f64),
    }
}

/// Newton iteration on `F(x) = f^p(x) − x` (displacement taken in the
/// domain). The step is halved while it fails to decrease `‖F‖`.
fn newton_periodic(map: &SmoothMap2D, seed: &Point, p: usize) -> Option<Point> {
    let dom = map.domain();
    let eval = |x: &Point| -> Option<(Point, Mat2)> {
        let mut cur = *x;
        let mut jac = Mat2::identity();
        for _ in 0..p {
            jac = map.jacobian(&cur) * jac;
            cur = map.forward(&cur);
            if !dom.contains(&cur) || !cur[0].is_finite() || !cur[1].is_finite() {
                return None;
            }
        }
        Some((dom.displacement(x, &cur)?, jac))
    };
    let mut x = dom.wrap(seed);
    let (mut fx, mut jac) = eval(&x)?;
    for _ in 0..NEWTON_MAX_ITER {
        if fx.norm() < NEWTON_TOL {
            break;
        }
        let step = (jac - Mat2::identity()).try_inverse()? * (-fx);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let cand = dom.wrap(&(x + step * t));
            if dom.contains(&cand) {
                if let Some((fc, jc)) = eval(&cand) {
                    if fc.norm() < fx.norm() {
                        accepted = Some((cand, fc, jc));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let (cand, fc, jc) = accepted?;
        x = cand;
        fx = fc;
        jac = jc;
    }
    (fx.norm() < ORBIT_TOLERANCE).then_some(x)
}

fn divisors(p: usize) -> impl Iterator<Item = usize> {
    (1..p).filter(move |q| p.is_multiple_of(*q))
}

/// All periodic orbits of least period exactly `p` reachable by Newton from a
/// uniform grid of `density` seeds per unit length over the map's sample
/// region. Seeds that diverge or escape are dropped; orbits closer than
/// [`MERGE_TOLERANCE`] are merged. The result is sorted by anchor.
pub fn find_periodic(map: &SmoothMap2D, p: usize, density: usize) -> Result<Vec<PeriodicOrbit>> {
    if p == 0 {
        return Err(Error::InvalidParams("period must be at least 1".into()));
    }
    if density < 4 {
        return Err(Error::InvalidParams(format!("seed density {density} < 4 per unit length")));
    }
    let (lo, hi) = map.sample_region();
    let nx = ((hi[0] - lo[0]) * density as f64).ceil().max(1.0) as usize;
    let ny = ((hi[1] - lo[1]) * density as f64).ceil().max(1.0) as usize;
    let seeds: Vec<Point> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            Point::new(
                lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / nx as f64,
                lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / ny as f64,
            )
        })
        .collect();

    let dom = map.domain();
    let found: Vec<Option<PeriodicOrbit>> = seeds
        .par_iter()
        .map(|s| {
            let x = newton_periodic(map, s, p)?;
            // least-period certification
            let seg = map.iterate(&x, p as i64 - 1).ok()?;
            if divisors(p).any(|q| dom.distance(&seg.points[q], &x) < MERGE_TOLERANCE) {
                return None;
            }
            let orbit = PeriodicOrbit::from_cycle(map, seg.points);
            (orbit.residual < ORBIT_TOLERANCE).then_some(orbit)
        })
        .collect();

    let mut candidates: Vec<PeriodicOrbit> = found.into_iter().flatten().collect();
    candidates.sort_by(|a, b| lex_cmp(&a.anchor(), &b.anchor()));
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    // a duplicate has some point near a stored anchor; the scan is linear
    // because torus representatives near 0 and 1 defeat a coordinate hash
    for orb in candidates {
        let dup = orbits.iter().any(|o| {
            o.period == orb.period && orb.points.iter().any(|q| dom.distance(&o.anchor(), q) < MERGE_TOLERANCE)
        });
        if !dup {
            orbits.push(orb);
        }
    }
    orbits.sort_by(|a, b| lex_cmp(&a.anchor(), &b.anchor()));
    Ok(orbits)
}

/// All saddle orbits with period `1..=max_period`, concatenated in period
/// order.
pub fn saddles_up_to(map: &SmoothMap2D, max_period: usize, density: usize) -> Result<Vec<PeriodicOrbit>> {
    let mut all = Vec::new();
    for p in 1..=max_period {
        all.extend(find_periodic(map, p, density)?.into_iter().filter(PeriodicOrbit::is_saddle));
    }
    Ok(all)
}

/// QR estimate of both Lyapunov exponents along an orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// `χ₁ ≤ χ₂`.
    pub exponents: [f64; 2],
    /// Largest difference between the estimates from the two halves of the
    /// orbit.
    pub drift: f64,
    pub n: usize,
}

/// Lyapunov exponents along `x, f(x), …, f^{n−1}(x)` by Gram–Schmidt
/// re-orthonormalization of the tangent frame at each step.
pub fn lyapunov_orbit(map: &SmoothMap2D, x: &Point, n: usize) -> Result<LyapunovEstimate> {
    if n < 100 {
        return Err(Error::InvalidParams(format!("n = {n} < 100 iterates")));
    }
    let dom = map.domain();
    if !dom.contains(x) {
        return Err(Error::Escape { step: 0, x: x[0], y: x[1] });
    }
    let mut q = Mat2::identity();
    let mut cur = dom.wrap(x);
    let half = n / 2;
    let mut sums = [[0.0f64; 2]; 2];
    for k in 0..n {
        let m = map.jacobian(&cur) * q;
        let qr = m.qr();
        let r = qr.r();
        let half_idx = usize::from(k >= half);
        sums[half_idx][0] += r[(0, 0)].abs().ln();
        sums[half_idx][1] += r[(1, 1)].abs().ln();
        q = qr.q();
        cur = map.forward(&cur);
        if !dom.contains(&cur) {
            return Err(Error::Escape { step: k as i64 + 1, x: cur[0], y: cur[1] });
        }
    }
    let total = [(sums[0][0] + sums[1][0]) / n as f64, (sums[0][1] + sums[1][1]) / n as f64];
    let first = [sums[0][0] / half as f64, sums[0][1] / half as f64];
    let second = [sums[1][0] / (n - half) as f64, sums[1][1] / (n - half) as f64];
    let drift = (first[0] - second[0]).abs().max((first[1] - second[1]).abs());
    let mut exponents = total;
    exponents.sort_by(f64::total_cmp);
    Ok(LyapunovEstimate { exponents, drift, n })
}

/// Uniform expansion and contraction rates over a sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    pub lambda_s: f64,
    pub lambda_u: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `(n', λˢ, λᵘ)` at `n' = n/4, n/2, n`, to judge convergence in `n`.
    pub history: Vec<(usize, f64, f64)>,
    /// Grid points whose orbit left the domain and were skipped.
    pub skipped: usize,
}

/// `(1/n) log ‖Df^{±n}_x‖` with renormalized products; `None` on escape.
fn log_norm_rate(map: &SmoothMap2D, x: &Point, n: usize, backward: bool) -> Option<Vec<f64>> {
    let dom = map.domain();
    let marks = [n / 4, n / 2, n];
    let mut out = Vec::with_capacity(3);
    let mut acc = Mat2::identity();
    let mut log_scale = 0.0;
    let mut cur = dom.wrap(x);
    for k in 1..=n {
        let j = if backward { map.inverse_jacobian(&cur) } else { map.jacobian(&cur) };
        acc = j * acc;
        cur = if backward { map.inverse(&cur) } else { map.forward(&cur) };
        if !dom.contains(&cur) {
            return None;
        }
        let s = acc.norm();
        acc /= s;
        log_scale += s.ln();
        if marks.contains(&k) {
            let sv = acc.singular_values();
            let top = sv[0].max(sv[1]);
            out.push((log_scale + top.ln()) / k as f64);
        }
    }
    Some(out)
}

/// `λᵘ = max_x (1/n) log‖Df^n_x‖` and `λˢ` the same for `f⁻¹`, over a grid
/// of `grid × grid` points of the sample region.
pub fn lambda_bounds(map: &SmoothMap2D, n: usize, grid: usize) -> Result<LambdaBounds> {
    if n < 20 {
        return Err(Error::InvalidParams(format!("n = {n} < 20")));
    }
    if grid == 0 {
        return Err(Error::InvalidParams("empty grid".into()));
    }
    let (lo, hi) = map.sample_region();
    let pts: Vec<Point> = (0..grid * grid)
        .map(|k| {
            let (i, j) = (k % grid, k / grid);
            Point::new(
                lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / grid as f64,
                lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / grid as f64,
            )
        })
        .collect();
    let rates: Vec<Option<(Vec<f64>, Vec<f64>)>> = pts
        .par_iter()
        .map(|x| Some((log_norm_rate(map, x, n, false)?, log_norm_rate(map, x, n, true)?)))
        .collect();
    let mut best_u = [f64::NEG_INFINITY; 3];
    let mut best_s = [f64::NEG_INFINITY; 3];
    let mut skipped = 0;
    for r in &rates {
        match r {
            Some((u, s)) => {
                for i in 0..3 {
                    best_u[i] = best_u[i].max(u[i]);
                    best_s[i] = best_s[i].max(s[i]);
                }
            }
            None => skipped += 1,
        }
    }
    if skipped == rates.len() {
        return Err(Error::Escape { step: 0, x: pts[0][0], y: pts[0][1] });
    }
    let marks = [n / 4, n / 2, n];
    let history = (0..3).map(|i| (marks[i], best_s[i], best_u[i])).collect();
    let (ls, lu) = (best_s[2], best_u[2]);
    Ok(LambdaBounds {
        lambda_s: ls,
        lambda_u: lu,
        lambda_min: ls.min(lu),
        lambda_max: ls.max(lu),
        history,
        skipped,
    })
}
