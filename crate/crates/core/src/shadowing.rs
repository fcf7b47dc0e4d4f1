//! Pseudo-orbit graphs, shadowing, and coded horseshoes.
//!
//! A horseshoe is assembled from a finite vertex set `L_m`: the saddle orbits
//! together with the windows `f^k(t)`, `−m ≤ k ≤ m + a − 1`, of connecting
//! orbits `t`. Vertices are joined `ξ → η` whenever `d(f(ξ), η) < ε`, and
//! paths in the resulting graph are turned into true orbits by a Newton solve
//! on the space of orbit sequences.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Domain, Mat2, Point, SmoothMap2D};
use crate::error::{Error, Result};
use crate::orbits::PeriodicOrbit;
use crate::shift::{gurevich_entropy, scc_decompose, MarkovGraph, PerronConfig};

/// Points closer than this are treated as the same vertex.
pub const VERTEX_MERGE_TOLERANCE: f64 = 1e-12;
/// Longest path handed to a single Newton solve.
pub const MAX_WINDOW: usize = 200;

/// Where a vertex of `L_m` came from: segment `segment` of the construction
/// (a saddle orbit or a connecting orbit), iterate `iterate` of its base point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub segment: usize,
    pub iterate: i64,
}

/// The ε-transition graph on a finite point set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PseudoOrbitGraph {
    pub vertices: Vec<Point>,
    pub epsilon: f64,
    pub graph: MarkovGraph,
    pub provenance: Vec<Option<Provenance>>,
    /// Smallest distance between two distinct vertices (after merging
    /// coincident input points).
    pub min_spacing: f64,
    /// Input points discarded because they had no incoming or no outgoing
    /// edge.
    pub pruned: Vec<Point>,
}

impl PseudoOrbitGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `d(f(ξ), η)` for the ordered vertex pair.
    pub fn jump(&self, map: &SmoothMap2D, u: usize, v: usize) -> f64 {
        map.domain().distance(&map.forward(&self.vertices[u]), &self.vertices[v])
    }

    /// Re-evaluates the distance predicate on every ordered pair and reports
    /// whether the stored edge set matches it.
    pub fn edges_match_predicate(&self, map: &SmoothMap2D) -> bool {
        let n = self.len();
        (0..n).into_par_iter().all(|u| {
            let fu = map.forward(&self.vertices[u]);
            (0..n).all(|v| {
                let d = map.domain().distance(&fu, &self.vertices[v]);
                (d < self.epsilon) == self.graph.has_edge(u, v)
            })
        })
    }

    pub fn to_dot(&self) -> String {
        self.graph.to_dot("horseshoe")
    }
}

/// Builds the ε-transition graph on `points` and prunes vertices without an
/// incoming or outgoing edge.
pub fn pseudo_orbit_graph(map: &SmoothMap2D, points: &[Point], epsilon: f64) -> PseudoOrbitGraph {
    let prov = vec![None; points.len()];
    graph_with_provenance(map, points, &prov, epsilon)
}

fn graph_with_provenance(
    map: &SmoothMap2D,
    points: &[Point],
    provenance: &[Option<Provenance>],
    epsilon: f64,
) -> PseudoOrbitGraph {
    let dom = map.domain();
    let mut verts: Vec<Point> = Vec::with_capacity(points.len());
    let mut prov = Vec::with_capacity(points.len());
    for (p, pr) in points.iter().zip(provenance) {
        let p = dom.wrap(p);
        if verts.iter().all(|q| dom.distance(q, &p) > VERTEX_MERGE_TOLERANCE) {
            verts.push(p);
            prov.push(*pr);
        }
    }
    let n = verts.len();
    let images: Vec<Point> = verts.iter().map(|p| map.forward(p)).collect();
    let succ: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|u| (0..n).filter(|&v| dom.distance(&images[u], &verts[v]) < epsilon).collect())
        .collect();
    let full = MarkovGraph::from_edges(n, succ.iter().enumerate().flat_map(|(u, s)| s.iter().map(move |&v| (u, v))));
    let (graph, kept) = full.prune();
    let mut alive = vec![false; n];
    for &k in &kept {
        alive[k] = true;
    }
    let pruned = (0..n).filter(|&i| !alive[i]).map(|i| verts[i]).collect();
    let vertices: Vec<Point> = kept.iter().map(|&i| verts[i]).collect();
    let provenance = kept.iter().map(|&i| prov[i]).collect();
    let min_spacing = min_spacing(dom, &vertices);
    PseudoOrbitGraph { vertices, epsilon, graph, provenance, min_spacing, pruned }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    pub max_iter: usize,
    /// Target for the sup-norm orbit defect `max |f(x_k) − x_{k+1}|`.
    pub tol: f64,
    /// Smallest singular value of the linearized orbit operator below which
    /// the data is declared non-hyperbolic.
    pub min_singular: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self { max_iter: 30, tol: 1e-13, min_singular: 0.05 }
    }
}

/// A true orbit shadowing a pseudo-orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shadowing {
    /// The time-0 point of the shadowing orbit.
    pub point: Point,
    pub orbit: Vec<Point>,
    /// `sup_k d(x_k, path_k)`.
    pub distance: f64,
    /// Remaining orbit defect `sup_k d(f(x_k), x_{k+1})`, including the
    /// closing step of a cyclic path.
    pub residual: f64,
    pub iterations: usize,
    /// Smallest singular value of the last linearization; `None` when the
    /// input was already an orbit.
    pub sigma_min: Option<f64>,
}

fn defects(map: &SmoothMap2D, xs: &[Point], closed: bool) -> Result<Vec<Point>> {
    let n = xs.len();
    let m = if closed { n } else { n - 1 };
    (0..m)
        .map(|k| {
            let next = &xs[(k + 1) % n];
            map.domain()
                .displacement(next, &map.forward(&xs[k]))
                .ok_or_else(|| Error::NoContraction(format!("step {k} changes connected piece")))
        })
        .collect()
}

fn sup_norm(v: &[Point]) -> f64 {
    v.iter().map(|d| d.norm()).fold(0.0, f64::max)
}

/// Finds the orbit `(x_k)` with `f(x_k) = x_{k+1}` closest to `path`.
///
/// The Newton step is the minimum-norm solution of the linearized system
/// `Df(x_k) Δ_k − Δ_{k+1} = −F_k`, whose operator is block bidiagonal (block
/// cyclic for `closed` paths). Its smallest singular value bounds how far the
/// solution may drift from the pseudo-orbit, so a small value is reported as
/// [`Error::NoContraction`].
pub fn shadow(map: &SmoothMap2D, path: &[Point], closed: bool, cfg: &ShadowConfig) -> Result<Shadowing> {
    let n = path.len();
    if n == 0 {
        return Err(Error::InvalidParams("empty path".into()));
    }
    if n > MAX_WINDOW {
        return Err(Error::InvalidParams(format!("path length {n} exceeds the window limit {MAX_WINDOW}")));
    }
    let dom = map.domain();
    let mut xs: Vec<Point> = path.iter().map(|p| dom.wrap(p)).collect();
    if n == 1 && !closed {
        return Ok(Shadowing { point: xs[0], orbit: xs, distance: 0.0, residual: 0.0, iterations: 0, sigma_min: None });
    }
    let mut f = defects(map, &xs, closed)?;
    let mut res = sup_norm(&f);
    let mut sigma_min = None;
    let mut iterations = 0;
    while res > cfg.tol {
        if iterations == cfg.max_iter {
            return Err(Error::NoContraction(format!(
                "defect {res:.3e} after {iterations} Newton steps"
            )));
        }
        iterations += 1;
        let rows = 2 * f.len();
        let mut jac = DMatrix::<f64>::zeros(rows, 2 * n);
        for k in 0..f.len() {
            let d: Mat2 = map.jacobian(&xs[k]);
            let next = (k + 1) % n;
            for a in 0..2 {
                for b in 0..2 {
                    jac[(2 * k + a, 2 * k + b)] += d[(a, b)];
                }
                jac[(2 * k + a, 2 * next + a)] -= 1.0;
            }
        }
        let rhs = DVector::from_iterator(rows, f.iter().flat_map(|d| [-d[0], -d[1]]));
        let svd = jac.svd(true, true);
        let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
        sigma_min = Some(smin);
        if smin < cfg.min_singular {
            return Err(Error::NoContraction(format!(
                "linearized orbit operator is nearly singular (sigma_min = {smin:.3e})"
            )));
        }
        let step = svd
            .solve(&rhs, 1e-14 * svd.singular_values.max())
            .map_err(|e| Error::NoContraction(e.to_string()))?;
        let mut scale = 1.0;
        loop {
            let trial: Vec<Point> = (0..n)
                .map(|k| dom.wrap(&(xs[k] + scale * Point::new(step[2 * k], step[2 * k + 1]))))
                .collect();
            let tf = defects(map, &trial, closed)?;
            let tr = sup_norm(&tf);
            if tr < res || tr <= cfg.tol {
                xs = trial;
                f = tf;
                res = tr;
                break;
            }
            scale *= 0.5;
            if scale < 1e-3 {
                return Err(Error::NoContraction(format!("Newton step does not reduce defect {res:.3e}")));
            }
        }
    }
    let distance = xs.iter().zip(path).map(|(x, p)| dom.distance(x, p)).fold(0.0, f64::max);
    Ok(Shadowing { point: xs[0], orbit: xs, distance, residual: res, iterations, sigma_min })
}

/// A connecting orbit `t` from saddle `from` to saddle `to`:
/// `f^{−n}(t)` approaches `f^{−n}(x_from)` and `f^n(t)` approaches
/// `f^{n+offset}(x_to)`, with `x_i` the first point of orbit `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: usize,
    pub to: usize,
    pub point: Point,
    pub offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeConfig {
    /// Window half-length `m`.
    pub m: usize,
    pub epsilon: f64,
    /// Number of random coded paths to shadow.
    pub samples: usize,
    /// Length of each random path; the recorded point is the middle one.
    pub sample_len: usize,
    pub seed: u64,
    /// Cone half-angle for the certificate.
    pub cone_alpha: f64,
    pub shadow: ShadowConfig,
}

impl Default for HorseshoeConfig {
    fn default() -> Self {
        Self {
            m: 4,
            epsilon: 0.05,
            samples: 200,
            sample_len: 40,
            seed: 0,
            cone_alpha: 0.1,
            shadow: ShadowConfig::default(),
        }
    }
}

/// A path of the transition graph together with the orbit shadowing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodedSample {
    pub path: Vec<usize>,
    pub closed: bool,
    /// Index into `path` (and `orbit`) of the recorded point.
    pub center: usize,
    pub point: Point,
    pub orbit: Vec<Point>,
    pub distance: f64,
    pub residual: f64,
}

/// Constants of uniform hyperbolicity on the sampled points: in the adapted
/// max-norm, vectors in the unstable cone grow and vectors in the stable cone
/// shrink by at least `e^κ` per step, and the adapted norm is within a factor
/// `c` of the Euclidean one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub c: f64,
    pub kappa: f64,
    pub alpha: f64,
    /// Worst ratio `(image cone slope)/(cone slope)`; below 1 means strict
    /// invariance.
    pub cone_contraction: f64,
    /// Smallest angle between the stable and unstable directions.
    pub min_splitting_angle: f64,
    pub points_checked: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Horseshoe {
    pub graph: PseudoOrbitGraph,
    pub m: usize,
    /// Shadowing radius `C·ε/(1 − e^{−κ})`.
    pub delta: f64,
    pub entropy: f64,
    pub samples: Vec<CodedSample>,
    pub certificate: Option<ConeCertificate>,
    /// For every input saddle, the vertex indices of its orbit.
    pub saddle_vertices: Vec<Vec<usize>>,
}

impl Horseshoe {
    pub fn coded_points(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.point).collect()
    }

    pub fn certificate_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "epsilon": self.graph.epsilon,
            "m": self.m,
            "delta": self.delta,
            "entropy": self.entropy,
            "vertices": self.graph.len(),
            "edges": self.graph.graph.edge_count(),
            "certificate": self.certificate,
        }))
        .expect("serializable")
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("path,x,y,distance,residual\n");
        for s in &self.samples {
            let path: Vec<String> = s.path.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.6e},{:.6e}",
                path.join("-"),
                s.point[0],
                s.point[1],
                s.distance,
                s.residual
            );
        }
        out
    }
}

/// Iterates `f^k(t)` for `k` in `lo..hi`.
fn window(map: &SmoothMap2D, t: &Point, lo: i64, hi: i64) -> Result<Vec<Point>> {
    let back = map.iterate(t, lo.min(0))?;
    let fwd = map.iterate(t, (hi - 1).max(0))?;
    let mut pts = back.points;
    pts.extend(fwd.points.iter().skip(1).copied());
    // pts[i] = f^{lo.min(0) + i}(t)
    let base = lo.min(0);
    Ok(((lo - base) as usize..(hi - base) as usize).map(|i| pts[i]).collect())
}

fn orbit_point(o: &PeriodicOrbit, k: i64) -> Point {
    o.points[k.rem_euclid(o.period as i64) as usize]
}

/// The largest endpoint mismatch of the connection windows at half-length
/// `m`; the construction needs it below `ε/2`.
pub fn endpoint_mismatch(
    map: &SmoothMap2D,
    saddles: &[PeriodicOrbit],
    connections: &[Connection],
    m: usize,
) -> Result<f64> {
    let dom = map.domain();
    let m = m as i64;
    let mut worst: f64 = 0.0;
    for c in connections {
        let a = c.offset as i64;
        let fwd = map.iterate(&c.point, m)?;
        let back = map.iterate(&c.point, -m)?;
        let end = fwd.points.last().expect("non-empty");
        let start = back.points.first().expect("non-empty");
        worst = worst
            .max(dom.distance(end, &orbit_point(&saddles[c.to], m + a)))
            .max(dom.distance(start, &orbit_point(&saddles[c.from], -m)));
    }
    Ok(worst)
}

/// Assembles `L_m`, its ε-graph, random coded samples and the cone
/// certificate.
///
/// Every ordered pair of distinct saddles needs a connection; connections
/// from a saddle to itself (homoclinic orbits) are optional extras.
pub fn build_horseshoe(
    map: &SmoothMap2D,
    saddles: &[PeriodicOrbit],
    connections: &[Connection],
    cfg: &HorseshoeConfig,
) -> Result<Horseshoe> {
    if saddles.is_empty() {
        return Err(Error::InvalidParams("no saddles given".into()));
    }
    for (i, o) in saddles.iter().enumerate() {
        if !o.is_saddle() {
            return Err(Error::NotSaddle);
        }
        for j in 0..saddles.len() {
            if i != j && !connections.iter().any(|c| c.from == i && c.to == j) {
                return Err(Error::NoHomoclinicConnection { from: i, to: j });
            }
        }
    }
    if let Some(c) = connections.iter().find(|c| c.from >= saddles.len() || c.to >= saddles.len()) {
        return Err(Error::InvalidParams(format!("connection {}→{} names a missing saddle", c.from, c.to)));
    }
    let mismatch = endpoint_mismatch(map, saddles, connections, cfg.m)?;
    if mismatch >= cfg.epsilon / 2.0 {
        return Err(Error::WindowTooSmall { mismatch, bound: cfg.epsilon / 2.0 });
    }

    let mut points = Vec::new();
    let mut prov = Vec::new();
    for (s, o) in saddles.iter().enumerate() {
        for (k, p) in o.points.iter().enumerate() {
            points.push(*p);
            prov.push(Some(Provenance { segment: s, iterate: k as i64 }));
        }
    }
    let m = cfg.m as i64;
    for (ci, c) in connections.iter().enumerate() {
        let hi = m + c.offset as i64;
        for (i, p) in window(map, &c.point, -m, hi)?.into_iter().enumerate() {
            points.push(p);
            prov.push(Some(Provenance { segment: saddles.len() + ci, iterate: i as i64 - m }));
        }
    }
    let graph = graph_with_provenance(map, &points, &prov, cfg.epsilon);
    let comps = scc_decompose(&graph.graph);
    if graph.is_empty() || comps.len() != 1 || comps[0].vertices.len() != graph.len() {
        return Err(Error::Reducible);
    }
    let dom = map.domain();
    let saddle_vertices: Vec<Vec<usize>> = saddles
        .iter()
        .map(|o| {
            o.points
                .iter()
                .filter_map(|p| graph.vertices.iter().position(|v| dom.distance(v, p) <= VERTEX_MERGE_TOLERANCE))
                .collect()
        })
        .collect();
    if let Some(i) = saddle_vertices.iter().zip(saddles).position(|(v, o)| v.len() != o.period) {
        return Err(Error::NotHyperbolic(format!("saddle {i} lost its cycle in the ε-graph")));
    }
    assemble_horseshoe(map, graph, saddle_vertices, cfg)
}

/// A horseshoe coded by a prescribed transition graph on `vertices`, for
/// systems whose Markov partition is known in advance (the two-branch
/// horseshoe with its two fixed points and the complete graph, say).
///
/// Every edge `u → v` is a jump from `f(vertices[u])` to `vertices[v]`; the
/// graph's ε is the largest such jump. Vertices fixed by `f` with a self-loop
/// serve as the saddle cycles.
pub fn symbolic_horseshoe(
    map: &SmoothMap2D,
    vertices: Vec<Point>,
    graph: MarkovGraph,
    cfg: &HorseshoeConfig,
) -> Result<Horseshoe> {
    if vertices.is_empty() || vertices.len() != graph.len() {
        return Err(Error::InvalidParams(format!(
            "{} vertices for a graph on {} states",
            vertices.len(),
            graph.len()
        )));
    }
    let comps = scc_decompose(&graph);
    if comps.len() != 1 || comps[0].vertices.len() != graph.len() {
        return Err(Error::Reducible);
    }
    let dom = map.domain();
    let epsilon = graph
        .edges()
        .map(|(u, v)| dom.distance(&map.forward(&vertices[u]), &vertices[v]))
        .fold(0.0, f64::max);
    let saddle_vertices: Vec<Vec<usize>> = (0..graph.len())
        .filter(|&v| graph.has_edge(v, v) && dom.distance(&map.forward(&vertices[v]), &vertices[v]) <= VERTEX_MERGE_TOLERANCE)
        .map(|v| vec![v])
        .collect();
    let n = graph.len();
    let min_spacing = min_spacing(dom, &vertices);
    let pog = PseudoOrbitGraph {
        vertices,
        epsilon,
        graph,
        provenance: vec![None; n],
        min_spacing,
        pruned: Vec::new(),
    };
    assemble_horseshoe(map, pog, saddle_vertices, &HorseshoeConfig { m: 0, epsilon, ..*cfg })
}

fn min_spacing(dom: &Domain, vertices: &[Point]) -> f64 {
    (0..vertices.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..vertices.len())
                .map(|j| dom.distance(&vertices[i], &vertices[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Random coded samples, graph entropy and the cone certificate for an
/// irreducible transition graph.
fn assemble_horseshoe(
    map: &SmoothMap2D,
    graph: PseudoOrbitGraph,
    saddle_vertices: Vec<Vec<usize>>,
    cfg: &HorseshoeConfig,
) -> Result<Horseshoe> {
    let entropy = gurevich_entropy(&graph.graph, &PerronConfig::default())?.value;

    let mut paths: Vec<(Vec<usize>, bool)> = saddle_vertices.iter().map(|v| (v.clone(), true)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let len = cfg.sample_len.clamp(1, MAX_WINDOW);
    for _ in 0..cfg.samples {
        let mut v = rng.gen_range(0..graph.len());
        let mut path = vec![v];
        while path.len() < len {
            let s = graph.graph.successors(v);
            v = s[rng.gen_range(0..s.len())];
            path.push(v);
        }
        paths.push((path, false));
    }
    let samples: Vec<CodedSample> = paths
        .into_par_iter()
        .map(|(path, closed)| {
            let pts: Vec<Point> = path.iter().map(|&v| graph.vertices[v]).collect();
            let sh = shadow(map, &pts, closed, &cfg.shadow)?;
            let center = if closed { 0 } else { path.len() / 2 };
            Ok(CodedSample {
                point: sh.orbit[center],
                path,
                closed,
                center,
                orbit: sh.orbit,
                distance: sh.distance,
                residual: sh.residual,
            })
        })
        .collect::<Result<_>>()?;

    let mut hs = Horseshoe {
        graph,
        m: cfg.m,
        delta: f64::INFINITY,
        entropy,
        samples,
        certificate: None,
        saddle_vertices,
    };
    let cert = verify_cone_hyperbolicity(map, &hs, cfg.cone_alpha).map_err(|e| Error::NotHyperbolic(e.to_string()))?;
    hs.delta = cert.c * cfg.epsilon / (1.0 - (-cert.kappa).exp());
    hs.certificate = Some(cert);
    if let Some(s) = hs.samples.iter().find(|s| s.distance > hs.delta) {
        return Err(Error::NotHyperbolic(format!(
            "shadowing distance {:.3e} exceeds δ = {:.3e}",
            s.distance, hs.delta
        )));
    }
    Ok(hs)
}

/// Unit vectors along `Df` pushed forward (`forward = true`) from the window
/// start or pulled back from its end, starting from `seed`.
fn propagate(map: &SmoothMap2D, orbit: &[Point], forward: bool, seed: Point) -> Vec<Point> {
    let n = orbit.len();
    let mut out = vec![Point::zeros(); n];
    let mut v = seed.normalize();
    if forward {
        out[0] = v;
        for k in 0..n - 1 {
            v = map.jacobian(&orbit[k]) * v;
            v /= v.norm();
            out[k + 1] = v;
        }
    } else {
        out[n - 1] = v;
        for k in (0..n - 1).rev() {
            v = map.jacobian(&orbit[k]).try_inverse().expect("invertible Jacobian") * v;
            v /= v.norm();
            out[k] = v;
        }
    }
    out
}

fn line_gap(a: &Point, b: &Point) -> f64 {
    crate::linalg::cross(a, b).abs().min(1.0).asin()
}

/// Cone check along one orbit window. Returns `(c, κ, slope ratio, angle)`
/// over the interior points, or the offending point.
fn cone_window(map: &SmoothMap2D, orbit: &[Point], lo: usize, hi: usize, alpha: f64) -> Result<(f64, f64, f64, f64)> {
    let seeds = [Point::new(0.6, 0.8), Point::new(-0.8, 0.6)];
    let eu = propagate(map, orbit, true, seeds[0]);
    let es = propagate(map, orbit, false, seeds[0]);
    let eu2 = propagate(map, orbit, true, seeds[1]);
    let es2 = propagate(map, orbit, false, seeds[1]);
    let t = alpha.tan();
    let mut c: f64 = 0.0;
    let mut kappa = f64::INFINITY;
    let mut ratio: f64 = 0.0;
    let mut angle = f64::INFINITY;
    let violation = |p: &Point, reason: String| Error::ConeViolation { point: [p[0], p[1]], reason };
    for k in lo..hi {
        let b0 = Mat2::from_columns(&[eu[k], es[k]]);
        let b1 = Mat2::from_columns(&[eu[k + 1], es[k + 1]]);
        let sin = b0.determinant().abs();
        angle = angle.min(sin.asin());
        for (a, b, name) in [(&eu, &eu2, "unstable"), (&es, &es2, "stable")] {
            let gap = line_gap(&a[k], &b[k]).max(line_gap(&a[k + 1], &b[k + 1]));
            if gap > 0.1 * alpha {
                return Err(violation(&orbit[k], format!("{name} direction has not settled (spread {gap:.3e})")));
            }
        }
        let Some(b1i) = b1.try_inverse() else {
            return Err(violation(&orbit[k], "stable and unstable directions coincide".into()));
        };
        if sin < 1e-6 {
            return Err(violation(&orbit[k], format!("splitting angle {:.3e} is degenerate", sin.asin())));
        }
        c = c.max(2.0 / sin).max(2.0 / b1.determinant().abs());
        // Df in adapted coordinates: columns are images of e_u, e_s.
        let a = b1i * map.jacobian(&orbit[k]) * b0;
        let ainv = a.try_inverse().expect("invertible");
        for (mat, name) in [(a, "unstable"), (ainv, "stable")] {
            // For f⁻¹ the roles of the two coordinates swap.
            let (i, j) = if name == "unstable" { (0, 1) } else { (1, 0) };
            for s in [-t, t] {
                let lead = mat[(i, i)] + mat[(i, j)] * s;
                let side = mat[(j, i)] + mat[(j, j)] * s;
                if lead.abs() <= 1.0 {
                    return Err(violation(
                        &orbit[k],
                        format!("{name} cone vector not expanded (factor {:.4})", lead.abs()),
                    ));
                }
                let slope = (side / lead).abs();
                if slope >= t {
                    return Err(violation(&orbit[k], format!("{name} cone not mapped inside itself")));
                }
                ratio = ratio.max(slope / t);
                kappa = kappa.min(lead.abs().ln());
            }
        }
    }
    Ok((c, kappa, ratio, angle))
}

/// Checks the α-cone conditions at every sampled coded point and returns the
/// worst constants.
///
/// Stable and unstable directions along a sample's orbit are obtained by
/// pulling generic vectors back from the window's end and pushing them
/// forward from its start; the first and last `burn` points of open windows,
/// where those directions have not settled, are skipped. Closed samples are
/// unrolled three times and the middle copy is checked.
pub fn verify_cone_hyperbolicity(map: &SmoothMap2D, horseshoe: &Horseshoe, alpha: f64) -> Result<ConeCertificate> {
    certify_orbits(map, horseshoe.samples.iter().map(|s| (s.orbit.as_slice(), s.closed)), alpha)
}

/// [`verify_cone_hyperbolicity`] on bare orbit windows.
pub fn certify_orbits<'a>(
    map: &SmoothMap2D,
    orbits: impl Iterator<Item = (&'a [Point], bool)>,
    alpha: f64,
) -> Result<ConeCertificate> {
    if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParams(format!("cone half-angle {alpha} outside (0, π/2)")));
    }
    let windows: Vec<(Vec<Point>, usize, usize)> = orbits
        .map(|(o, closed)| {
            let n = o.len();
            if closed {
                let reps = (60 / n).max(1) + 2;
                let unrolled: Vec<Point> = (0..reps * n).map(|k| o[k % n]).collect();
                let lo = (reps / 2) * n;
                (unrolled, lo, lo + n)
            } else {
                let burn = (n / 3).min(20);
                (o.to_vec(), burn, n.saturating_sub(burn + 1))
            }
        })
        .filter(|(_, lo, hi)| hi > lo)
        .collect();
    if windows.is_empty() {
        return Err(Error::InvalidParams("no orbit window long enough to certify".into()));
    }
    let results = windows
        .par_iter()
        .map(|(o, lo, hi)| cone_window(map, o, *lo, *hi, alpha).map(|r| (r, hi - lo)))
        .collect::<Result<Vec<_>>>()?;
    let mut cert = ConeCertificate {
        c: 0.0,
        kappa: f64::INFINITY,
        alpha,
        cone_contraction: 0.0,
        min_splitting_angle: f64::INFINITY,
        points_checked: 0,
    };
    for ((c, kappa, ratio, angle), n) in results {
        cert.c = cert.c.max(c);
        cert.kappa = cert.kappa.min(kappa);
        cert.cone_contraction = cert.cone_contraction.max(ratio);
        cert.min_splitting_angle = cert.min_splitting_angle.min(angle);
        cert.points_checked += n;
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::models::*;
    use crate::orbits::find_periodic;

    #[test]
    fn single_cycle_graph() {
        let f = cat_map();
        let orbit = &find_periodic(&f, 3, 16).unwrap()[0];
        let g = pseudo_orbit_graph(&f, &orbit.points, 1e-3);
        assert_eq!(g.len(), 3);
        assert_eq!(g.graph.edge_count(), 3);
        assert!(g.edges_match_predicate(&f));
        let comps = scc_decompose(&g.graph);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].period, 3);
    }

    #[test]
    fn large_epsilon_gives_complete_graph() {
        let f = cat_map();
        let pts = [Point::new(0.1, 0.2), Point::new(0.5, 0.7), Point::new(0.9, 0.3)];
        let g = pseudo_orbit_graph(&f, &pts, 2.0);
        assert_eq!(g.graph.edge_count(), 9);
    }

    #[test]
    fn isolated_vertices_are_pruned() {
        let f = cat_map();
        let pts = [Point::new(0.0, 0.0), Point::new(0.3, 0.61)];
        let g = pseudo_orbit_graph(&f, &pts, 1e-3);
        assert_eq!(g.len(), 1);
        assert_eq!(g.pruned.len(), 1);
    }

    #[test]
    fn exact_orbit_shadows_itself() {
        let f = classic_henon();
        let seg = f.iterate(&Point::new(0.1, 0.1), 30).unwrap();
        let sh = shadow(&f, &seg.points[10..], false, &ShadowConfig::default()).unwrap();
        assert_eq!(sh.iterations, 0);
        assert_eq!(sh.distance, 0.0);
    }

    #[test]
    fn cat_map_linear_shadowing_is_exact() {
        let f = cat_map();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-3;
        let mut path = vec![Point::new(0.2, 0.3)];
        for _ in 0..40 {
            let next = f.forward(path.last().unwrap());
            path.push(f.domain().wrap(&(next + Point::new(rng.gen_range(-eps..eps), rng.gen_range(-eps..eps)))));
        }
        let sh = shadow(&f, &path, false, &ShadowConfig::default()).unwrap();
        assert!(sh.iterations <= 2, "linear problem took {} steps", sh.iterations);
        assert!(sh.residual < 1e-12);
        // Each jump is at most √2·ε; the geometric series over both
        // eigendirections bounds the shadowing distance.
        let lambda: f64 = (3.0 + 5f64.sqrt()) / 2.0;
        let bound = 2f64.sqrt() * eps * (1.0 + 1.0 / (lambda - 1.0));
        assert!(sh.distance <= bound, "{} > {}", sh.distance, bound);
    }

    #[test]
    fn identity_fails_to_contract() {
        let f = identity();
        let path: Vec<Point> = (0..100).map(|k| Point::new(0.01 * k as f64, 0.0)).collect();
        let err = shadow(&f, &path, false, &ShadowConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoContraction(_)));
        let err = shadow(&f, &path[..5], true, &ShadowConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoContraction(_)));
    }

    #[test]
    fn window_limit_is_enforced() {
        let f = cat_map();
        let path = vec![Point::new(0.0, 0.0); MAX_WINDOW + 1];
        assert!(matches!(shadow(&f, &path, true, &ShadowConfig::default()), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn unrelated_saddles_have_no_connection() {
        let f = two_piece_swap();
        let mut orbits = find_periodic(&f, 2, 8).unwrap();
        orbits.truncate(2);
        let err = build_horseshoe(&f, &orbits, &[], &HorseshoeConfig::default()).unwrap_err();
        assert_eq!(err, Error::NoHomoclinicConnection { from: 0, to: 1 });
    }

    #[test]
    fn affine_cone_rate_is_exact() {
        let f = affine_horseshoe(1.0 / 3.0, 3.0);
        let a = Point::new(0.0, 0.0);
        let b = Point::new(1.0, 1.0);
        let code = [0, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0];
        let path: Vec<Point> = code.iter().map(|&c| if c == 0 { a } else { b }).collect();
        let sh = shadow(&f, &path, true, &ShadowConfig::default()).unwrap();
        let cert = certify_orbits(&f, std::iter::once((sh.orbit.as_slice(), true)), 0.1).unwrap();
        assert!((cert.kappa - 3f64.ln()).abs() < 1e-12, "κ = {}", cert.kappa);
    }

    #[test]
    fn shear_violates_cones() {
        let f = linear([[1.0, 1.0], [0.0, 1.0]]);
        let orbit = f.iterate(&Point::new(0.1, 0.1), 40).unwrap().points;
        let err = certify_orbits(&f, std::iter::once((orbit.as_slice(), false)), 0.1).unwrap_err();
        assert!(matches!(err, Error::ConeViolation { .. }), "{err:?}");
    }
}
