//! Stable and unstable laminations of horseshoes, holonomy maps between
//! transversals, box-counting transverse dimension, and the tangency set of a
//! curve with a lamination.
//!
//! Dynamical leaves are grown by the graph transform: the leaf of `x` is the
//! image under `f^n` (unstable) or `f^{-n}` (stable) of a short segment
//! through `f^{∓n}(x)`. Crossings with transversals are refined on that
//! segment's parameter, so crossing positions carry no polyline error.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::hash_map::Entry;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Domain, Mat2, Point, SmoothMap2D};
use crate::entropy::topological_entropy;
use crate::error::{Error, Result};
use crate::linalg::{cross, linear_fit, LinearFit};
use crate::manifolds::ManifoldKind;
use crate::shadowing::Horseshoe;
use crate::svg::Svg;

/// Points per grown leaf polyline.
pub const LEAF_SAMPLES: usize = 65;
/// Leaves are grown for `⌈LEAF_GROWTH / κ⌉` iterates, which brings a generic
/// segment within about `e^{-2·LEAF_GROWTH}` of the leaf direction.
pub const LEAF_GROWTH: f64 = 14.0;
/// Fewest crossings [`transverse_dimension`] accepts.
pub const MIN_CROSSINGS: usize = 1000;
pub const DEFAULT_TANGENCY_TOL: f64 = 1e-3;
/// Crossings closer than this on a transversal are taken to be one leaf;
/// it sits well above the crossing accuracy of about `1e-13`.
pub const SAME_LEAF: f64 = 1e-9;
/// Largest relative change of the finest two holonomy levels that counts as
/// converged.
pub const REFINEMENT_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Generator {
    start: Point,
    dir: Point,
    steps: usize,
    forward: bool,
}

/// One local leaf: a polyline through its base point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub base: Point,
    /// Polyline in plane coordinates, free of wrap-around jumps.
    pub points: Vec<Point>,
    /// Generating parameter of every polyline point; arclength for
    /// synthetic leaves.
    pub params: Vec<f64>,
    /// Number of sampled base points this leaf stands for.
    pub weight: usize,
    generator: Option<Generator>,
}

impl Leaf {
    /// A straight synthetic leaf from `a` to `b`.
    pub fn segment(a: Point, b: Point) -> Self {
        Self { base: (a + b) / 2.0, points: vec![a, b], params: vec![0.0, (b - a).norm()], weight: 1, generator: None }
    }

    /// A synthetic leaf along the polyline `points`, based at its first point.
    pub fn polyline(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParams("a leaf needs at least two points".into()));
        }
        let mut params = vec![0.0];
        for w in points.windows(2) {
            params.push(params.last().expect("non-empty") + (w[1] - w[0]).norm());
        }
        Ok(Self { base: points[0], points, params, weight: 1, generator: None })
    }

    /// Unit tangent of the segment closest to the base point.
    pub fn tangent(&self) -> Point {
        let k = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - self.base).norm().total_cmp(&(b.1 - self.base).norm()))
            .map_or(0, |(k, _)| k)
            .min(self.points.len() - 2);
        (self.points[k + 1] - self.points[k]).normalize()
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// The leaf point at parameter `s` inside segment `k`, unwrapped next to
    /// the segment's start.
    fn eval(&self, map: Option<&SmoothMap2D>, k: usize, s: f64) -> Point {
        match (&self.generator, map) {
            (Some(g), Some(map)) => {
                let mut p = g.start + s * g.dir;
                for _ in 0..g.steps {
                    p = if g.forward { map.forward(&p) } else { map.inverse(&p) };
                }
                let near = self.points[k];
                let dom = map.domain();
                near + dom.displacement(&dom.wrap(&near), &p).unwrap_or(p - near)
            }
            _ => {
                let (s0, s1) = (self.params[k], self.params[k + 1]);
                let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
                self.points[k] + w * (self.points[k + 1] - self.points[k])
            }
        }
    }
}

/// A finite family of local leaves.
#[derive(Clone, Debug)]
pub struct Lamination {
    pub kind: ManifoldKind,
    /// Half-length of the leaves.
    pub radius: f64,
    pub leaves: Vec<Leaf>,
    /// Iterates each dynamical leaf was grown for; 0 for synthetic families.
    pub growth_steps: usize,
    domain: Domain,
    map: Option<SmoothMap2D>,
}

impl Lamination {
    /// A lamination made of given leaves in the plane, for model families.
    pub fn synthetic(kind: ManifoldKind, leaves: Vec<Leaf>) -> Self {
        let radius = leaves.iter().map(|l| l.length() / 2.0).fold(0.0, f64::max);
        Self {
            kind,
            radius,
            leaves,
            growth_steps: 0,
            domain: Domain::Plane { lo: [f64::NEG_INFINITY; 2], hi: [f64::INFINITY; 2] },
            map: None,
        }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Largest angle between the tangents of two leaves whose base points are
    /// closer than `dist`, over at most `limit` leaves.
    pub fn tangent_oscillation(&self, dist: f64, limit: usize) -> f64 {
        let n = self.leaves.len().min(limit);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let ti = self.leaves[i].tangent();
                (i + 1..n)
                    .filter(|&j| self.domain.distance(&self.leaves[i].base, &self.leaves[j].base) < dist)
                    .map(|j| cross(&ti, &self.leaves[j].tangent()).abs().min(1.0).asin())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Leaves drawn over the given transversals, with optional marked points.
    pub fn to_svg(&self, transversals: &[&Transversal], marks: &[Point]) -> String {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let all = self.leaves.iter().flat_map(|l| l.points.iter()).chain(transversals.iter().flat_map(|t| t.points.iter()));
        for p in all {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let mut svg = Svg::new(lo, hi, 640.0, 640.0);
        let color = if self.kind == ManifoldKind::Stable { "#1f77b4" } else { "#d62728" };
        for l in self.leaves.iter().take(4000) {
            let pts: Vec<[f64; 2]> = l.points.iter().map(|p| [p[0], p[1]]).collect();
            svg.polyline(&pts, color, 0.4);
        }
        for t in transversals {
            let pts: Vec<[f64; 2]> = t.points.iter().map(|p| [p[0], p[1]]).collect();
            svg.polyline(&pts, "black", 1.2);
        }
        for m in marks {
            svg.circle([m[0], m[1]], 2.0, "#2ca02c");
        }
        svg.finish()
    }
}

/// Df^{±n} along the orbit of `x`.
fn growth_matrix(map: &SmoothMap2D, x: &Point, steps: usize, forward: bool) -> Mat2 {
    let mut m = Mat2::identity();
    let mut cur = *x;
    for _ in 0..steps {
        if forward {
            m = map.jacobian(&cur) * m;
            cur = map.forward(&cur);
        } else {
            let pre = map.inverse(&cur);
            m = map.jacobian(&pre).try_inverse().expect("invertible Jacobian") * m;
            cur = pre;
        }
    }
    m
}

/// The local leaf of `x` of half-length about `radius`, grown for `steps`
/// iterates. `None` when fewer than three points survive the jump filter.
pub fn grow_leaf(map: &SmoothMap2D, x: &Point, kind: ManifoldKind, radius: f64, steps: usize) -> Option<Leaf> {
    let dom = map.domain();
    let forward = kind == ManifoldKind::Unstable;
    let mut start = *x;
    for _ in 0..steps {
        start = if forward { map.inverse(&start) } else { map.forward(&start) };
    }
    let m = growth_matrix(map, &start, steps, forward);
    let seeds = [Point::new(0.6, 0.8), Point::new(-0.8, 0.6)];
    let dir = if (m * seeds[0]).norm() >= (m * seeds[1]).norm() { seeds[0] } else { seeds[1] };
    let half = radius / (m * dir).norm();
    let gen = Generator { start, dir, steps, forward };
    let n = LEAF_SAMPLES;
    let c = n / 2;
    let params: Vec<f64> = (0..n).map(|i| half * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect();
    let raw: Vec<Point> = params
        .iter()
        .map(|&s| {
            let mut p = start + s * dir;
            for _ in 0..steps {
                p = if forward { map.forward(&p) } else { map.inverse(&p) };
            }
            p
        })
        .collect();
    let jump = |a: &Point, b: &Point| dom.displacement(a, b).filter(|d| d.norm() <= radius && d.norm().is_finite());
    let mut pts = vec![Point::zeros(); n];
    pts[c] = *x;
    let mut hi = c;
    while hi + 1 < n {
        let Some(d) = jump(&raw[hi], &raw[hi + 1]) else { break };
        pts[hi + 1] = pts[hi] + d;
        hi += 1;
    }
    let mut lo = c;
    while lo > 0 {
        let Some(d) = jump(&raw[lo], &raw[lo - 1]) else { break };
        pts[lo - 1] = pts[lo] + d;
        lo -= 1;
    }
    if hi - lo < 2 {
        return None;
    }
    Some(Leaf {
        base: *x,
        points: pts[lo..=hi].to_vec(),
        params: params[lo..=hi].to_vec(),
        weight: 1,
        generator: Some(gen),
    })
}

/// Iterates needed to grow leaves of a horseshoe with expansion rate `kappa`.
pub fn growth_steps(kappa: f64) -> usize {
    ((LEAF_GROWTH / kappa.max(1e-3)).ceil() as usize).clamp(4, 60)
}

/// Distinct interior points of the horseshoe's coded orbits: all points of
/// closed samples, and the points of open samples at least `⌈13.8/κ⌉`
/// iterates from either end, which lie within about `1e-6` of the coded set.
pub fn coded_interior_points(hs: &Horseshoe) -> Result<Vec<Point>> {
    Ok(coded_interior(hs)?.into_iter().map(|(p, _)| p).collect())
}

/// [`coded_interior_points`] with the number of times each was sampled.
pub fn coded_interior(hs: &Horseshoe) -> Result<Vec<(Point, usize)>> {
    let cert = hs
        .certificate
        .as_ref()
        .ok_or_else(|| Error::NotHyperbolic("horseshoe carries no cone certificate".into()))?;
    let burn = (1e6f64.ln() / cert.kappa.max(1e-3)).ceil() as usize;
    let mut seen: FxHashMap<(i64, i64), usize> = FxHashMap::default();
    let mut out: Vec<(Point, usize)> = Vec::new();
    for s in &hs.samples {
        let n = s.orbit.len();
        let range = if s.closed {
            0..n
        } else {
            let b = burn.min(n.saturating_sub(1) / 2);
            b..n - b
        };
        for p in &s.orbit[range] {
            let key = ((p[0] * 1e11).round() as i64, (p[1] * 1e11).round() as i64);
            match seen.entry(key) {
                Entry::Occupied(e) => out[*e.get()].1 += 1,
                Entry::Vacant(e) => {
                    e.insert(out.len());
                    out.push((*p, 1));
                }
            }
        }
    }
    Ok(out)
}

fn grow_lamination(map: &SmoothMap2D, hs: &Horseshoe, kind: ManifoldKind, radius: f64) -> Result<Lamination> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParams(format!("leaf radius {radius} must be positive")));
    }
    let bases = coded_interior(hs)?;
    let kappa = hs.certificate.as_ref().expect("checked above").kappa;
    let steps = growth_steps(kappa);
    let leaves: Vec<Leaf> = bases
        .par_iter()
        .filter_map(|(x, w)| grow_leaf(map, x, kind, radius, steps).map(|l| Leaf { weight: *w, ..l }))
        .collect();
    Ok(Lamination { kind, radius, leaves, growth_steps: steps, domain: *map.domain(), map: Some(map.clone()) })
}

/// Local stable leaves through the coded points of a certified horseshoe.
pub fn stable_lamination(map: &SmoothMap2D, hs: &Horseshoe, radius: f64) -> Result<Lamination> {
    grow_lamination(map, hs, ManifoldKind::Stable, radius)
}

/// Local unstable leaves through the coded points of a certified horseshoe.
pub fn unstable_lamination(map: &SmoothMap2D, hs: &Horseshoe, radius: f64) -> Result<Lamination> {
    grow_lamination(map, hs, ManifoldKind::Unstable, radius)
}

/// A polyline transversal, parametrized by arclength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversal {
    pub points: Vec<Point>,
    arclength: Vec<f64>,
}

impl Transversal {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParams("a transversal needs at least two points".into()));
        }
        let mut arclength = vec![0.0];
        for w in points.windows(2) {
            arclength.push(arclength.last().expect("non-empty") + (w[1] - w[0]).norm());
        }
        if *arclength.last().expect("non-empty") <= 0.0 {
            return Err(Error::InvalidParams("degenerate transversal".into()));
        }
        Ok(Self { points, arclength })
    }

    pub fn segment(a: Point, b: Point) -> Self {
        Self::new(vec![a, b]).expect("distinct endpoints")
    }

    pub fn from_leaf(leaf: &Leaf) -> Self {
        Self::new(leaf.points.clone()).expect("leaf polylines have positive length")
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().expect("non-empty")
    }

    fn midpoint(&self) -> Point {
        let half = self.length() / 2.0;
        let k = self.arclength.iter().position(|&a| a >= half).unwrap_or(1).max(1);
        let (a0, a1) = (self.arclength[k - 1], self.arclength[k]);
        let w = if a1 > a0 { (half - a0) / (a1 - a0) } else { 0.0 };
        self.points[k - 1] + w * (self.points[k] - self.points[k - 1])
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        bbox(&self.points)
    }
}

fn bbox(points: &[Point]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn boxes_overlap(a: &([f64; 2], [f64; 2]), b: &([f64; 2], [f64; 2]), pad: f64) -> bool {
    (0..2).all(|k| a.0[k] <= b.1[k] + pad && b.0[k] <= a.1[k] + pad)
}

/// Where leaf `leaf` meets a transversal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub leaf: usize,
    /// Arclength position on the transversal.
    pub t: f64,
    pub point: Point,
    /// Angle between leaf and transversal, in `[0, π/2]`.
    pub angle: f64,
}

/// Parameters `(u, w)` in `[0,1]²` with `a + u(b−a) = c + w(d−c)`.
fn segment_intersection(a: &Point, b: &Point, c: &Point, d: &Point) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let den = cross(&r, &s);
    if den == 0.0 {
        return None;
    }
    let q = c - a;
    let u = cross(&q, &s) / den;
    let w = cross(&q, &r) / den;
    ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&w)).then_some((u, w))
}

/// The crossing of one leaf with `tau` nearest to the leaf's base.
fn leaf_crossing(lam: &Lamination, index: usize, tau: &Transversal, tau_box: &([f64; 2], [f64; 2])) -> Option<Crossing> {
    let leaf = &lam.leaves[index];
    let shift = if lam.domain.is_periodic() {
        let mid = tau.midpoint();
        lam.domain.displacement(&mid, &leaf.base).map_or(Point::zeros(), |d| mid + d - leaf.base)
    } else {
        Point::zeros()
    };
    let pts: Vec<Point> = leaf.points.iter().map(|p| p + shift).collect();
    if !boxes_overlap(&bbox(&pts), tau_box, 0.0) {
        return None;
    }
    let base = leaf.base + shift;
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for i in 0..pts.len() - 1 {
        let seg_box = bbox(&pts[i..=i + 1]);
        if !boxes_overlap(&seg_box, tau_box, 0.0) {
            continue;
        }
        for j in 0..tau.points.len() - 1 {
            if let Some((u, _)) = segment_intersection(&pts[i], &pts[i + 1], &tau.points[j], &tau.points[j + 1]) {
                let p = pts[i] + u * (pts[i + 1] - pts[i]);
                let d = (p - base).norm();
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, i, j, u));
                }
            }
        }
    }
    let (_, i, j, u) = best?;
    let a = tau.points[j];
    let dt = (tau.points[j + 1] - a).normalize();
    let side = |p: &Point| cross(&dt, &(p - a));
    let point = if leaf.generator.is_some() {
        let map = lam.map.as_ref();
        let (mut s0, mut s1) = (leaf.params[i], leaf.params[i + 1]);
        let mut f0 = side(&pts[i]);
        let mut mid = pts[i] + u * (pts[i + 1] - pts[i]);
        for _ in 0..80 {
            let sm = 0.5 * (s0 + s1);
            if sm <= s0 || sm >= s1 {
                break;
            }
            mid = leaf.eval(map, i, sm) + shift;
            let fm = side(&mid);
            if fm == 0.0 {
                break;
            }
            if (fm > 0.0) == (f0 > 0.0) {
                s0 = sm;
                f0 = fm;
            } else {
                s1 = sm;
            }
        }
        mid
    } else {
        pts[i] + u * (pts[i + 1] - pts[i])
    };
    let t = tau.arclength[j] + (point - a).dot(&dt);
    let dl = (pts[i + 1] - pts[i]).normalize();
    let angle = cross(&dl, &dt).abs().min(1.0).asin();
    Some(Crossing { leaf: index, t, point, angle })
}

/// All leaf crossings with `tau`, in leaf order.
pub fn crossings(lam: &Lamination, tau: &Transversal) -> Vec<Crossing> {
    let tau_box = tau.bbox();
    (0..lam.leaves.len()).into_par_iter().filter_map(|i| leaf_crossing(lam, i, tau, &tau_box)).collect()
}

/// Box-counting setup: scales `2^-min_exp … 2^-max_exp`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub min_exp: i32,
    pub max_exp: i32,
    /// Smallest admissible leaf-to-transversal angle.
    pub angle_min: f64,
    pub min_points: usize,
}

impl Default for BoxConfig {
    fn default() -> Self {
        Self { min_exp: 4, max_exp: 12, angle_min: 1e-2, min_points: MIN_CROSSINGS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Regression slope clamped to `[0, 1]`.
    pub value: f64,
    pub slope: f64,
    pub exponents: (i32, i32),
    /// `(scale, occupied boxes)` from coarse to fine.
    pub counts: Vec<(f64, usize)>,
    pub fit: LinearFit,
    /// Sampled positions, with multiplicity.
    pub samples: usize,
    /// Positions more than [`SAME_LEAF`] apart.
    pub distinct: usize,
}

impl DimensionEstimate {
    pub fn table_csv(&self) -> String {
        let mut out = String::from("scale,count\n");
        for (s, n) in &self.counts {
            let _ = writeln!(out, "{s:.6e},{n}");
        }
        out
    }
}

/// Box-counting dimension of a set of positions on a line.
pub fn box_dimension(ts: &[f64], cfg: &BoxConfig) -> Result<DimensionEstimate> {
    box_count(ts, ts.len(), cfg)
}

/// Box counting of `ts` standing for `samples` sampled positions.
fn box_count(ts: &[f64], samples: usize, cfg: &BoxConfig) -> Result<DimensionEstimate> {
    if samples < cfg.min_points.max(1) || ts.is_empty() {
        return Err(Error::TooFewPoints { found: samples, needed: cfg.min_points.max(1) });
    }
    if cfg.max_exp < cfg.min_exp {
        return Err(Error::InvalidParams(format!("scale exponents {}..{}", cfg.min_exp, cfg.max_exp)));
    }
    let t0 = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted: Vec<f64> = ts.iter().map(|t| t - t0).collect();
    sorted.sort_by(f64::total_cmp);
    let distinct = 1 + sorted.windows(2).filter(|w| w[1] - w[0] > SAME_LEAF).count();
    let counts: Vec<(f64, usize)> = (cfg.min_exp..=cfg.max_exp)
        .map(|k| {
            let s = 2f64.powi(-k);
            let mut boxes: Vec<i64> = sorted.iter().map(|t| (t / s).floor() as i64).collect();
            boxes.dedup();
            (s, boxes.len())
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|(s, _)| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(DimensionEstimate {
        value: fit.slope.clamp(0.0, 1.0),
        slope: fit.slope,
        exponents: (cfg.min_exp, cfg.max_exp),
        counts,
        fit,
        samples,
        distinct,
    })
}

/// Box-counting dimension of `τ ∩ supp(lam)` with the default scales.
pub fn transverse_dimension(lam: &Lamination, tau: &Transversal) -> Result<DimensionEstimate> {
    transverse_dimension_with(lam, tau, &BoxConfig::default())
}

pub fn transverse_dimension_with(lam: &Lamination, tau: &Transversal, cfg: &BoxConfig) -> Result<DimensionEstimate> {
    let cs = crossings(lam, tau);
    if let Some(c) = cs.iter().find(|c| c.angle < cfg.angle_min) {
        return Err(Error::NotTransverse(c.angle));
    }
    let ts: Vec<f64> = cs.iter().map(|c| c.t).collect();
    let samples = cs.iter().map(|c| lam.leaves[c.leaf].weight).sum();
    box_count(&ts, samples, cfg)
}

/// The sampled holonomy `τ → τ′` along the leaves meeting both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holonomy {
    /// `(leaf, t, t′)` sorted by `t`, one entry per distinct leaf.
    pub pairs: Vec<(usize, f64, f64)>,
    /// Largest `|Δt′ / Δt|` over consecutive pairs.
    pub lipschitz: f64,
    /// Largest `|Δt / Δt′|`, the estimate for `τ′ → τ`.
    pub inverse_lipschitz: f64,
}

impl Holonomy {
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("leaf,t,t_prime\n");
        for (l, t, u) in &self.pairs {
            let _ = writeln!(out, "{l},{t:.15e},{u:.15e}");
        }
        out
    }
}

fn quotients(pairs: &[(usize, f64, f64)]) -> (f64, f64) {
    let mut lip: f64 = 0.0;
    let mut inv: f64 = 0.0;
    for w in pairs.windows(2) {
        let dt = (w[1].1 - w[0].1).abs();
        let du = (w[1].2 - w[0].2).abs();
        lip = lip.max(du / dt);
        inv = inv.max(if du > 0.0 { dt / du } else { f64::INFINITY });
    }
    (lip, inv)
}

fn holonomy_pairs(lam: &Lamination, tau: &Transversal, tau2: &Transversal, angle_min: f64) -> Result<Vec<(usize, f64, f64)>> {
    let (a, b) = rayon::join(|| crossings(lam, tau), || crossings(lam, tau2));
    if let Some(c) = a.iter().chain(&b).find(|c| c.angle < angle_min) {
        return Err(Error::NotTransverse(c.angle));
    }
    let mut second = vec![None; lam.leaves.len()];
    for c in &b {
        second[c.leaf] = Some(c.t);
    }
    let mut pairs: Vec<(usize, f64, f64)> = a.iter().filter_map(|c| second[c.leaf].map(|u| (c.leaf, c.t, u))).collect();
    pairs.sort_by(|x, y| x.1.total_cmp(&y.1));
    pairs.dedup_by(|x, y| (x.1 - y.1).abs() <= SAME_LEAF || (x.2 - y.2).abs() <= SAME_LEAF);
    Ok(pairs)
}

/// Holonomy from `tau` to `tau2` along the leaves of `lam`.
pub fn holonomy(lam: &Lamination, tau: &Transversal, tau2: &Transversal, angle_min: f64) -> Result<Holonomy> {
    let pairs = holonomy_pairs(lam, tau, tau2, angle_min)?;
    if pairs.len() < 2 {
        return Err(Error::TooFewPoints { found: pairs.len(), needed: 2 });
    }
    let (lipschitz, inverse_lipschitz) = quotients(&pairs);
    Ok(Holonomy { pairs, lipschitz, inverse_lipschitz })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyLevel {
    pub leaves: usize,
    pub pairs: usize,
    pub lipschitz: f64,
    pub inverse_lipschitz: f64,
}

/// Lipschitz estimates on nested leaf subsets, each level doubling the
/// number of leaves used; the last level uses all of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyReport {
    pub levels: Vec<HolonomyLevel>,
    pub lipschitz: f64,
    /// `|L_last − L_prev| / L_last`.
    pub relative_change: f64,
    pub converged: bool,
}

pub fn holonomy_refinement(
    lam: &Lamination,
    tau: &Transversal,
    tau2: &Transversal,
    angle_min: f64,
    levels: usize,
) -> Result<HolonomyReport> {
    if levels < 2 {
        return Err(Error::InvalidParams("refinement needs at least two levels".into()));
    }
    let all = holonomy_pairs(lam, tau, tau2, angle_min)?;
    let n = lam.leaves.len();
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let cut = n.div_ceil(1 << (levels - 1 - j));
        let sub: Vec<(usize, f64, f64)> = all.iter().filter(|p| p.0 < cut).copied().collect();
        if sub.len() < 2 {
            return Err(Error::TooFewPoints { found: sub.len(), needed: 2 });
        }
        let (lipschitz, inverse_lipschitz) = quotients(&sub);
        out.push(HolonomyLevel { leaves: cut, pairs: sub.len(), lipschitz, inverse_lipschitz });
    }
    let last = out[levels - 1].lipschitz;
    let prev = out[levels - 2].lipschitz;
    let relative_change = (last - prev).abs() / last.max(f64::MIN_POSITIVE);
    Ok(HolonomyReport { levels: out, lipschitz: last, relative_change, converged: relative_change < REFINEMENT_TOL })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionCheckConfig {
    /// Half-length of the unstable leaves.
    pub radius: f64,
    /// Half-length of the stable leaves used as transversals.
    pub transversal_radius: f64,
    /// Scale of the entropy count on the coded points.
    pub sigma: f64,
    pub entropy_steps: usize,
    /// Length of the products in the `λˢ` estimate.
    pub lambda_steps: usize,
    pub tolerance: f64,
    pub boxes: BoxConfig,
}

impl Default for DimensionCheckConfig {
    fn default() -> Self {
        Self {
            radius: 0.1,
            transversal_radius: 0.1,
            sigma: 0.05,
            entropy_steps: 12,
            lambda_steps: 20,
            tolerance: 0.05,
            boxes: BoxConfig::default(),
        }
    }
}

/// Transverse dimension of the unstable lamination on three stable leaves,
/// compared with `h_top(f|Λ) / λˢ(f, Λ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub bases: Vec<Point>,
    /// One entry per base; `None` where the transversal had too few crossings.
    pub dimensions: Vec<Option<DimensionEstimate>>,
    /// Why a base produced no estimate, aligned with `bases`.
    pub skipped: Vec<Option<String>>,
    /// Smallest of the available estimates.
    pub dimension: f64,
    /// Entropy of `f` on the coded points, at scale `sigma`.
    pub entropy: f64,
    pub entropy_r_squared: f64,
    /// `max (1/n) log ‖Df^{-n}_x‖` over the coded points.
    pub lambda_s: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Largest difference between the available estimates.
    pub spread: f64,
    /// `None` unless at least two bases produced an estimate.
    pub base_independent: Option<bool>,
    pub config: DimensionCheckConfig,
}

/// `(1/n) log ‖Df^{-n}_x‖`.
pub fn backward_rate(map: &SmoothMap2D, x: &Point, n: usize) -> f64 {
    growth_matrix(map, x, n, false).norm().ln() / n as f64
}

/// The `k` most sampled base points that lie at least `sep` apart.
fn heavy_bases(lam: &Lamination, k: usize, sep: f64) -> Vec<Point> {
    let mut order: Vec<usize> = (0..lam.leaves.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(lam.leaves[i].weight), i));
    let mut chosen: Vec<Point> = Vec::with_capacity(k);
    for i in order {
        let b = lam.leaves[i].base;
        if chosen.iter().all(|c| lam.domain.distance(c, &b) >= sep) {
            chosen.push(b);
            if chosen.len() == k {
                break;
            }
        }
    }
    chosen
}

pub fn dimension_bound_check(map: &SmoothMap2D, hs: &Horseshoe, cfg: &DimensionCheckConfig) -> Result<DimensionReport> {
    let lam = unstable_lamination(map, hs, cfg.radius)?;
    if lam.leaves.is_empty() {
        return Err(Error::TooFewPoints { found: 0, needed: 1 });
    }
    let bases = heavy_bases(&lam, 3, cfg.transversal_radius / 2.0);
    let outcomes: Vec<Result<DimensionEstimate>> = bases
        .iter()
        .map(|x| {
            let leaf = grow_leaf(map, x, ManifoldKind::Stable, cfg.transversal_radius, lam.growth_steps)
                .ok_or_else(|| Error::NotHyperbolic("stable leaf through a coded point broke up".into()))?;
            transverse_dimension_with(&lam, &Transversal::from_leaf(&leaf), &cfg.boxes)
        })
        .collect();
    let skipped = outcomes.iter().map(|o| o.as_ref().err().map(|e| e.to_string())).collect();
    let dimensions: Vec<Option<DimensionEstimate>> = outcomes.into_iter().map(|o| o.ok()).collect();
    let values: Vec<f64> = dimensions.iter().flatten().map(|d| d.value).collect();
    let points: Vec<Point> = lam.leaves.iter().map(|l| l.base).collect();
    let ent = topological_entropy(map, &points, &[cfg.sigma], (1, cfg.entropy_steps))?;
    let lambda_s = points.par_iter().map(|x| backward_rate(map, x, cfg.lambda_steps)).reduce(|| f64::NEG_INFINITY, f64::max);
    let entropy = ent.value.max(0.0);
    let ratio = entropy / lambda_s;
    let (dimension, spread) = if values.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    Ok(DimensionReport {
        bases,
        dimensions,
        skipped,
        dimension,
        entropy,
        entropy_r_squared: ent.regression.r_squared,
        lambda_s,
        ratio,
        tolerance: cfg.tolerance,
        pass: !values.is_empty() && dimension + cfg.tolerance >= ratio,
        spread,
        base_independent: (values.len() >= 2).then_some(spread <= cfg.tolerance),
        config: *cfg,
    })
}

/// A parametrized curve on `[0, 1]` with its derivative.
pub trait Curve: Sync {
    fn point(&self, u: f64) -> Point;
    fn tangent(&self, u: f64) -> Point;
}

/// The parabola `u ↦ (a + u(b−a), vertex_y + k·(x − vertex_x)²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parabola {
    pub vertex: [f64; 2],
    pub curvature: f64,
    pub x_range: [f64; 2],
}

impl Curve for Parabola {
    fn point(&self, u: f64) -> Point {
        let x = self.x_range[0] + u * (self.x_range[1] - self.x_range[0]);
        Point::new(x, self.vertex[1] + self.curvature * (x - self.vertex[0]).powi(2))
    }

    fn tangent(&self, u: f64) -> Point {
        let w = self.x_range[1] - self.x_range[0];
        let x = self.x_range[0] + u * w;
        Point::new(w, 2.0 * self.curvature * (x - self.vertex[0]) * w)
    }
}

/// Smooth step on `[0, 1]` built from `ψ(u) = e^{-1/u}`, flat to all orders
/// at both ends. Returns the value and the derivative.
fn smooth_step(u: f64) -> (f64, f64) {
    let psi = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let dpsi = |u: f64| if u > 0.0 { (-1.0 / u).exp() / (u * u) } else { 0.0 };
    let (a, b) = (psi(u), psi(1.0 - u));
    let den = a + b;
    (a / den, (dpsi(u) * b + a * dpsi(1.0 - u)) / (den * den))
}

/// A `C^r` increasing function `g` on `[0, 1]` whose critical set is the
/// middle Cantor set `K` of ratio `ratio`. On the two pieces of `K` it is a
/// copy of itself shrunk by `ratio` horizontally and `ratio^r · flatness`
/// vertically; on each gap it rises by a smooth step. The factor `flatness`
/// below 1 makes the `r`-th derivative vanish on `K`.
///
/// The curve `γ(u) = (u, g(u))` is tangent to a horizontal line exactly at
/// the heights `g(K)`, a Cantor set of dimension
/// [`SardModel::expected_dimension`], which is below `1/r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SardModel {
    pub r: f64,
    pub ratio: f64,
    pub flatness: f64,
}

impl SardModel {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::InvalidParams(format!("smoothness {r} must exceed 1")));
        }
        Ok(Self { r, ratio: 0.45, flatness: 0.9 })
    }

    pub fn height_ratio(&self) -> f64 {
        self.ratio.powf(self.r) * self.flatness
    }

    pub fn expected_dimension(&self) -> f64 {
        2f64.ln() / (1.0 / self.height_ratio()).ln()
    }

    /// `(g(x), g′(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let rho = self.ratio;
        let ry = self.height_ratio();
        let (gap, rise) = (1.0 - 2.0 * rho, 1.0 - 2.0 * ry);
        let mut x = x.clamp(0.0, 1.0);
        let mut offset = 0.0;
        let mut scale = 1.0;
        let mut slope = 1.0;
        for _ in 0..200 {
            if x <= rho {
                x /= rho;
            } else if x >= 1.0 - rho {
                x = (x - 1.0 + rho) / rho;
                offset += scale * (1.0 - ry);
            } else {
                let (s, ds) = smooth_step((x - rho) / gap);
                return (offset + scale * (ry + rise * s), slope * rise / gap * ds);
            }
            scale *= ry;
            slope *= ry / rho;
        }
        (offset, 0.0)
    }

    /// The height `g(x)` of the Cantor point with binary digits `digits`.
    pub fn cantor_height(&self, digits: &[bool]) -> f64 {
        let ry = self.height_ratio();
        let mut scale = 1.0;
        let mut h = 0.0;
        for &d in digits {
            if d {
                h += scale * (1.0 - ry);
            }
            scale *= ry;
        }
        h
    }

    /// Horizontal leaves over `[-0.1, 1.1]`: `cantor` of them at random
    /// heights of `g(K)` (40 binary digits each) followed by `uniform` evenly
    /// spaced ones.
    pub fn lamination(&self, cantor: usize, uniform: usize, seed: u64) -> Lamination {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut heights: Vec<f64> = (0..cantor)
            .map(|_| {
                let digits: Vec<bool> = (0..40).map(|_| rng.gen()).collect();
                self.cantor_height(&digits)
            })
            .collect();
        heights.extend((0..uniform).map(|k| (k as f64 + 0.5) / uniform as f64));
        horizontal_leaves(&heights, [-0.1, 1.1])
    }

    /// The vertical transversal at `x = -0.05` onto which tangencies are
    /// projected.
    pub fn transversal() -> Transversal {
        Transversal::segment(Point::new(-0.05, -0.05), Point::new(-0.05, 1.05))
    }
}

impl Curve for SardModel {
    fn point(&self, u: f64) -> Point {
        Point::new(u, self.eval(u).0)
    }

    fn tangent(&self, u: f64) -> Point {
        Point::new(1.0, self.eval(u).1)
    }
}

/// Straight horizontal leaves at the given heights.
pub fn horizontal_leaves(heights: &[f64], x_range: [f64; 2]) -> Lamination {
    let leaves = heights
        .iter()
        .map(|&h| Leaf::segment(Point::new(x_range[0], h), Point::new(x_range[1], h)))
        .collect();
    Lamination::synthetic(ManifoldKind::Stable, leaves)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SardConfig {
    pub tangency_tol: f64,
    pub curve_samples: usize,
    /// Largest leaf-to-curve distance at which a touching without crossing
    /// counts as contact.
    pub touch_tol: f64,
    pub boxes: BoxConfig,
}

impl Default for SardConfig {
    fn default() -> Self {
        Self {
            tangency_tol: DEFAULT_TANGENCY_TOL,
            curve_samples: 1 << 14,
            touch_tol: 1e-9,
            boxes: BoxConfig { min_exp: 4, max_exp: 12, angle_min: 0.0, min_points: 1 },
        }
    }
}

/// A leaf meeting the curve at angle below the tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tangency {
    pub leaf: usize,
    pub u: f64,
    pub point: Point,
    pub angle: f64,
    /// Position of the leaf on the projection transversal.
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SardReport {
    pub r: f64,
    pub estimate: DimensionEstimate,
    pub bound: f64,
    pub pass: bool,
    pub tangencies: Vec<Tangency>,
    /// `(tolerance, estimate)` at a tenth and ten times the tolerance;
    /// `None` when no tangency survives.
    pub sensitivity: Vec<(f64, Option<f64>)>,
    pub tangency_tol: f64,
}

/// Contacts of `gamma` with one leaf with angle below `tol_max`, at most one
/// per leaf (the smallest angle).
fn leaf_contacts(
    gamma: &dyn Curve,
    us: &[f64],
    pts: &[Point],
    chunks: &[(usize, usize, ([f64; 2], [f64; 2]))],
    leaf: &Leaf,
    tol_max: f64,
    touch_tol: f64,
) -> Option<(f64, Point, f64)> {
    let mut best: Option<(f64, Point, f64)> = None;
    let mut consider = |u: f64, a: &Point, d: &Point, len: f64| {
        let p = gamma.point(u);
        let along = (p - a).dot(d);
        if along < -touch_tol || along > len + touch_tol {
            return;
        }
        let tg = gamma.tangent(u);
        let angle = cross(d, &tg.normalize()).abs().min(1.0).asin();
        if angle < tol_max && best.is_none_or(|b| angle < b.2) {
            best = Some((u, p, angle));
        }
    };
    for k in 0..leaf.points.len() - 1 {
        let a = leaf.points[k];
        let b = leaf.points[k + 1];
        let len = (b - a).norm();
        if len == 0.0 {
            continue;
        }
        let d = (b - a) / len;
        let seg = bbox(&leaf.points[k..=k + 1]);
        let dist = |u: f64| cross(&d, &(gamma.point(u) - a));
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        for &(lo, hi, ref bb) in chunks {
            if boxes_overlap(bb, &seg, touch_tol) {
                match ranges.last_mut() {
                    Some(r) if r.1 == lo => r.1 = hi,
                    _ => ranges.push((lo, hi)),
                }
            }
        }
        for (lo, hi) in ranges {
            let ds: Vec<f64> = (lo..=hi).map(|i| cross(&d, &(pts[i] - a))).collect();
            for w in 0..ds.len() - 1 {
                let (d0, d1) = (ds[w], ds[w + 1]);
                if d0 == 0.0 || (d0 > 0.0) != (d1 > 0.0) {
                    let (mut u0, mut u1) = (us[lo + w], us[lo + w + 1]);
                    let mut f0 = d0;
                    for _ in 0..80 {
                        let um = 0.5 * (u0 + u1);
                        if um <= u0 || um >= u1 || f0 == 0.0 {
                            break;
                        }
                        let fm = dist(um);
                        if (fm > 0.0) == (f0 > 0.0) {
                            u0 = um;
                            f0 = fm;
                        } else {
                            u1 = um;
                        }
                    }
                    consider(if f0 == 0.0 { u0 } else { 0.5 * (u0 + u1) }, &a, &d, len);
                }
                // A touching without crossing: |dist| has a local minimum
                // with no sign change around it.
                if w > 0 {
                    let dm = ds[w - 1];
                    if (dm > 0.0) == (d0 > 0.0) && (d0 > 0.0) == (d1 > 0.0) && d0.abs() <= dm.abs() && d0.abs() <= d1.abs() {
                        let (mut x0, mut x1) = (us[lo + w - 1], us[lo + w + 1]);
                        let g = 0.5 * (5f64.sqrt() - 1.0);
                        for _ in 0..120 {
                            let m0 = x1 - g * (x1 - x0);
                            let m1 = x0 + g * (x1 - x0);
                            if dist(m0).abs() <= dist(m1).abs() {
                                x1 = m1;
                            } else {
                                x0 = m0;
                            }
                        }
                        let um = 0.5 * (x0 + x1);
                        if dist(um).abs() <= touch_tol {
                            consider(um, &a, &d, len);
                        }
                    }
                }
            }
        }
    }
    best
}

/// Leaves of `lam` meeting `gamma` non-transversally, projected along the
/// leaves onto `tau` and box-counted. The verdict compares the estimate with
/// `1/r + 0.1`.
pub fn sard_tangency_dimension(
    lam: &Lamination,
    gamma: &dyn Curve,
    tau: &Transversal,
    r: f64,
    cfg: &SardConfig,
) -> Result<SardReport> {
    if cfg.curve_samples < 8 {
        return Err(Error::InvalidParams("too few curve samples".into()));
    }
    let n = cfg.curve_samples;
    let us: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let pts: Vec<Point> = us.par_iter().map(|&u| gamma.point(u)).collect();
    let chunk = 64;
    let chunks: Vec<(usize, usize, ([f64; 2], [f64; 2]))> = (0..n - 1)
        .step_by(chunk)
        .map(|lo| {
            let hi = (lo + chunk).min(n - 1);
            (lo, hi, bbox(&pts[lo..=hi]))
        })
        .collect();
    let tol_max = 10.0 * cfg.tangency_tol;
    let tau_box = tau.bbox();
    let mut all: Vec<Tangency> = (0..lam.leaves.len())
        .into_par_iter()
        .filter_map(|i| {
            let (u, point, angle) = leaf_contacts(gamma, &us, &pts, &chunks, &lam.leaves[i], tol_max, cfg.touch_tol)?;
            let c = leaf_crossing(lam, i, tau, &tau_box)?;
            Some(Tangency { leaf: i, u, point, angle, t: c.t })
        })
        .collect();
    all.sort_by_key(|t| t.leaf);
    let estimate_at = |tol: f64| -> Option<DimensionEstimate> {
        let ts: Vec<f64> = all.iter().filter(|t| t.angle < tol).map(|t| t.t).collect();
        box_dimension(&ts, &cfg.boxes).ok()
    };
    let estimate = estimate_at(cfg.tangency_tol).ok_or(Error::NoTangencies)?;
    let sensitivity = [cfg.tangency_tol / 10.0, tol_max]
        .iter()
        .map(|&tol| (tol, estimate_at(tol).map(|e| e.value)))
        .collect();
    let bound = 1.0 / r;
    let tangencies = all.into_iter().filter(|t| t.angle < cfg.tangency_tol).collect();
    Ok(SardReport {
        r,
        pass: estimate.value <= bound + 0.1,
        estimate,
        bound,
        tangencies,
        sensitivity,
        tangency_tol: cfg.tangency_tol,
    })
}
