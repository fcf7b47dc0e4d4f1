//! The Smale preorder on saddles, homoclinic classes and their periods, and
//! su-quadrilaterals.
//!
//! `O₁ ⪯ O₂` is witnessed by a transverse point of `W^u(O₁) ∩ W^s(O₂)`.
//! Manifolds are only ever known up to a finite length, so a probe that finds
//! nothing leaves the edge [`EdgeStatus::Unknown`]; it is never read as a
//! non-relation.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Point, SmoothMap2D};
use crate::error::{Error, Result};
use crate::linalg::{cross, gcd};
use crate::manifolds::{
    grow_manifold, local_manifold, transverse_intersections, IntersectionWitness, ManifoldCurve, ManifoldKind,
    RefineTol, DEFAULT_SIN_MIN,
};
use crate::orbits::PeriodicOrbit;
use crate::shift::{scc_decompose, MarkovGraph};

/// How far manifolds may be grown while looking for intersections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthBudget {
    /// Arclength of the first round.
    pub initial: f64,
    /// Largest arclength per branch; lengths double from `initial` up to it.
    pub max: f64,
    /// Radius of the local manifold the growth starts from.
    pub local_radius: f64,
    pub tol: RefineTol,
    pub sin_min: f64,
}

impl Default for GrowthBudget {
    fn default() -> Self {
        Self { initial: 0.5, max: 8.0, local_radius: 0.01, tol: RefineTol::default(), sin_min: DEFAULT_SIN_MIN }
    }
}

impl GrowthBudget {
    pub fn levels(&self) -> usize {
        let mut k = 0;
        while self.length(k) < self.max {
            k += 1;
        }
        k + 1
    }

    pub fn length(&self, level: usize) -> f64 {
        (self.initial * 2f64.powi(level as i32)).min(self.max)
    }
}

type Slot = Arc<OnceLock<Result<Arc<ManifoldCurve>>>>;

/// Grown manifolds of every point of a list of saddles, computed on demand
/// at the lengths of a [`GrowthBudget`] and shared between probes.
pub struct ManifoldCache<'a> {
    map: &'a SmoothMap2D,
    orbits: &'a [PeriodicOrbit],
    budget: GrowthBudget,
    slots: Mutex<HashMap<(usize, usize, ManifoldKind, usize), Slot>>,
}

impl<'a> ManifoldCache<'a> {
    pub fn new(map: &'a SmoothMap2D, orbits: &'a [PeriodicOrbit], budget: GrowthBudget) -> Self {
        Self { map, orbits, budget, slots: Mutex::new(HashMap::new()) }
    }

    pub fn budget(&self) -> &GrowthBudget {
        &self.budget
    }

    pub fn map(&self) -> &SmoothMap2D {
        self.map
    }

    pub fn orbits(&self) -> &[PeriodicOrbit] {
        self.orbits
    }

    /// The manifold of `orbits[orbit].points[point]` grown to
    /// `budget.length(level)`.
    pub fn curve(&self, orbit: usize, point: usize, kind: ManifoldKind, level: usize) -> Result<Arc<ManifoldCurve>> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock");
            slots.entry((orbit, point, kind, level)).or_default().clone()
        };
        slot.get_or_init(|| {
            let start = if level == 0 {
                Arc::new(local_manifold(
                    self.map,
                    &self.orbits[orbit],
                    point,
                    kind,
                    self.budget.local_radius,
                    self.budget.tol,
                )?)
            } else {
                self.curve(orbit, point, kind, level - 1)?
            };
            Ok(Arc::new(grow_manifold(self.map, &start, self.budget.length(level))?))
        })
        .clone()
    }
}

/// Alternating doubling schedule `(u-level, s-level)`: `(0,0), (1,0), (1,1),
/// (2,1), …` up to the top level.
fn rounds(levels: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0)];
    let (mut u, mut s) = (0, 0);
    while u + 1 < levels || s + 1 < levels {
        if u <= s && u + 1 < levels {
            u += 1;
        } else {
            s += 1;
        }
        out.push((u, s));
    }
    out
}

/// Looks for a transverse point of `W^u(x₀) ∩ W^s(y_j)`, `x₀` the first point
/// of orbit `from` and `y_j` ranging over orbit `to`. The witness records `j`
/// in `iterate_offset`.
pub fn probe(cache: &ManifoldCache, from: usize, to: usize) -> Result<Option<IntersectionWitness>> {
    for o in [from, to] {
        if !cache.orbits[o].is_saddle() {
            return Err(Error::NotSaddle);
        }
    }
    let b = cache.budget;
    for (lu, ls) in rounds(b.levels()) {
        let u = cache.curve(from, 0, ManifoldKind::Unstable, lu)?;
        for j in 0..cache.orbits[to].period {
            let s = cache.curve(to, j, ManifoldKind::Stable, ls)?;
            let hits = transverse_intersections(cache.map, &u, &s, b.sin_min);
            if let Some(w) = hits.witnesses.into_iter().next() {
                return Ok(Some(IntersectionWitness { iterate_offset: j as i64, ..w }));
            }
        }
    }
    Ok(None)
}

/// A transverse point of `W^u(O₁) ∩ W^s(O₂)` within the growth budget, or
/// `None` when none turned up.
pub fn smale_edge(
    map: &SmoothMap2D,
    o1: &PeriodicOrbit,
    o2: &PeriodicOrbit,
    budget: GrowthBudget,
) -> Result<Option<IntersectionWitness>> {
    let orbits = [o1.clone(), o2.clone()];
    let cache = ManifoldCache::new(map, &orbits, budget);
    probe(&cache, 0, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum EdgeStatus {
    Witnessed { witness: IntersectionWitness },
    /// Implied by transitivity from witnessed edges.
    Inferred,
    /// Probed without result at the current budget.
    Unknown,
}

impl EdgeStatus {
    pub fn holds(&self) -> bool {
        !matches!(self, EdgeStatus::Unknown)
    }

    pub fn is_witnessed(&self) -> bool {
        matches!(self, EdgeStatus::Witnessed { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphVertex {
    pub anchor: Point,
    pub period: usize,
    pub lambda_u: Option<f64>,
    pub lambda_s: Option<f64>,
}

/// Which ordered pairs get probed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbePlan {
    AllPairs,
    /// `hub → hub`, and `i → hub`, `hub → i` for every other vertex: enough to
    /// merge everything related to the hub, at linear cost.
    Hub(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicGraph {
    pub vertices: Vec<GraphVertex>,
    /// Keyed by `(from, to)`; serialized as a list of records.
    #[serde(with = "edge_records")]
    pub edges: BTreeMap<(usize, usize), EdgeStatus>,
    pub budget: GrowthBudget,
}

impl HomoclinicGraph {
    pub fn new(vertices: Vec<GraphVertex>, budget: GrowthBudget) -> Self {
        Self { vertices, edges: BTreeMap::new(), budget }
    }

    pub fn from_orbits(orbits: &[PeriodicOrbit], budget: GrowthBudget) -> Self {
        let vertices = orbits
            .iter()
            .map(|o| GraphVertex { anchor: o.anchor(), period: o.period, lambda_u: o.lambda_u, lambda_s: o.lambda_s })
            .collect();
        Self::new(vertices, budget)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn relates(&self, i: usize, j: usize) -> bool {
        self.edges.get(&(i, j)).is_some_and(EdgeStatus::holds)
    }

    pub fn witnessed(&self, i: usize, j: usize) -> bool {
        self.edges.get(&(i, j)).is_some_and(EdgeStatus::is_witnessed)
    }

    /// Adds the transitive closure of the holding edges, marking new ones
    /// [`EdgeStatus::Inferred`] (including upgrades of unknown edges).
    pub fn close(&mut self) {
        let n = self.len();
        let words = n.div_ceil(64);
        let mut reach = vec![vec![0u64; words]; n];
        for (&(i, j), st) in &self.edges {
            if st.holds() {
                reach[i][j / 64] |= 1 << (j % 64);
            }
        }
        for k in 0..n {
            let row_k = reach[k].clone();
            for row in reach.iter_mut() {
                if row[k / 64] >> (k % 64) & 1 == 1 {
                    for (w, r) in row.iter_mut().zip(&row_k) {
                        *w |= r;
                    }
                }
            }
        }
        for (i, row) in reach.iter().enumerate() {
            for j in 0..n {
                if row[j / 64] >> (j % 64) & 1 == 1 && !self.relates(i, j) {
                    self.edges.insert((i, j), EdgeStatus::Inferred);
                }
            }
        }
    }

    pub fn is_closed(&self) -> bool {
        let holds: Vec<(usize, usize)> = self.edges.iter().filter(|(_, s)| s.holds()).map(|(&k, _)| k).collect();
        holds.iter().all(|&(i, j)| {
            holds.iter().filter(|&&(a, _)| a == j).all(|&(_, k)| self.relates(i, k))
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph smale {\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
            out += &format!(
                "  o{i} [label=\"O{i} p={} λu={} λs={}\"];\n",
                v.period,
                fmt(v.lambda_u),
                fmt(v.lambda_s)
            );
        }
        for (&(i, j), st) in &self.edges {
            match st {
                EdgeStatus::Witnessed { witness } => {
                    out += &format!("  o{i} -> o{j} [label=\"{:.3}\"];\n", witness.angle);
                }
                EdgeStatus::Inferred => out += &format!("  o{i} -> o{j} [style=dashed];\n"),
                EdgeStatus::Unknown => out += &format!("  o{i} -> o{j} [style=dotted, color=gray];\n"),
            }
        }
        out += "}\n";
        out
    }
}

mod edge_records {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::EdgeStatus;

    #[derive(Serialize, Deserialize)]
    struct Record {
        from: usize,
        to: usize,
        #[serde(flatten)]
        status: EdgeStatus,
    }

    pub fn serialize<S: Serializer>(edges: &BTreeMap<(usize, usize), EdgeStatus>, ser: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Record> = edges.iter().map(|(&(from, to), status)| Record { from, to, status: status.clone() }).collect();
        list.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<BTreeMap<(usize, usize), EdgeStatus>, D::Error> {
        let list = Vec::<Record>::deserialize(de)?;
        Ok(list.into_iter().map(|r| ((r.from, r.to), r.status)).collect())
    }
}

/// Probes the pairs of `plan` in parallel, then closes the relation.
pub fn build_homoclinic_graph(cache: &ManifoldCache, plan: ProbePlan) -> Result<HomoclinicGraph> {
    let n = cache.orbits.len();
    if cache.orbits.iter().any(|o| !o.is_saddle()) {
        return Err(Error::NotSaddle);
    }
    let pairs: Vec<(usize, usize)> = match plan {
        ProbePlan::AllPairs => (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect(),
        ProbePlan::Hub(h) => {
            if h >= n {
                return Err(Error::InvalidParams(format!("hub {h} out of range for {n} orbits")));
            }
            let mut v = vec![(h, h)];
            for i in (0..n).filter(|&i| i != h) {
                v.push((i, h));
                v.push((h, i));
            }
            v
        }
    };
    let results: Vec<Result<Option<IntersectionWitness>>> = pairs.par_iter().map(|&(i, j)| probe(cache, i, j)).collect();
    let mut g = HomoclinicGraph::from_orbits(cache.orbits, cache.budget);
    for (&(i, j), r) in pairs.iter().zip(results) {
        let status = match r? {
            Some(witness) => EdgeStatus::Witnessed { witness },
            None => EdgeStatus::Unknown,
        };
        g.edges.insert((i, j), status);
    }
    g.close();
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicClass {
    pub members: Vec<usize>,
    /// Members with a witnessed two-way relation to some member (possibly
    /// themselves); the period is computed over these.
    pub related_members: Vec<usize>,
    pub period: u64,
    pub mixing_components: Option<usize>,
}

/// gcd of a list of orbit periods.
pub fn class_period(periods: impl IntoIterator<Item = usize>) -> u64 {
    periods.into_iter().fold(0, |g, p| gcd(g, p as u64))
}

/// Mutual-reachability classes of the closed relation; vertices outside any
/// cycle of the relation form singleton classes. Sorted by smallest member.
pub fn homoclinic_classes(graph: &HomoclinicGraph) -> Vec<HomoclinicClass> {
    let n = graph.len();
    let rel = MarkovGraph::from_edges(n, graph.edges.iter().filter(|(_, s)| s.holds()).map(|(&k, _)| k));
    let mut covered = vec![false; n];
    let mut classes = Vec::new();
    for comp in scc_decompose(&rel) {
        for &v in &comp.vertices {
            covered[v] = true;
        }
        classes.push(comp.vertices);
    }
    for v in 0..n {
        if !covered[v] {
            classes.push(vec![v]);
        }
    }
    classes.sort_by_key(|c| c[0]);
    classes
        .into_iter()
        .map(|members| {
            let related: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&m| members.iter().any(|&k| graph.witnessed(m, k) && graph.witnessed(k, m)))
                .collect();
            let basis: Vec<usize> = if related.is_empty() { members.clone() } else { related.clone() };
            let period = class_period(basis.iter().map(|&m| graph.vertices[m].period));
            HomoclinicClass { members, related_members: related, period, mixing_components: None }
        })
        .collect()
}

/// Result of testing `W^s(x₀) ⋔ W^u(x_k)` around one orbit of a class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub period: u64,
    /// `(k, intersection found)` for `k = 0 … p−1`.
    pub pattern: Vec<(usize, bool)>,
    /// Residues `k mod ℓ` at which an intersection was found.
    pub admissible_residues: Vec<u64>,
    /// Orbit point indices grouped by index mod ℓ: the cyclic pieces.
    pub pieces: Vec<Vec<usize>>,
    /// Residue-0 shifts at which no intersection turned up within budget.
    pub unresolved: Vec<usize>,
}

/// Checks the cyclic structure of orbit `orbit` (an index into the cache's
/// orbits) against the class period `ell`: `W^s(x₀) ⋔ W^u(x_k)` should hold
/// exactly for `k ≡ 0 (mod ℓ)`.
pub fn spectral_components(cache: &ManifoldCache, orbit: usize, ell: u64) -> Result<SpectralReport> {
    let o = &cache.orbits[orbit];
    if !o.is_saddle() {
        return Err(Error::NotSaddle);
    }
    if ell == 0 || !(o.period as u64).is_multiple_of(ell) {
        return Err(Error::ConflictingPeriod { expected: ell, found: vec![o.period as u64] });
    }
    let b = cache.budget;
    let top = b.levels() - 1;
    let found: Vec<Result<bool>> = (0..o.period)
        .into_par_iter()
        .map(|k| {
            for (lu, ls) in rounds(b.levels()) {
                let s = cache.curve(orbit, 0, ManifoldKind::Stable, ls)?;
                let u = cache.curve(orbit, k, ManifoldKind::Unstable, lu)?;
                if !transverse_intersections(cache.map, &u, &s, b.sin_min).witnesses.is_empty() {
                    return Ok(true);
                }
                if lu == top && ls == top {
                    break;
                }
            }
            Ok(false)
        })
        .collect();
    let mut pattern = Vec::new();
    for (k, r) in found.into_iter().enumerate() {
        pattern.push((k, r?));
    }
    let mut residues: Vec<u64> = pattern.iter().filter(|(_, hit)| *hit).map(|&(k, _)| k as u64 % ell).collect();
    residues.sort_unstable();
    residues.dedup();
    if residues.iter().any(|&r| r != 0) {
        return Err(Error::ConflictingPeriod { expected: ell, found: residues });
    }
    let unresolved = pattern.iter().filter(|&&(k, hit)| (k as u64).is_multiple_of(ell) && !hit).map(|&(k, _)| k).collect();
    let pieces = (0..ell).map(|r| (0..o.period).filter(|&i| i as u64 % ell == r).collect()).collect();
    Ok(SpectralReport { period: ell, pattern, admissible_residues: residues, pieces, unresolved })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcTag {
    S1,
    U1,
    S2,
    U2,
}

/// One side of a quadrilateral: a sub-arc of a stored manifold curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuArc {
    pub tag: ArcTag,
    pub kind: ManifoldKind,
    /// Index of the orbit point whose manifold carries the arc.
    pub point_index: usize,
    pub branch: usize,
    /// Signed arclength range on that curve, from the arc's start corner to
    /// its end corner.
    pub params: [f64; 2],
    /// Points in the chart centered at the requested center (lifted, not
    /// wrapped), from start corner to end corner.
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuQuadrilateral {
    pub center: Point,
    /// `s1, u1, s2, u2`, traversed counterclockwise.
    pub arcs: Vec<SuArc>,
    /// Canonical coordinates; `corners[k]` starts `arcs[k]`.
    pub corners: Vec<Point>,
    pub corner_angles: Vec<f64>,
    pub diameter: f64,
}

impl SuQuadrilateral {
    /// Closed boundary polygon in the chart.
    pub fn boundary(&self) -> Vec<Point> {
        let mut pts = Vec::new();
        for a in &self.arcs {
            pts.extend_from_slice(&a.points[..a.points.len() - 1]);
        }
        pts
    }

    /// Largest gap between consecutive arcs' end and start points.
    pub fn closure_gap(&self) -> f64 {
        (0..4).map(|k| (self.arcs[k].points.last().unwrap() - self.arcs[(k + 1) % 4].points[0]).norm()).fold(0.0, f64::max)
    }

    /// No two non-adjacent boundary segments cross.
    pub fn is_simple(&self) -> bool {
        let pts = self.boundary();
        let n = pts.len();
        for i in 0..n {
            let (a0, a1) = (pts[i], pts[(i + 1) % n]);
            for j in i + 2..n {
                if (j + 1) % n == i {
                    continue;
                }
                let (b0, b1) = (pts[j], pts[(j + 1) % n]);
                if proper_cross(&a0, &a1, &b0, &b1) {
                    return false;
                }
            }
        }
        true
    }

    pub fn signed_area(&self) -> f64 {
        let pts = self.boundary();
        let n = pts.len();
        0.5 * (0..n).map(|i| cross(&pts[i], &pts[(i + 1) % n])).sum::<f64>()
    }
}

fn proper_cross(a0: &Point, a1: &Point, b0: &Point, b1: &Point) -> bool {
    let r = a1 - a0;
    let s = b1 - b0;
    let d = cross(&r, &s);
    if d.abs() < 1e-300 {
        return false;
    }
    let t = cross(&(b0 - a0), &s) / d;
    let u = cross(&(b0 - a0), &r) / d;
    let e = 1e-9;
    t > e && t < 1.0 - e && u > e && u < 1.0 - e
}

/// A maximal run of a branch inside the working disc, in chart coordinates.
struct Piece {
    kind: ManifoldKind,
    point_index: usize,
    branch: usize,
    /// `(signed arclength, chart point)`.
    samples: Vec<(f64, Point)>,
}

struct Crossing {
    u: usize,
    s: usize,
    pu: f64,
    ps: f64,
    at: Point,
    sin: f64,
}

fn pieces_in_disc(map: &SmoothMap2D, curve: &ManifoldCurve, center: &Point, radius: f64, out: &mut Vec<Piece>) {
    let dom = map.domain();
    // both branches as one curve in increasing signed arclength:
    // `(param, image, segment to the next entry is a break)`
    let [b0, b1] = &curve.branches;
    let mut seq: Vec<(f64, Point, bool)> = Vec::with_capacity(b0.len() + b1.len());
    for i in (1..b1.len()).rev() {
        seq.push((curve.signed_param(1, i, 0.0), b1.images()[i], b1.is_break(i - 1)));
    }
    for i in 0..b0.len() {
        let gap = i + 1 < b0.len() && b0.is_break(i);
        seq.push((curve.signed_param(0, i, 0.0), b0.images()[i], gap));
    }
    let mut cur: Vec<(f64, Point)> = Vec::new();
    let flush = |cur: &mut Vec<(f64, Point)>, out: &mut Vec<Piece>| {
        if cur.len() >= 2 {
            let samples = std::mem::take(cur);
            let branch = usize::from(samples[0].0 < 0.0 && samples[samples.len() - 1].0 <= 0.0);
            out.push(Piece { kind: curve.kind, point_index: curve.point_index, branch, samples });
        }
        cur.clear();
    };
    let mut prev_gap = true;
    for &(param, img, gap) in &seq {
        match dom.displacement(center, &img).filter(|d| d.norm() <= radius) {
            Some(d) => {
                // a break or a jump across the chart boundary ends the run
                let contiguous = !prev_gap && cur.last().is_some_and(|(_, q)| (d - q).norm() < 0.5);
                if !contiguous {
                    flush(&mut cur, out);
                }
                cur.push((param, d));
            }
            None => flush(&mut cur, out),
        }
        prev_gap = gap;
    }
    flush(&mut cur, out);
}

/// Sub-polyline of a piece between two parameters, with the exact corner
/// points at both ends.
fn sub_arc(piece: &Piece, from: (f64, Point), to: (f64, Point)) -> Vec<Point> {
    let (lo, hi) = if from.0 <= to.0 { (from.0, to.0) } else { (to.0, from.0) };
    let mut inner: Vec<Point> = piece.samples.iter().filter(|(p, _)| *p > lo && *p < hi).map(|(_, q)| *q).collect();
    if from.0 > to.0 {
        inner.reverse();
    }
    let mut pts = vec![from.1];
    pts.extend(inner);
    pts.push(to.1);
    pts
}

/// An su-quadrilateral of `orbit` near `center`: two u-arcs and two s-arcs
/// whose four corners are consecutive crossings on each arc, so that the
/// boundary is a simple closed curve. Among all such cells inside the disc of
/// diameter `diam_max` around `center`, the one whose centroid is closest to
/// `center` is returned.
pub fn build_quadrilateral(
    cache: &ManifoldCache,
    orbit: usize,
    center: Point,
    diam_max: f64,
) -> Result<SuQuadrilateral> {
    let map = cache.map;
    let o = &cache.orbits[orbit];
    if !o.is_saddle() {
        return Err(Error::NotSaddle);
    }
    let top = cache.budget.levels() - 1;
    let radius = 0.5 * diam_max;
    let mut pieces = Vec::new();
    for k in 0..o.period {
        for kind in [ManifoldKind::Unstable, ManifoldKind::Stable] {
            let c = cache.curve(orbit, k, kind, top)?;
            pieces_in_disc(map, &c, &center, radius, &mut pieces);
        }
    }
    let us: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].kind == ManifoldKind::Unstable).collect();
    let ss: Vec<usize> = (0..pieces.len()).filter(|&i| pieces[i].kind == ManifoldKind::Stable).collect();
    let sin_min = cache.budget.sin_min;

    let mut crossings: Vec<Crossing> = Vec::new();
    for &u in &us {
        for &s in &ss {
            let (pu, ps) = (&pieces[u].samples, &pieces[s].samples);
            for a in pu.windows(2) {
                for b in ps.windows(2) {
                    let r = a[1].1 - a[0].1;
                    let q = b[1].1 - b[0].1;
                    let d = cross(&r, &q);
                    if d.abs() < 1e-300 {
                        continue;
                    }
                    let t = cross(&(b[0].1 - a[0].1), &q) / d;
                    let w = cross(&(b[0].1 - a[0].1), &r) / d;
                    // half-open on the far end so shared vertices count once
                    if (0.0..1.0).contains(&t) && (0.0..1.0).contains(&w) {
                        let sin = d.abs() / (r.norm() * q.norm());
                        crossings.push(Crossing {
                            u,
                            s,
                            pu: a[0].0 + t * (a[1].0 - a[0].0),
                            ps: b[0].0 + w * (b[1].0 - b[0].0),
                            at: a[0].1 + r * t,
                            sin,
                        });
                    }
                }
            }
        }
    }
    // crossings along each piece, in parameter order
    let mut on_piece: HashMap<usize, Vec<usize>> = HashMap::new();
    for (ci, c) in crossings.iter().enumerate() {
        on_piece.entry(c.u).or_default().push(ci);
        on_piece.entry(c.s).or_default().push(ci);
    }
    for (&p, list) in on_piece.iter_mut() {
        let key = |ci: &usize| if pieces[p].kind == ManifoldKind::Unstable { crossings[*ci].pu } else { crossings[*ci].ps };
        list.sort_by(|a, b| key(a).total_cmp(&key(b)));
    }
    let adjacent = |p: usize, a: usize, b: usize| -> bool {
        on_piece.get(&p).is_some_and(|l| {
            let ia = l.iter().position(|&x| x == a);
            let ib = l.iter().position(|&x| x == b);
            matches!((ia, ib), (Some(x), Some(y)) if x.abs_diff(y) == 1)
        })
    };

    let mut best: Option<(f64, [usize; 4])> = None;
    for &u1 in &us {
        let Some(list) = on_piece.get(&u1) else { continue };
        for w in list.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (s1, s2) = (crossings[a].s, crossings[b].s);
            if s1 == s2 {
                continue;
            }
            for (d, cd) in crossings.iter().enumerate() {
                if cd.s != s1 || cd.u == u1 || !adjacent(s1, a, d) {
                    continue;
                }
                let u2 = cd.u;
                for (c, cc) in crossings.iter().enumerate() {
                    if cc.s != s2 || cc.u != u2 || !adjacent(s2, b, c) || !adjacent(u2, c, d) {
                        continue;
                    }
                    let corners = [a, b, c, d];
                    if corners.iter().any(|&k| crossings[k].sin < sin_min) {
                        continue;
                    }
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| (crossings[corners[i]].at - crossings[corners[j]].at).norm() > 1e-9));
                    if !distinct {
                        continue;
                    }
                    let centroid = corners.iter().map(|&k| crossings[k].at).sum::<Point>() / 4.0;
                    let score = centroid.norm();
                    if best.is_none_or(|(sc, _)| score < sc) {
                        best = Some((score, corners));
                    }
                }
            }
        }
    }
    let Some((_, [a, b, c, d])) = best else {
        return Err(Error::NoQuadrilateral(format!(
            "{} u-pieces, {} s-pieces and {} crossings within diameter {diam_max} of ({:.4}, {:.4})",
            us.len(),
            ss.len(),
            crossings.len(),
            center[0],
            center[1]
        )));
    };
    let cr = |k: usize| &crossings[k];
    let corner = |k: usize, on_u: bool| (if on_u { cr(k).pu } else { cr(k).ps }, cr(k).at);
    let make = |tag: ArcTag, piece: usize, from: usize, to: usize| -> SuArc {
        let on_u = pieces[piece].kind == ManifoldKind::Unstable;
        let (f, t) = (corner(from, on_u), corner(to, on_u));
        SuArc {
            tag,
            kind: pieces[piece].kind,
            point_index: pieces[piece].point_index,
            branch: pieces[piece].branch,
            params: [f.0, t.0],
            points: sub_arc(&pieces[piece], f, t),
        }
    };
    let (u1, u2, s1, s2) = (cr(a).u, cr(c).u, cr(a).s, cr(b).s);
    // loop a → b along u1, b → c along s2, c → d along u2, d → a along s1
    let mut arcs = vec![make(ArcTag::U1, u1, a, b), make(ArcTag::S2, s2, b, c), make(ArcTag::U2, u2, c, d), make(ArcTag::S1, s1, d, a)];
    let mut corners_idx = vec![a, b, c, d];
    let area: f64 = {
        let pts: Vec<Point> = arcs.iter().flat_map(|x| x.points[..x.points.len() - 1].to_vec()).collect();
        let n = pts.len();
        0.5 * (0..n).map(|i| cross(&pts[i], &pts[(i + 1) % n])).sum::<f64>()
    };
    if area < 0.0 {
        // reverse orientation: traverse the same loop backwards
        arcs.reverse();
        for arc in &mut arcs {
            arc.points.reverse();
            arc.params.swap(0, 1);
        }
        corners_idx = vec![a, d, c, b];
    }
    // rotate so the stable arc with the smaller parameter comes first
    let s_positions: Vec<usize> = (0..4).filter(|&k| arcs[k].kind == ManifoldKind::Stable).collect();
    let key = |arc: &SuArc| (arc.params[0].min(arc.params[1]), arc.point_index);
    let first = *s_positions
        .iter()
        .min_by(|&&x, &&y| key(&arcs[x]).partial_cmp(&key(&arcs[y])).expect("finite"))
        .expect("two stable arcs");
    arcs.rotate_left(first);
    corners_idx.rotate_left(first);
    let mut seen_s = false;
    let mut seen_u = false;
    for arc in &mut arcs {
        arc.tag = match (arc.kind, seen_s, seen_u) {
            (ManifoldKind::Stable, false, _) => {
                seen_s = true;
                ArcTag::S1
            }
            (ManifoldKind::Stable, true, _) => ArcTag::S2,
            (ManifoldKind::Unstable, _, false) => {
                seen_u = true;
                ArcTag::U1
            }
            (ManifoldKind::Unstable, _, true) => ArcTag::U2,
        };
    }
    let all: Vec<Point> = arcs.iter().flat_map(|x| x.points.clone()).collect();
    let mut diameter: f64 = 0.0;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            diameter = diameter.max((all[i] - all[j]).norm());
        }
    }
    if diameter > diam_max {
        return Err(Error::NoQuadrilateral(format!("closest cell has diameter {diameter:.4} > {diam_max}")));
    }
    let dom = map.domain();
    Ok(SuQuadrilateral {
        center,
        corners: corners_idx.iter().map(|&k| dom.wrap(&(center + cr(k).at))).collect(),
        corner_angles: corners_idx.iter().map(|&k| cr(k).sin.min(1.0).asin()).collect(),
        arcs,
        diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::models::*;
    use crate::orbits::find_periodic;

    fn cat_saddles(max_p: usize) -> Vec<PeriodicOrbit> {
        crate::orbits::saddles_up_to(&cat_map(), max_p, 32).unwrap()
    }

    #[test]
    fn rounds_alternate() {
        assert_eq!(rounds(3), vec![(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)]);
        assert_eq!(rounds(1), vec![(0, 0)]);
        let b = GrowthBudget { initial: 0.5, max: 3.0, ..Default::default() };
        assert_eq!(b.levels(), 4);
        assert_eq!(b.length(3), 3.0);
    }

    #[test]
    fn cat_fixed_point_is_homoclinic() {
        let f = cat_map();
        let o = &cat_saddles(1)[0];
        let w = smale_edge(&f, o, o, GrowthBudget::default()).unwrap().expect("homoclinic point");
        // the witness lies on both eigenlines through 0 mod ℤ²
        let slope = (5f64.sqrt() - 1.0) / 2.0;
        let v = Point::new(1.0, slope).normalize();
        let lift = v * w.params[0];
        assert!(f.domain().distance(&lift, &w.point) < 1e-9);
    }

    #[test]
    fn sink_is_rejected() {
        let f = linear([[0.5, 0.0], [0.0, 0.25]]);
        let o = PeriodicOrbit::from_cycle(&f, vec![Point::zeros()]);
        assert_eq!(smale_edge(&f, &o, &o, GrowthBudget::default()).unwrap_err(), Error::NotSaddle);
    }

    #[test]
    fn class_period_examples() {
        assert_eq!(class_period([1, 2, 4]), 1);
        assert_eq!(class_period([2, 4]), 2);
        let verts = |ps: &[usize]| -> Vec<GraphVertex> {
            ps.iter().map(|&p| GraphVertex { anchor: Point::zeros(), period: p, lambda_u: None, lambda_s: None }).collect()
        };
        let g = HomoclinicGraph::new(verts(&[1, 2, 3]), GrowthBudget::default());
        let classes = homoclinic_classes(&g);
        assert_eq!(classes.len(), 3);
        assert!(classes.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn closure_is_transitive_and_marks_inferred() {
        let verts: Vec<GraphVertex> =
            (0..4).map(|_| GraphVertex { anchor: Point::zeros(), period: 2, lambda_u: None, lambda_s: None }).collect();
        let mut g = HomoclinicGraph::new(verts, GrowthBudget::default());
        let w = IntersectionWitness { point: Point::zeros(), angle: 1.0, params: [0.0, 0.0], iterate_offset: 0 };
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            g.edges.insert((i, j), EdgeStatus::Witnessed { witness: w.clone() });
        }
        g.edges.insert((3, 0), EdgeStatus::Unknown);
        g.close();
        assert!(g.is_closed());
        assert_eq!(g.edges[&(0, 2)], EdgeStatus::Inferred);
        assert_eq!(g.edges[&(0, 0)], EdgeStatus::Inferred);
        assert_eq!(g.edges[&(3, 0)], EdgeStatus::Unknown);
        let classes = homoclinic_classes(&g);
        assert_eq!(classes[0].members, vec![0, 1, 2]);
        // witnessed only one way round the cycle: no member is directly related
        assert!(classes[0].related_members.is_empty());
        assert_eq!(classes[0].period, 2);
        assert_eq!(classes[1].members, vec![3]);
        assert!(g.to_dot().contains("o0 -> o2 [style=dashed]"));
        let json = serde_json::to_string(&g).unwrap();
        let back: HomoclinicGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn cat_low_periods_form_one_class() {
        let f = cat_map();
        let orbits = cat_saddles(3);
        let cache = ManifoldCache::new(&f, &orbits, GrowthBudget::default());
        let g = build_homoclinic_graph(&cache, ProbePlan::AllPairs).unwrap();
        let classes = homoclinic_classes(&g);
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].period, 1);
        assert_eq!(classes[0].related_members.len(), orbits.len());
        // every witness re-validates
        for (&(i, j), st) in &g.edges {
            if let EdgeStatus::Witnessed { witness } = st {
                assert!(orbits[i].is_saddle() && orbits[j].is_saddle());
                assert!(witness.angle.sin() >= DEFAULT_SIN_MIN);
            }
        }
        let rep = spectral_components(&cache, 3, 1).unwrap();
        assert_eq!(rep.pieces.len(), 1);
        assert!(rep.pattern.iter().all(|&(_, hit)| hit));
    }

    #[test]
    fn swap_system_has_period_two() {
        let f = two_piece_swap();
        let orbits = find_periodic(&f, 2, 16).unwrap();
        let cache = ManifoldCache::new(&f, &orbits, GrowthBudget::default());
        let g = build_homoclinic_graph(&cache, ProbePlan::Hub(0)).unwrap();
        let classes = homoclinic_classes(&g);
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].period, 2);
        let rep = spectral_components(&cache, 0, 2).unwrap();
        assert_eq!(rep.admissible_residues, vec![0]);
        assert_eq!(rep.pattern, vec![(0, true), (1, false)]);
    }

    #[test]
    fn wrong_period_is_a_conflict() {
        let f = cat_map();
        let orbits = find_periodic(&f, 2, 16).unwrap();
        let cache = ManifoldCache::new(&f, &orbits, GrowthBudget::default());
        let err = spectral_components(&cache, 0, 2).unwrap_err();
        assert_eq!(err, Error::ConflictingPeriod { expected: 2, found: vec![0, 1] });
    }

    #[test]
    fn horseshoe_quadrilateral_is_a_rectangle() {
        let f = affine_horseshoe(1.0 / 3.0, 3.0);
        let orbits = vec![PeriodicOrbit::from_cycle(&f, vec![Point::zeros()])];
        let budget = GrowthBudget { initial: 1.0, max: 4.0, ..Default::default() };
        let cache = ManifoldCache::new(&f, &orbits, budget);
        let q = build_quadrilateral(&cache, 0, Point::new(0.33, 0.35), 1.4).unwrap();
        assert!(q.closure_gap() < 1e-12);
        assert!(q.is_simple());
        assert!(q.signed_area() > 0.0);
        for arc in &q.arcs {
            let horizontal = arc.points.iter().all(|p| (p[1] - arc.points[0][1]).abs() < 1e-12);
            let vertical = arc.points.iter().all(|p| (p[0] - arc.points[0][0]).abs() < 1e-12);
            match arc.kind {
                ManifoldKind::Stable => assert!(horizontal),
                ManifoldKind::Unstable => assert!(vertical),
            }
        }
        for a in &q.corner_angles {
            assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
        assert_eq!(q.arcs[0].tag, ArcTag::S1);
        let err = build_quadrilateral(&cache, 0, Point::new(0.33, 0.35), 0.05).unwrap_err();
        assert_eq!(err.name(), "NoQuadrilateral");
    }

    #[test]
    fn cat_quadrilateral_corners_on_lattice() {
        let f = cat_map();
        let orbits = cat_saddles(1);
        let budget = GrowthBudget { initial: 2.0, max: 16.0, ..Default::default() };
        let cache = ManifoldCache::new(&f, &orbits, budget);
        let center = Point::new(0.7236, 0.4472);
        let q = build_quadrilateral(&cache, 0, center, 0.2).unwrap();
        assert!(q.diameter <= 0.2);
        assert!(q.is_simple() && q.closure_gap() < 1e-12);
        let slope = (5f64.sqrt() - 1.0) / 2.0;
        let v = Point::new(1.0, slope).normalize();
        let w = Point::new(1.0, -1.0 / slope).normalize();
        for (k, corner) in q.corners.iter().enumerate() {
            // the corner starting arc k lies on an unstable and a stable line
            let arc = &q.arcs[k];
            let prev = &q.arcs[(k + 3) % 4];
            let (pu, ps) = match arc.kind {
                ManifoldKind::Stable => (prev.params[1], arc.params[0]),
                ManifoldKind::Unstable => (arc.params[0], prev.params[1]),
            };
            let d = v * pu - w * ps;
            assert!((d[0] - d[0].round()).abs() < 1e-9 && (d[1] - d[1].round()).abs() < 1e-9);
            assert!(f.domain().distance(&(v * pu), corner) < 1e-9);
        }
    }
}
