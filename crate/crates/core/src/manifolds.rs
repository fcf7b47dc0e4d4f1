//! Stable and unstable manifolds of periodic saddles.
//!
//! A branch of `W^u(x)` at generation `K` is the curve
//! `s ↦ f^{pK}(x + s·e)` for `s` in a short interval, `e` the unstable
//! eigendirection of `Df^p_x`; stable branches use `f^{-p}`. Refinement adds
//! sample parameters `s` and evaluates them from scratch, so that a fold of
//! the image is resolved in parameter space rather than by interpolating the
//! image polyline. Parameter intervals that cannot be resolved (the map is
//! discontinuous there, or a sample escaped) are recorded as breaks.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Domain, Mat2, Point, SmoothMap2D};
use crate::error::{Error, Result};
use crate::linalg::{cross, eigenvector2};
use crate::orbits::PeriodicOrbit;
use crate::svg::Svg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    #[serde(rename = "s")]
    Stable,
    #[serde(rename = "u")]
    Unstable,
}

impl ManifoldKind {
    pub fn symbol(&self) -> &'static str {
        match self {
            ManifoldKind::Stable => "s",
            ManifoldKind::Unstable => "u",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineTol {
    /// Largest turning angle between consecutive segments, radians.
    pub angle: f64,
    /// Largest segment length.
    pub h: f64,
}

impl Default for RefineTol {
    fn default() -> Self {
        Self { angle: 0.01, h: 1e-3 }
    }
}

pub const DEFAULT_POINT_BUDGET: usize = 10_000_000;
/// Default lower bound on `sin θ` between tangents at a witness.
pub const DEFAULT_SIN_MIN: f64 = 1e-3;
const MAX_GENERATIONS: usize = 400;

/// One side of a manifold: the points `f^{±pK}(anchor + sign·s·e)` for the
/// stored parameters `s ≥ 0`, in increasing `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub sign: f64,
    pub params: Vec<f64>,
    /// Continuous lift in ℝ² of the image points; across a break the lift
    /// restarts at the canonical representative.
    pub points: Vec<Point>,
    /// Cumulative arclength along `points`, not counting break segments.
    pub arclength: Vec<f64>,
    /// Indices `i` such that the segment `points[i] → points[i+1]` is not part
    /// of the curve.
    pub breaks: Vec<usize>,
    images: Vec<Point>,
    gap_after: Vec<bool>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.arclength.last().copied().unwrap_or(0.0)
    }

    pub fn is_break(&self, i: usize) -> bool {
        self.gap_after[i]
    }

    /// Canonical (wrapped) image points.
    pub fn images(&self) -> &[Point] {
        &self.images
    }

    fn rebuild(&mut self, domain: &Domain) {
        let n = self.images.len();
        self.points.clear();
        self.arclength.clear();
        self.breaks.clear();
        for i in 0..n {
            if i == 0 {
                self.points.push(self.images[0]);
                self.arclength.push(0.0);
                continue;
            }
            let prev = self.points[i - 1];
            let gap = self.gap_after[i - 1];
            match domain.displacement(&self.images[i - 1], &self.images[i]) {
                Some(d) if !gap => {
                    self.points.push(prev + d);
                    self.arclength.push(self.arclength[i - 1] + d.norm());
                }
                _ => {
                    self.points.push(self.images[i]);
                    self.arclength.push(self.arclength[i - 1]);
                    self.breaks.push(i - 1);
                }
            }
        }
    }
}

/// A grown stable or unstable manifold of one point of a periodic saddle,
/// made of the two branches leaving the anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub anchor: Point,
    pub orbit_period: usize,
    pub point_index: usize,
    pub kind: ManifoldKind,
    /// Unit eigendirection at the anchor.
    pub direction: Point,
    /// `|μ|` for the unstable and `1/|μ|` for the stable multiplier of the
    /// orbit: the linear growth rate per generation.
    pub rate: f64,
    pub branches: [Branch; 2],
    pub refine_tol: RefineTol,
    pub generation: usize,
    pub budget: usize,
}

impl ManifoldCurve {
    pub fn total_points(&self) -> usize {
        self.branches.iter().map(Branch::len).sum()
    }

    /// Shorter of the two branch lengths.
    pub fn arclength(&self) -> f64 {
        self.branches[0].total_length().min(self.branches[1].total_length())
    }

    fn steps(&self) -> usize {
        self.orbit_period * self.generation
    }

    /// `f^{±pK}(anchor + sign·s·e)`, or `None` when some iterate leaves the
    /// domain.
    pub fn evaluate(&self, map: &SmoothMap2D, branch: usize, s: f64) -> Option<Point> {
        eval_at(map, self.kind, &self.anchor, &self.direction, self.branches[branch].sign * s, self.steps())
    }

    /// Signed arclength coordinate of a point at fraction `t` along segment
    /// `i` of branch `b`.
    pub fn signed_param(&self, b: usize, i: usize, t: f64) -> f64 {
        let br = &self.branches[b];
        let len = br.arclength.get(i + 1).map_or(0.0, |a| a - br.arclength[i]);
        br.sign * (br.arclength[i] + t * len)
    }

    /// `s, x, y` rows with the signed arclength and canonical coordinates;
    /// branch 1 is listed first, from its far end, so `s` increases.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x,y\n");
        let b1 = &self.branches[1];
        for i in (1..b1.len()).rev() {
            out += &format!("{:.12},{:.12},{:.12}\n", -b1.arclength[i], b1.images[i][0], b1.images[i][1]);
        }
        let b0 = &self.branches[0];
        for i in 0..b0.len() {
            out += &format!("{:.12},{:.12},{:.12}\n", b0.arclength[i], b0.images[i][0], b0.images[i][1]);
        }
        out
    }
}

fn eval_at(map: &SmoothMap2D, kind: ManifoldKind, anchor: &Point, dir: &Point, s: f64, steps: usize) -> Option<Point> {
    let dom = map.domain();
    let mut x = dom.wrap(&(anchor + dir * s));
    if !dom.contains(&x) {
        return None;
    }
    for _ in 0..steps {
        x = match kind {
            ManifoldKind::Unstable => map.forward(&x),
            ManifoldKind::Stable => map.inverse(&x),
        };
        if !dom.contains(&x) || !x[0].is_finite() || !x[1].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// `Df^p` along the cycle starting at point `i`.
fn cycle_jacobian(map: &SmoothMap2D, orbit: &PeriodicOrbit, i: usize) -> Mat2 {
    let p = orbit.period;
    let mut m = Mat2::identity();
    for k in 0..p {
        m = map.jacobian(&orbit.points[(i + k) % p]) * m;
    }
    m
}

/// Unit stable or unstable eigendirection of `Df^p` at orbit point `i`, and
/// the growth rate per period of the corresponding manifold.
pub fn eigendirection(map: &SmoothMap2D, orbit: &PeriodicOrbit, i: usize, kind: ManifoldKind) -> Result<(Point, f64)> {
    if !orbit.is_saddle() {
        return Err(Error::NotSaddle);
    }
    let m = cycle_jacobian(map, orbit, i);
    let [small, big] = orbit.multipliers;
    let (lambda, rate) = match kind {
        ManifoldKind::Unstable => (big.re, big.norm()),
        ManifoldKind::Stable => (small.re, 1.0 / small.norm()),
    };
    Ok((eigenvector2(&m, lambda), rate))
}

/// Local manifold of radius `eps` at orbit point `point_index`: the image of
/// the linear fundamental segment of length `eps / rate` under one period.
pub fn local_manifold(
    map: &SmoothMap2D,
    orbit: &PeriodicOrbit,
    point_index: usize,
    kind: ManifoldKind,
    eps: f64,
    tol: RefineTol,
) -> Result<ManifoldCurve> {
    let (direction, rate) = eigendirection(map, orbit, point_index, kind)?;
    let anchor = orbit.points[point_index];
    let len0 = eps / rate;
    let n = ((len0 / (tol.h / rate)).ceil() as usize).max(4);
    let make = |sign: f64| {
        let params: Vec<f64> = (0..=n).map(|k| len0 * k as f64 / n as f64).collect();
        let images: Vec<Point> = params.iter().map(|&s| map.domain().wrap(&(anchor + direction * (sign * s)))).collect();
        let gap_after = vec![false; images.len()];
        let mut b = Branch { sign, params, points: vec![], arclength: vec![], breaks: vec![], images, gap_after };
        b.rebuild(map.domain());
        b
    };
    let mut curve = ManifoldCurve {
        anchor,
        orbit_period: orbit.period,
        point_index,
        kind,
        direction,
        rate,
        branches: [make(1.0), make(-1.0)],
        refine_tol: tol,
        generation: 0,
        budget: DEFAULT_POINT_BUDGET,
    };
    advance(map, &mut curve)?;
    Ok(curve)
}

/// The straight segment `center ± t·direction`, `|t| ≤ half_length`, as a
/// generation-0 curve sampled at spacing `h`.
pub fn straight_segment(domain: &Domain, center: Point, direction: Point, half_length: f64, h: f64) -> ManifoldCurve {
    let direction = direction.normalize();
    let n = ((half_length / h).ceil() as usize).max(1);
    let make = |sign: f64| {
        let params: Vec<f64> = (0..=n).map(|k| half_length * k as f64 / n as f64).collect();
        let images: Vec<Point> = params.iter().map(|&s| domain.wrap(&(center + direction * (sign * s)))).collect();
        let gap_after = vec![false; images.len()];
        let mut b = Branch { sign, params, points: vec![], arclength: vec![], breaks: vec![], images, gap_after };
        b.rebuild(domain);
        b
    };
    ManifoldCurve {
        anchor: domain.wrap(&center),
        orbit_period: 1,
        point_index: 0,
        kind: ManifoldKind::Unstable,
        direction,
        rate: 1.0,
        branches: [make(1.0), make(-1.0)],
        refine_tol: RefineTol { angle: 0.01, h },
        generation: 0,
        budget: DEFAULT_POINT_BUDGET,
    }
}

/// Maps every sample one period further and refines.
fn advance(map: &SmoothMap2D, curve: &mut ManifoldCurve) -> Result<()> {
    let p = curve.orbit_period;
    let dom = *map.domain();
    curve.generation += 1;
    let step = |x: &Point| -> Option<Point> {
        let mut y = *x;
        for _ in 0..p {
            y = match curve.kind {
                ManifoldKind::Unstable => map.forward(&y),
                ManifoldKind::Stable => map.inverse(&y),
            };
            if !dom.contains(&y) {
                return None;
            }
        }
        Some(y)
    };
    for b in 0..2 {
        let br = &curve.branches[b];
        let mapped: Vec<Option<Point>> = br.images.par_iter().map(step).collect();
        let mut params = Vec::with_capacity(br.params.len());
        let mut images = Vec::with_capacity(br.params.len());
        let mut gap_after: Vec<bool> = Vec::with_capacity(br.params.len());
        for (i, m) in mapped.into_iter().enumerate() {
            match m {
                Some(y) => {
                    params.push(br.params[i]);
                    images.push(y);
                    gap_after.push(br.gap_after[i]);
                }
                None => {
                    if let Some(g) = gap_after.last_mut() {
                        *g = true;
                    }
                }
            }
        }
        let br = &mut curve.branches[b];
        br.params = params;
        br.images = images;
        br.gap_after = gap_after;
    }
    refine(map, curve)
}

/// Parameter gaps below this relative width are declared breaks.
const MIN_DS: f64 = 1e-14;

fn refine(map: &SmoothMap2D, curve: &mut ManifoldCurve) -> Result<()> {
    let tol = curve.refine_tol;
    let dom = *map.domain();
    let (kind, anchor, dir, steps) = (curve.kind, curve.anchor, curve.direction, curve.steps());
    let budget = curve.budget;
    let mut total: usize = curve.total_points();
    for b in 0..2 {
        let sign = curve.branches[b].sign;
        let eval = |s: f64| eval_at(map, kind, &anchor, &dir, sign * s, steps);
        loop {
            let br = &curve.branches[b];
            let n = br.params.len();
            if n == 0 {
                break;
            }
            // segments to split: too long, or adjacent to a sharp turn
            let mut split = vec![false; n.saturating_sub(1)];
            let seg = |i: usize| dom.displacement(&br.images[i], &br.images[i + 1]);
            for i in 0..n - 1 {
                if br.gap_after[i] {
                    continue;
                }
                match seg(i) {
                    Some(d) if d.norm() <= tol.h => {}
                    _ => split[i] = true,
                }
            }
            for j in 1..n.saturating_sub(1) {
                if br.gap_after[j - 1] || br.gap_after[j] || split[j - 1] || split[j] {
                    continue;
                }
                let (Some(a), Some(c)) = (seg(j - 1), seg(j)) else { continue };
                if a.norm() < 1e-9 || c.norm() < 1e-9 {
                    continue;
                }
                let turn = cross(&a, &c).atan2(a.dot(&c)).abs();
                if turn > tol.angle {
                    split[j - 1] = true;
                    split[j] = true;
                }
            }
            // parameter intervals too short to split become breaks
            let mut mids: Vec<(usize, f64)> = Vec::new();
            let mut new_gaps: Vec<usize> = Vec::new();
            for (i, &sp) in split.iter().enumerate() {
                if !sp {
                    continue;
                }
                let (s0, s1) = (br.params[i], br.params[i + 1]);
                if s1 - s0 <= MIN_DS * s1.abs().max(1e-300) {
                    new_gaps.push(i);
                } else {
                    mids.push((i, 0.5 * (s0 + s1)));
                }
            }
            if mids.is_empty() && new_gaps.is_empty() {
                break;
            }
            total += mids.len();
            if total > budget {
                return Err(Error::RefinementBlowup(budget));
            }
            let values: Vec<Option<Point>> = mids.par_iter().map(|&(_, s)| eval(s)).collect();
            let br = &mut curve.branches[b];
            for i in new_gaps {
                br.gap_after[i] = true;
            }
            let mut params = Vec::with_capacity(n + mids.len());
            let mut images = Vec::with_capacity(n + mids.len());
            let mut gap_after = Vec::with_capacity(n + mids.len());
            let mut next_mid = 0;
            for i in 0..n {
                params.push(br.params[i]);
                images.push(br.images[i]);
                gap_after.push(br.gap_after[i]);
                if next_mid < mids.len() && mids[next_mid].0 == i {
                    match values[next_mid] {
                        Some(y) => {
                            params.push(mids[next_mid].1);
                            images.push(y);
                            gap_after.push(false);
                        }
                        None => {
                            *gap_after.last_mut().expect("pushed above") = true;
                        }
                    }
                    next_mid += 1;
                }
            }
            br.params = params;
            br.images = images;
            br.gap_after = gap_after;
        }
        curve.branches[b].rebuild(&dom);
    }
    Ok(())
}

/// Cuts a branch right after the first point whose arclength reaches
/// `target`.
fn truncate(branch: &mut Branch, target: f64) {
    if let Some(k) = branch.arclength.iter().position(|&a| a >= target) {
        let keep = k + 1;
        branch.params.truncate(keep);
        branch.images.truncate(keep);
        branch.gap_after.truncate(keep);
        if let Some(g) = branch.gap_after.last_mut() {
            *g = false;
        }
        branch.points.truncate(keep);
        branch.arclength.truncate(keep);
        branch.breaks.retain(|&i| i + 1 < keep);
    }
}

/// Extends both branches by iterating until each has arclength at least
/// `target` (after which it is cut back to just past `target`). Branches
/// that stop growing, because every new piece escaped, end where they are.
pub fn grow_manifold(map: &SmoothMap2D, curve: &ManifoldCurve, target: f64) -> Result<ManifoldCurve> {
    let mut c = curve.clone();
    let mut stalled = 0;
    while c.branches.iter().any(|b| b.total_length() < target) && c.generation < MAX_GENERATIONS {
        let before = [c.branches[0].total_length(), c.branches[1].total_length()];
        // keep only the part of the parameter range that is still needed
        let mut next = c.clone();
        advance(map, &mut next)?;
        for b in 0..2 {
            if before[b] >= target {
                // a finished branch keeps its previous-generation extent
                let reach = before[b];
                truncate(&mut next.branches[b], reach);
            }
        }
        let grew = (0..2).any(|b| before[b] < target && next.branches[b].total_length() > before[b] * (1.0 + 1e-9) + 1e-12);
        c = next;
        if grew {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        }
    }
    for b in &mut c.branches {
        truncate(b, target);
    }
    Ok(c)
}

/// A transverse crossing of two manifold curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionWitness {
    /// Canonical coordinates of the crossing.
    pub point: Point,
    /// Angle in `(0, π/2]` between the two tangents.
    pub angle: f64,
    /// Signed arclength coordinates on the first and second curve.
    pub params: [f64; 2],
    pub iterate_offset: i64,
}

/// A crossing or near-miss at which the tangents are nearly parallel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencySuspect {
    pub point: Point,
    pub sin_angle: f64,
    pub distance: f64,
    pub params: [f64; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Intersections {
    pub witnesses: Vec<IntersectionWitness>,
    pub suspects: Vec<TangencySuspect>,
}

/// Segment `p → p + r` against `q → q + s`: parameters `(t, u)` of the
/// crossing, if any.
fn segment_cross(p: &Point, r: &Point, q: &Point, s: &Point) -> Option<(f64, f64)> {
    let denom = cross(r, s);
    if denom.abs() <= 1e-300 {
        return None;
    }
    let qp = q - p;
    let t = cross(&qp, s) / denom;
    let u = cross(&qp, r) / denom;
    let e = 1e-12;
    ((-e..=1.0 + e).contains(&t) && (-e..=1.0 + e).contains(&u)).then_some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
}

fn segment_distance(p: &Point, r: &Point, q: &Point, s: &Point) -> f64 {
    let pt_seg = |x: &Point, a: &Point, d: &Point| {
        let l2 = d.norm_squared();
        let t = if l2 > 0.0 { ((x - a).dot(d) / l2).clamp(0.0, 1.0) } else { 0.0 };
        (x - (a + d * t)).norm()
    };
    pt_seg(p, q, s).min(pt_seg(&(p + r), q, s)).min(pt_seg(q, p, r)).min(pt_seg(&(q + s), p, r))
}

struct SegRef {
    branch: usize,
    index: usize,
}

/// Bucket index of a canonical point for a grid of cell size `cell`.
fn bucket(p: &Point, cell: f64) -> (i64, i64) {
    ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
}

/// Refines a segment-pair crossing by bisecting the underlying parameter
/// intervals of both curves until both segments are shorter than `1e-10`.
#[allow(clippy::too_many_arguments)]
fn refine_crossing(
    map: &SmoothMap2D,
    a: &ManifoldCurve,
    ab: usize,
    mut sa: (f64, f64),
    mut pa: (Point, Point),
    b: &ManifoldCurve,
    bb: usize,
    mut sb: (f64, f64),
    mut pb: (Point, Point),
) -> (Point, Point, Point) {
    let dom = map.domain();
    let rel = |x: &Point, base: &Point| base + dom.displacement(base, x).unwrap_or(x - base);
    for _ in 0..80 {
        let base = pa.0;
        let (a0, a1) = (base, rel(&pa.1, &base));
        let (b0, b1) = (rel(&pb.0, &base), rel(&pb.1, &base));
        let la = (a1 - a0).norm();
        let lb = (b1 - b0).norm();
        if la < 1e-10 && lb < 1e-10 {
            break;
        }
        let mut progressed = false;
        if la >= 1e-10 && sa.1 - sa.0 > MIN_DS * sa.1.abs() {
            let sm = 0.5 * (sa.0 + sa.1);
            if let Some(m) = a.evaluate(map, ab, sm) {
                let m = rel(&m, &base);
                if segment_cross(&a0, &(m - a0), &b0, &(b1 - b0)).is_some() {
                    sa.1 = sm;
                    pa.1 = m;
                    progressed = true;
                } else if segment_cross(&m, &(a1 - m), &b0, &(b1 - b0)).is_some() {
                    sa.0 = sm;
                    pa.0 = m;
                    progressed = true;
                }
            }
        }
        let base = pa.0;
        let (a0, a1) = (base, rel(&pa.1, &base));
        if lb >= 1e-10 && sb.1 - sb.0 > MIN_DS * sb.1.abs() {
            let sm = 0.5 * (sb.0 + sb.1);
            if let Some(m) = b.evaluate(map, bb, sm) {
                let (b0, b1) = (rel(&pb.0, &base), rel(&pb.1, &base));
                let m = rel(&m, &base);
                if segment_cross(&a0, &(a1 - a0), &b0, &(m - b0)).is_some() {
                    sb.1 = sm;
                    pb.1 = m;
                    progressed = true;
                } else if segment_cross(&a0, &(a1 - a0), &m, &(b1 - m)).is_some() {
                    sb.0 = sm;
                    pb.0 = m;
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    let base = pa.0;
    let (a0, a1) = (base, rel(&pa.1, &base));
    let (b0, b1) = (rel(&pb.0, &base), rel(&pb.1, &base));
    let (ra, rb) = (a1 - a0, b1 - b0);
    let x = match segment_cross(&a0, &ra, &b0, &rb) {
        Some((t, _)) => a0 + ra * t,
        None => 0.5 * (a0 + a1),
    };
    (dom.wrap(&x), ra, rb)
}

/// All transverse crossings between two curves with `sin θ ≥ sin_min`.
/// Crossings at a shared anchor are skipped. Results are sorted by the
/// parameter on the first curve.
pub fn transverse_intersections(map: &SmoothMap2D, a: &ManifoldCurve, b: &ManifoldCurve, sin_min: f64) -> Intersections {
    let dom = *map.domain();
    let seg_len_max = |c: &ManifoldCurve| {
        c.branches
            .iter()
            .flat_map(|br| (0..br.len().saturating_sub(1)).filter(|&i| !br.is_break(i)).map(move |i| br.arclength[i + 1] - br.arclength[i]))
            .fold(0.0, f64::max)
    };
    let cell = (2.0 * seg_len_max(a).max(seg_len_max(b))).max(1e-9);
    let periodic = dom.is_periodic();
    let ncell = if periodic { (1.0 / cell).floor().max(1.0) as i64 } else { 0 };
    let wrap_cell = |c: i64| if periodic { c.rem_euclid(ncell) } else { c };

    let mut grid: HashMap<(usize, i64, i64), Vec<SegRef>> = HashMap::new();
    let key = |p: &Point| {
        let piece = dom.piece(p);
        let local = if piece == 1 { Point::new(p[0] - 2.0, p[1]) } else { *p };
        let (i, j) = bucket(&local, cell);
        (piece, wrap_cell(i), wrap_cell(j))
    };
    for (bi, br) in b.branches.iter().enumerate() {
        for i in 0..br.len().saturating_sub(1) {
            if br.is_break(i) {
                continue;
            }
            grid.entry(key(&br.images[i])).or_default().push(SegRef { branch: bi, index: i });
        }
    }
    let shared_anchor = dom.distance(&a.anchor, &b.anchor) < 1e-12;

    let jobs: Vec<(usize, usize)> = a
        .branches
        .iter()
        .enumerate()
        .flat_map(|(bi, br)| (0..br.len().saturating_sub(1)).filter(move |&i| !br.is_break(i)).map(move |i| (bi, i)))
        .collect();
    let found: Vec<Vec<(Option<IntersectionWitness>, Option<TangencySuspect>)>> = jobs
        .par_iter()
        .map(|&(abi, ai)| {
            let abr = &a.branches[abi];
            let p = abr.images[ai];
            let r = dom.displacement(&p, &abr.images[ai + 1]).expect("non-break segment");
            let (piece, ci, cj) = key(&p);
            let span: Vec<i64> = (-1..=1).collect();
            let mut out = Vec::new();
            let mut seen: Vec<(i64, i64)> = Vec::new();
            for &di in &span {
                for &dj in &span {
                    let k = (wrap_cell(ci + di), wrap_cell(cj + dj));
                    if seen.contains(&k) {
                        continue;
                    }
                    seen.push(k);
                    let Some(list) = grid.get(&(piece, k.0, k.1)) else { continue };
                    for sref in list {
                        let bbr = &b.branches[sref.branch];
                        let Some(dq) = dom.displacement(&p, &bbr.images[sref.index]) else { continue };
                        let q = p + dq;
                        let s = dom.displacement(&bbr.images[sref.index], &bbr.images[sref.index + 1]).expect("non-break");
                        let sin = cross(&r, &s).abs() / (r.norm() * s.norm()).max(1e-300);
                        match segment_cross(&p, &r, &q, &s) {
                            Some((t, u)) => {
                                let pa_ = a.signed_param(abi, ai, t);
                                let pb_ = b.signed_param(sref.branch, sref.index, u);
                                let point = dom.wrap(&(p + r * t));
                                if shared_anchor && dom.distance(&point, &a.anchor) < 1e-8 {
                                    continue;
                                }
                                if sin < sin_min {
                                    out.push((None, Some(TangencySuspect { point, sin_angle: sin, distance: 0.0, params: [pa_, pb_] })));
                                    continue;
                                }
                                let (x, ra, rb) = refine_crossing(
                                    map,
                                    a,
                                    abi,
                                    (abr.params[ai], abr.params[ai + 1]),
                                    (abr.images[ai], abr.images[ai + 1]),
                                    b,
                                    sref.branch,
                                    (bbr.params[sref.index], bbr.params[sref.index + 1]),
                                    (bbr.images[sref.index], bbr.images[sref.index + 1]),
                                );
                                let sin_ref = cross(&ra, &rb).abs() / (ra.norm() * rb.norm()).max(1e-300);
                                let sin_final = if sin_ref.is_finite() && ra.norm() > 0.0 && rb.norm() > 0.0 { sin_ref } else { sin };
                                if sin_final < sin_min {
                                    out.push((None, Some(TangencySuspect { point: x, sin_angle: sin_final, distance: 0.0, params: [pa_, pb_] })));
                                    continue;
                                }
                                out.push((
                                    Some(IntersectionWitness { point: x, angle: sin_final.min(1.0).asin(), params: [pa_, pb_], iterate_offset: 0 }),
                                    None,
                                ));
                            }
                            None => {
                                if sin < sin_min {
                                    let d = segment_distance(&p, &r, &q, &s);
                                    if d < 0.1 * a.refine_tol.h.min(b.refine_tol.h) {
                                        out.push((
                                            None,
                                            Some(TangencySuspect {
                                                point: dom.wrap(&p),
                                                sin_angle: sin,
                                                distance: d,
                                                params: [a.signed_param(abi, ai, 0.0), b.signed_param(sref.branch, sref.index, 0.0)],
                                            }),
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut res = Intersections::default();
    for (w, s) in found.into_iter().flatten() {
        if let Some(w) = w {
            res.witnesses.push(w);
        }
        if let Some(s) = s {
            res.suspects.push(s);
        }
    }
    let by_params = |x: &[f64; 2], y: &[f64; 2]| x[0].total_cmp(&y[0]).then(x[1].total_cmp(&y[1]));
    res.witnesses.sort_by(|x, y| by_params(&x.params, &y.params));
    // a crossing through a shared polyline vertex is found from both sides
    res.witnesses.dedup_by(|x, y| dom.distance(&x.point, &y.point) < 1e-9 && (x.params[0] - y.params[0]).abs() < 1e-6);
    res.suspects.sort_by(|x, y| by_params(&x.params, &y.params));
    res
}

/// Hausdorff distance between the point sets of two curves (canonical
/// coordinates, domain metric), computed on polyline vertices.
pub fn hausdorff_distance(map: &SmoothMap2D, a: &ManifoldCurve, b: &ManifoldCurve) -> f64 {
    let dom = *map.domain();
    let pts = |c: &ManifoldCurve| -> Vec<Point> { c.branches.iter().flat_map(|br| br.images.iter().copied()).collect() };
    let (pa, pb) = (pts(a), pts(b));
    let one_sided = |from: &[Point], to: &[Point]| -> f64 {
        let cell = 1e-2;
        let mut grid: HashMap<(i64, i64), Vec<Point>> = HashMap::new();
        for q in to {
            grid.entry(bucket(q, cell)).or_default().push(*q);
        }
        from.par_iter()
            .map(|x| {
                let (ci, cj) = bucket(x, cell);
                let mut best = f64::INFINITY;
                let mut radius = 1;
                loop {
                    for di in -radius..=radius {
                        for dj in -radius..=radius {
                            if let Some(l) = grid.get(&(ci + di, cj + dj)) {
                                for q in l {
                                    best = best.min(dom.distance(x, q));
                                }
                            }
                        }
                    }
                    if best <= cell * radius as f64 || radius > 8 {
                        break;
                    }
                    radius *= 2;
                }
                if best.is_infinite() {
                    best = to.iter().map(|q| dom.distance(x, q)).fold(f64::INFINITY, f64::min);
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    };
    one_sided(&pa, &pb).max(one_sided(&pb, &pa))
}

/// Draws curves (canonical coordinates, split at breaks and wrap jumps) and
/// witness points.
pub fn render_svg(map: &SmoothMap2D, curves: &[&ManifoldCurve], witnesses: &[IntersectionWitness]) -> String {
    let (lo, hi) = map.sample_region();
    let mut svg = Svg::new(lo, hi, 600.0, 600.0 * (hi[1] - lo[1]) / (hi[0] - lo[0]).max(1e-9));
    let colors = ["#c0392b", "#2471a3", "#229954", "#7d3c98"];
    for (k, c) in curves.iter().enumerate() {
        let color = match c.kind {
            ManifoldKind::Unstable => colors[(2 * k) % 4],
            ManifoldKind::Stable => colors[(2 * k + 1) % 4],
        };
        for br in &c.branches {
            let mut run: Vec<[f64; 2]> = Vec::new();
            for i in 0..br.len() {
                let q = br.images[i];
                if let Some(last) = run.last() {
                    let jump = (q[0] - last[0]).abs() > 0.5 || (q[1] - last[1]).abs() > 0.5;
                    if jump || br.is_break(i - 1) {
                        svg.polyline(&run, color, 1.0);
                        run.clear();
                    }
                }
                run.push([q[0], q[1]]);
            }
            svg.polyline(&run, color, 1.0);
        }
    }
    for w in witnesses {
        svg.circle([w.point[0], w.point[1]], 2.5, "black");
    }
    svg.finish()
}
