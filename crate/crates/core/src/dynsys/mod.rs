//! Surface diffeomorphisms and the concrete model systems used throughout
//! the crate.
//!
//! A [`SmoothMap2D`] is immutable once built. Evaluation is pure, so a map can
//! be shared freely between worker threads.

mod sysfile;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sysfile::{parse_system, SystemSpec};

pub type Point = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Default cap on `|n|` for [`SmoothMap2D::iterate`].
pub const DEFAULT_MAX_ITERATES: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// The phase space a family lives on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// The plane, with a bounding box outside of which orbits count as escaped.
    Plane { lo: [f64; 2], hi: [f64; 2] },
    /// The unit torus R²/Z², canonical representatives in [0,1)².
    Torus,
    /// Two disjoint unit tori. Piece 0 is stored as [0,1)×[0,1), piece 1 as
    /// [2,3)×[0,1).
    TorusPair,
}

impl Domain {
    fn plane(lo: f64, hi: f64) -> Self {
        Domain::Plane { lo: [lo, lo], hi: [hi, hi] }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self, Domain::Plane { .. })
    }

    /// Canonical representative of `p`.
    pub fn wrap(&self, p: &Point) -> Point {
        match self {
            Domain::Plane { .. } => *p,
            Domain::Torus => Point::new(frac(p[0]), frac(p[1])),
            Domain::TorusPair => {
                let (piece, local) = pair_split(p);
                Point::new(2.0 * piece as f64 + frac(local[0]), frac(local[1]))
            }
        }
    }

    /// Shortest displacement `b - a`; `None` when the points lie on different
    /// connected pieces.
    pub fn displacement(&self, a: &Point, b: &Point) -> Option<Point> {
        match self {
            Domain::Plane { .. } => Some(b - a),
            Domain::Torus => Some(torus_delta(&(b - a))),
            Domain::TorusPair => {
                let (pa, la) = pair_split(a);
                let (pb, lb) = pair_split(b);
                (pa == pb).then(|| torus_delta(&(lb - la)))
            }
        }
    }

    /// Torus distance picks the shortest of the lattice translates.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        self.displacement(a, b).map_or(f64::INFINITY, |d| d.norm())
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Domain::Plane { lo, hi } => {
                p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]
            }
            _ => p[0].is_finite() && p[1].is_finite(),
        }
    }

    /// Piece index for [`Domain::TorusPair`], 0 otherwise.
    pub fn piece(&self, p: &Point) -> usize {
        match self {
            Domain::TorusPair => pair_split(p).0,
            _ => 0,
        }
    }
}

fn frac(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn torus_delta(d: &Point) -> Point {
    Point::new(d[0] - d[0].round(), d[1] - d[1].round())
}

fn pair_split(p: &Point) -> (usize, Point) {
    let q = ((p[0] + 0.5) / 2.0).floor();
    let piece = (q as i64).rem_euclid(2) as usize;
    (piece, Point::new(p[0] - 2.0 * q, p[1]))
}

/// Declared regularity of the map; `f64::INFINITY` for C^∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothness(pub f64);

impl Smoothness {
    pub const INFINITE: Smoothness = Smoothness(f64::INFINITY);

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }
}

/// The representable families.
///
/// `Linear`, `Translation` and `TwoPieceSwap` are the composite test beds
/// (plane linear maps, rigid torus translations and the two-torus swap).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    TorusLinear { matrix: [[f64; 2]; 2] },
    /// `A x + amplitude·(sin 2πy, sin 2πx)` on the torus.
    TorusPerturbed { matrix: [[f64; 2]; 2], amplitude: f64 },
    /// `(x, y) ↦ (1 − a x² + y, b x)`.
    Henon { a: f64, b: f64 },
    /// Two horizontal strips of height `1/expansion` in the unit square are
    /// stretched vertically by `expansion` and squeezed horizontally by
    /// `contraction` onto the left and right vertical strips. A nonzero
    /// `wobble` adds `wobble·sin(2πy)` to the horizontal image coordinate.
    AffineHorseshoe { contraction: f64, expansion: f64, wobble: f64 },
    /// Plane linear map (identity, rotations, diagonal maps ...).
    Linear { matrix: [[f64; 2]; 2] },
    /// Torus translation, an isometry.
    Translation { shift: [f64; 2] },
    /// `(piece, z) ↦ (1 − piece, A z mod 1)` on two disjoint tori.
    TwoPieceSwap { matrix: [[f64; 2]; 2] },
}

impl Family {
    /// Name as used in system-definition files.
    pub fn name(&self) -> &'static str {
        match self {
            Family::TorusLinear { .. } => "torus-linear",
            Family::TorusPerturbed { .. } => "torus-perturbed",
            Family::Henon { .. } => "henon",
            Family::AffineHorseshoe { .. } => "affine-horseshoe",
            _ => "custom-composite",
        }
    }

    pub fn variant(&self) -> Option<&'static str> {
        match self {
            Family::Linear { .. } => Some("linear"),
            Family::Translation { .. } => Some("translation"),
            Family::TwoPieceSwap { .. } => Some("two-piece-swap"),
            _ => None,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let flat = |m: &[[f64; 2]; 2]| vec![m[0][0], m[0][1], m[1][0], m[1][1]];
        match self {
            Family::TorusLinear { matrix }
            | Family::Linear { matrix }
            | Family::TwoPieceSwap { matrix } => flat(matrix),
            Family::TorusPerturbed { matrix, amplitude } => {
                let mut v = flat(matrix);
                v.push(*amplitude);
                v
            }
            Family::Henon { a, b } => vec![*a, *b],
            Family::AffineHorseshoe { contraction, expansion, wobble } => {
                vec![*contraction, *expansion, *wobble]
            }
            Family::Translation { shift } => shift.to_vec(),
        }
    }
}

fn mat(m: &[[f64; 2]; 2]) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// A surface diffeomorphism with analytic Jacobian.
#[derive(Clone, Debug)]
pub struct SmoothMap2D {
    family: Family,
    domain: Domain,
    smoothness: Smoothness,
    cache: Cached,
}

#[derive(Clone, Debug, Default)]
struct Cached {
    matrix: Mat2,
    matrix_inv: Mat2,
}

impl SmoothMap2D {
    pub fn new(family: Family, smoothness: Smoothness) -> Result<Self> {
        let domain = match &family {
            Family::TorusLinear { .. }
            | Family::TorusPerturbed { .. }
            | Family::Translation { .. } => Domain::Torus,
            Family::TwoPieceSwap { .. } => Domain::TorusPair,
            Family::Henon { .. } => Domain::plane(-20.0, 20.0),
            Family::AffineHorseshoe { .. } => Domain::plane(-1.0, 2.0),
            Family::Linear { .. } => Domain::plane(-1e6, 1e6),
        };
        Self::with_domain(family, domain, smoothness)
    }

    pub fn with_domain(family: Family, domain: Domain, smoothness: Smoothness) -> Result<Self> {
        if !(smoothness.0 >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "smoothness_r must be >= 1, got {}",
                smoothness.0
            )));
        }
        let mut cache = Cached::default();
        match &family {
            Family::TorusLinear { matrix } | Family::TwoPieceSwap { matrix } => {
                let m = mat(matrix);
                if matrix.iter().flatten().any(|v| v.fract() != 0.0) {
                    return Err(Error::InvalidParams("torus matrix must be integer".into()));
                }
                if m.determinant().abs() != 1.0 {
                    return Err(Error::NonInvertibleParams(format!(
                        "torus matrix determinant {} is not ±1",
                        m.determinant()
                    )));
                }
                cache.matrix = m;
                cache.matrix_inv = m.try_inverse().expect("unimodular");
            }
            Family::TorusPerturbed { matrix, amplitude } => {
                let m = mat(matrix);
                if matrix.iter().flatten().any(|v| v.fract() != 0.0) || m.determinant().abs() != 1.0
                {
                    return Err(Error::NonInvertibleParams(
                        "torus matrix must be integer with determinant ±1".into(),
                    ));
                }
                // det(A + εG) is bilinear in (cos 2πx, cos 2πy); its extremes sit at the corners.
                let k = 2.0 * PI * amplitude;
                let dets: Vec<f64> = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
                    .iter()
                    .map(|&(cx, cy)| (m + Mat2::new(0.0, k * cy, k * cx, 0.0)).determinant())
                    .collect();
                let one_sign = dets.iter().all(|d| d.signum() == dets[0].signum());
                let smallest = dets.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
                if !one_sign || smallest < 1e-3 {
                    return Err(Error::NonInvertibleParams(format!(
                        "perturbation amplitude {amplitude} lets the Jacobian degenerate"
                    )));
                }
                cache.matrix = m;
                cache.matrix_inv = m.try_inverse().expect("unimodular");
            }
            Family::Henon { b, .. } => {
                if *b == 0.0 {
                    return Err(Error::NonInvertibleParams("Hénon b = 0".into()));
                }
            }
            Family::AffineHorseshoe { contraction, expansion, wobble } => {
                if !(*contraction > 0.0 && *contraction < 0.5) {
                    return Err(Error::InvalidParams("contraction must lie in (0, 1/2)".into()));
                }
                if !(*expansion > 2.0) {
                    return Err(Error::InvalidParams("expansion must exceed 2".into()));
                }
                // The horizontal image coordinate must stay monotone: c > 0 always holds.
                if wobble.abs() * 2.0 * PI >= 1.0 {
                    return Err(Error::InvalidParams("wobble too large".into()));
                }
            }
            Family::Linear { matrix } => {
                let m = mat(matrix);
                let inv = m.try_inverse().ok_or_else(|| {
                    Error::NonInvertibleParams("singular linear map".into())
                })?;
                cache.matrix = m;
                cache.matrix_inv = inv;
            }
            Family::Translation { .. } => {}
        }
        Ok(Self { family, domain, smoothness, cache })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn evaluate(&self, x: &Point, direction: Direction) -> Point {
        match direction {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse(x),
        }
    }

    pub fn forward(&self, p: &Point) -> Point {
        let (x, y) = (p[0], p[1]);
        let raw = match &self.family {
            Family::TorusLinear { .. } | Family::Linear { .. } => self.cache.matrix * p,
            Family::TorusPerturbed { amplitude, .. } => {
                self.cache.matrix * p
                    + *amplitude * Point::new((2.0 * PI * y).sin(), (2.0 * PI * x).sin())
            }
            Family::Henon { a, b } => Point::new(1.0 - a * x * x + y, b * x),
            Family::AffineHorseshoe { contraction: c, expansion: e, wobble } => {
                let g = wobble * (2.0 * PI * y).sin();
                if y < 0.5 {
                    Point::new(c * x + g, e * y)
                } else {
                    Point::new(1.0 - c + c * x + g, e * (y - 1.0 + 1.0 / e))
                }
            }
            Family::Translation { shift } => Point::new(x + shift[0], y + shift[1]),
            Family::TwoPieceSwap { .. } => {
                let (piece, local) = pair_split(p);
                let img = self.cache.matrix * local;
                Point::new(2.0 * (1 - piece) as f64 + frac(img[0]), frac(img[1]))
            }
        };
        self.domain.wrap(&raw)
    }

    pub fn inverse(&self, p: &Point) -> Point {
        let (x, y) = (p[0], p[1]);
        let raw = match &self.family {
            Family::TorusLinear { .. } | Family::Linear { .. } => self.cache.matrix_inv * p,
            Family::TorusPerturbed { amplitude, .. } => self.perturbed_inverse(p, *amplitude),
            Family::Henon { a, b } => {
                let xp = y / b;
                Point::new(xp, x - 1.0 + a * xp * xp)
            }
            Family::AffineHorseshoe { contraction: c, expansion: e, wobble } => {
                if x < 0.5 {
                    let yp = y / e;
                    Point::new((x - wobble * (2.0 * PI * yp).sin()) / c, yp)
                } else {
                    let yp = 1.0 - 1.0 / e + y / e;
                    Point::new((x - 1.0 + c - wobble * (2.0 * PI * yp).sin()) / c, yp)
                }
            }
            Family::Translation { shift } => Point::new(x - shift[0], y - shift[1]),
            Family::TwoPieceSwap { .. } => {
                let (piece, local) = pair_split(p);
                let pre = self.cache.matrix_inv * local;
                Point::new(2.0 * (1 - piece) as f64 + frac(pre[0]), frac(pre[1]))
            }
        };
        self.domain.wrap(&raw)
    }

    /// Newton solve of `A x + εg(x) ≡ z (mod 1)` starting from `A⁻¹ z`.
    fn perturbed_inverse(&self, z: &Point, amplitude: f64) -> Point {
        let mut x = self.cache.matrix_inv * z;
        for _ in 0..60 {
            let fx = self.cache.matrix * x
                + amplitude * Point::new((2.0 * PI * x[1]).sin(), (2.0 * PI * x[0]).sin());
            let r = torus_delta(&(fx - z));
            if r.norm() < 1e-15 {
                break;
            }
            let j = self.jacobian(&x);
            let step = j.try_inverse().map(|ji| ji * r).unwrap_or(r);
            x -= step;
        }
        x
    }

    /// Analytic Jacobian Df at `p`.
    pub fn jacobian(&self, p: &Point) -> Mat2 {
        let (x, y) = (p[0], p[1]);
        match &self.family {
            Family::TorusLinear { .. } | Family::Linear { .. } | Family::TwoPieceSwap { .. } => {
                self.cache.matrix
            }
            Family::TorusPerturbed { amplitude, .. } => {
                let k = 2.0 * PI * amplitude;
                self.cache.matrix
                    + Mat2::new(0.0, k * (2.0 * PI * y).cos(), k * (2.0 * PI * x).cos(), 0.0)
            }
            Family::Henon { a, b } => Mat2::new(-2.0 * a * x, 1.0, *b, 0.0),
            Family::AffineHorseshoe { contraction: c, expansion: e, wobble } => {
                Mat2::new(*c, wobble * 2.0 * PI * (2.0 * PI * y).cos(), 0.0, *e)
            }
            Family::Translation { .. } => Mat2::identity(),
        }
    }

    /// Jacobian of f⁻¹ at `p`, i.e. `Df(f⁻¹(p))⁻¹`.
    pub fn inverse_jacobian(&self, p: &Point) -> Mat2 {
        let pre = self.inverse(p);
        self.jacobian(&pre).try_inverse().expect("diffeomorphism has invertible Jacobian")
    }

    /// Orbit segment `x, f(x), …, f^n(x)` (or the inverse branch for `n < 0`),
    /// capped at [`DEFAULT_MAX_ITERATES`].
    pub fn iterate(&self, x: &Point, n: i64) -> Result<OrbitSegment> {
        self.iterate_capped(x, n, DEFAULT_MAX_ITERATES)
    }

    pub fn iterate_capped(&self, x: &Point, n: i64, cap: u64) -> Result<OrbitSegment> {
        if n.unsigned_abs() > cap {
            return Err(Error::TooManyIterations { requested: n.unsigned_abs(), cap });
        }
        if !self.domain.contains(x) {
            return Err(Error::escape(0, x));
        }
        let dir = if n >= 0 { Direction::Forward } else { Direction::Inverse };
        let mut points = Vec::with_capacity(n.unsigned_abs() as usize + 1);
        let mut cur = self.domain.wrap(x);
        points.push(cur);
        for k in 1..=n.abs() {
            cur = self.evaluate(&cur, dir);
            if !self.domain.contains(&cur) {
                return Err(Error::escape(k * n.signum(), &cur));
            }
            points.push(cur);
        }
        if n < 0 {
            points.reverse();
        }
        Ok(OrbitSegment { points, start_index: n.min(0) })
    }

    /// Df^n at `x` along the forward orbit (`n ≥ 0`) as an ordered product.
    pub fn jacobian_power(&self, x: &Point, n: usize) -> Mat2 {
        let mut acc = Mat2::identity();
        let mut cur = *x;
        for _ in 0..n {
            acc = self.jacobian(&cur) * acc;
            cur = self.forward(&cur);
        }
        acc
    }

    /// Box from which test points are sampled: the unit square for torus-like
    /// domains, the two strips for the horseshoe, a box around the attractor
    /// for Hénon.
    pub fn sample_region(&self) -> ([f64; 2], [f64; 2]) {
        match &self.family {
            Family::Henon { .. } => ([-1.5, -0.45], [1.5, 0.45]),
            Family::AffineHorseshoe { .. } => ([0.0, 0.0], [1.0, 1.0]),
            Family::Linear { .. } => ([-1.0, -1.0], [1.0, 1.0]),
            Family::TwoPieceSwap { .. } => ([0.0, 0.0], [3.0, 1.0]),
            _ => ([0.0, 0.0], [1.0, 1.0]),
        }
    }
}

/// Consecutive points of an orbit; `points[0]` is the iterate at time
/// `start_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub points: Vec<Point>,
    pub start_index: i64,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest `d(f(x_i), x_{i+1})` along the segment.
    pub fn defect(&self, map: &SmoothMap2D) -> f64 {
        self.points
            .windows(2)
            .map(|w| map.domain().distance(&map.forward(&w[0]), &w[1]))
            .fold(0.0, f64::max)
    }
}

/// Ready-made model systems.
pub mod models {
    use super::*;

    pub fn cat_map() -> SmoothMap2D {
        torus_linear([[2.0, 1.0], [1.0, 1.0]])
    }

    pub fn torus_linear(matrix: [[f64; 2]; 2]) -> SmoothMap2D {
        SmoothMap2D::new(Family::TorusLinear { matrix }, Smoothness::INFINITE)
            .expect("valid torus automorphism")
    }

    pub fn perturbed_cat(amplitude: f64) -> Result<SmoothMap2D> {
        SmoothMap2D::new(
            Family::TorusPerturbed { matrix: [[2.0, 1.0], [1.0, 1.0]], amplitude },
            Smoothness::INFINITE,
        )
    }

    pub fn henon(a: f64, b: f64) -> Result<SmoothMap2D> {
        SmoothMap2D::new(Family::Henon { a, b }, Smoothness::INFINITE)
    }

    pub fn classic_henon() -> SmoothMap2D {
        henon(1.4, 0.3).expect("b != 0")
    }

    pub fn affine_horseshoe(contraction: f64, expansion: f64) -> SmoothMap2D {
        perturbed_horseshoe(contraction, expansion, 0.0)
    }

    pub fn perturbed_horseshoe(contraction: f64, expansion: f64, wobble: f64) -> SmoothMap2D {
        SmoothMap2D::new(
            Family::AffineHorseshoe { contraction, expansion, wobble },
            Smoothness::INFINITE,
        )
        .expect("valid horseshoe parameters")
    }

    pub fn linear(matrix: [[f64; 2]; 2]) -> SmoothMap2D {
        SmoothMap2D::new(Family::Linear { matrix }, Smoothness::INFINITE)
            .expect("invertible matrix")
    }

    pub fn identity() -> SmoothMap2D {
        linear([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn rotation(angle: f64) -> SmoothMap2D {
        let (s, c) = angle.sin_cos();
        linear([[c, -s], [s, c]])
    }

    pub fn translation(shift: [f64; 2]) -> SmoothMap2D {
        SmoothMap2D::new(Family::Translation { shift }, Smoothness::INFINITE).expect("always valid")
    }

    pub fn two_piece_swap() -> SmoothMap2D {
        SmoothMap2D::new(
            Family::TwoPieceSwap { matrix: [[2.0, 1.0], [1.0, 1.0]] },
            Smoothness::INFINITE,
        )
        .expect("valid")
    }
}

/// Checks that Df maps the cone of half-angle `alpha` around the unstable
/// eigendirection of `A` strictly into itself at every point of an `n×n`
/// grid, for a perturbed torus map. Returns the worst image angle.
pub fn perturbed_cone_check(map: &SmoothMap2D, n: usize, alpha: f64) -> Option<f64> {
    let Family::TorusPerturbed { matrix, .. } = map.family() else {
        return None;
    };
    let m = mat(matrix);
    let eig = m.symmetric_eigen();
    let idx = if eig.eigenvalues[0].abs() > eig.eigenvalues[1].abs() { 0 } else { 1 };
    let axis: Point = eig.eigenvectors.column(idx).into();
    let axis_angle = axis[1].atan2(axis[0]);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = Point::new((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            let jac = map.jacobian(&p);
            for s in [-1.0, 1.0] {
                let v = Point::new((axis_angle + s * alpha).cos(), (axis_angle + s * alpha).sin());
                let w = jac * v;
                let ang = (w.dot(&axis) / w.norm()).abs().min(1.0).acos();
                worst = worst.max(ang);
            }
        }
    }
    (worst < alpha).then_some(worst)
}

#[cfg(test)]
mod tests {
    use super::models::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Point, b: &Point, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn cat_map_examples() {
        let f = cat_map();
        assert!(close(&f.forward(&Point::new(0.0, 0.0)), &Point::new(0.0, 0.0), 1e-15));
        assert!(close(&f.forward(&Point::new(0.5, 0.5)), &Point::new(0.5, 0.0), 1e-15));
        assert_eq!(f.jacobian(&Point::new(0.3, 0.9)), Mat2::new(2.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn henon_fixed_point_is_fixed() {
        let f = classic_henon();
        let (a, b) = (1.4f64, 0.3f64);
        let xs = (-(1.0 - b) + ((1.0 - b) * (1.0 - b) + 4.0 * a).sqrt()) / (2.0 * a);
        let p = Point::new(xs, b * xs);
        assert!(close(&f.forward(&p), &p, 1e-14));
        let j = f.jacobian(&Point::new(0.7, -0.2));
        assert_eq!(j, Mat2::new(-2.0 * 1.4 * 0.7, 1.0, 0.3, 0.0));
    }

    #[test]
    fn henon_b_zero_rejected() {
        assert!(matches!(henon(1.4, 0.0), Err(Error::NonInvertibleParams(_))));
    }

    #[test]
    fn identity_jacobian() {
        assert_eq!(identity().jacobian(&Point::new(0.1, 0.2)), Mat2::identity());
    }

    #[test]
    fn iterate_examples() {
        let seg = cat_map().iterate(&Point::new(0.0, 0.0), 5).unwrap();
        assert_eq!(seg.len(), 6);
        assert!(seg.points.iter().all(|p| p.norm() == 0.0));

        let err = classic_henon().iterate(&Point::new(10.0, 10.0), 5).unwrap_err();
        assert_eq!(err.name(), "Escape");

        // (0.5, 0.5) is in the gap between the strips and is thrown out.
        let err = affine_horseshoe(1.0 / 3.0, 3.0).iterate(&Point::new(0.5, 0.5), 50).unwrap_err();
        assert_eq!(err.name(), "Escape");

        let back = cat_map().iterate(&Point::new(0.2, 0.7), -3).unwrap();
        assert_eq!(back.start_index, -3);
        assert!(close(&back.points[3], &Point::new(0.2, 0.7), 1e-15));
        assert!(back.defect(&cat_map()) < 1e-12);
    }

    #[test]
    fn iterate_cap_enforced() {
        let err = cat_map().iterate_capped(&Point::new(0.1, 0.1), 11, 10).unwrap_err();
        assert_eq!(err.name(), "TooManyIterations");
    }

    #[test]
    fn torus_linear_matches_matrix_power() {
        let f = cat_map();
        let x = Point::new(0.123, 0.456);
        let seg = f.iterate(&x, 12).unwrap();
        let mut a = Mat2::identity();
        for k in 0..=12 {
            // rounding grows like λ^k
            let expect = Domain::Torus.wrap(&(a * x));
            assert!(Domain::Torus.distance(&seg.points[k], &expect) < 1e-15 * 7f64.powi(k as i32) + 1e-15);
            a *= Mat2::new(2.0, 1.0, 1.0, 1.0);
        }
    }

    #[test]
    fn henon_determinant_is_minus_b() {
        let f = classic_henon();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = Point::new(rng.gen_range(-1.5..1.5), rng.gen_range(-0.4..0.4));
            assert!((f.jacobian(&p).determinant() + 0.3).abs() < 1e-15);
        }
    }

    fn all_families() -> Vec<SmoothMap2D> {
        vec![
            cat_map(),
            perturbed_cat(0.05).unwrap(),
            classic_henon(),
            affine_horseshoe(1.0 / 3.0, 3.0),
            perturbed_horseshoe(1.0 / 3.0, 3.0, 0.03),
            rotation(0.7),
            linear([[2.0, 0.0], [0.0, 0.5]]),
            translation([0.3, 0.1]),
            two_piece_swap(),
        ]
    }

    fn random_point(f: &SmoothMap2D, rng: &mut ChaCha8Rng) -> Point {
        let (lo, hi) = f.sample_region();
        loop {
            let p = Point::new(rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]));
            match f.family() {
                // stay inside the two strips, away from the branch switch
                Family::AffineHorseshoe { expansion, .. } => {
                    let h = 1.0 / expansion;
                    if p[1] < h || p[1] > 1.0 - h {
                        return p;
                    }
                }
                Family::TwoPieceSwap { .. } => {
                    if p[0] < 1.0 || p[0] >= 2.0 {
                        return p;
                    }
                }
                _ => return p,
            }
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in all_families() {
            for _ in 0..1000 {
                let p = f.domain().wrap(&random_point(&f, &mut rng));
                let q = f.inverse(&f.forward(&p));
                assert!(f.domain().distance(&p, &q) < 1e-10, "{:?} at {p:?}", f.family());
                let r = f.forward(&f.inverse(&p));
                if !matches!(f.family(), Family::AffineHorseshoe { .. }) {
                    assert!(f.domain().distance(&p, &r) < 1e-10, "{:?} at {p:?}", f.family());
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for f in all_families() {
            for _ in 0..200 {
                let p = random_point(&f, &mut rng);
                // keep stencils on one side of the horseshoe branch cut and the torus seam
                let j = f.jacobian(&p);
                let mut fd = Mat2::zeros();
                for c in 0..2 {
                    let mut e = Point::zeros();
                    e[c] = h;
                    let d = f
                        .domain()
                        .displacement(&f.forward(&(p - e)), &f.forward(&(p + e)))
                        .unwrap();
                    fd.set_column(c, &(d / (2.0 * h)));
                }
                let rel = (fd - j).norm() / j.norm().max(1.0);
                assert!(rel < 1e-5, "{:?}: rel err {rel}", f.family());
            }
        }
    }

    #[test]
    fn torus_wrap_canonical() {
        let f = cat_map();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let q = f.forward(&p);
            assert!((0.0..1.0).contains(&q[0]) && (0.0..1.0).contains(&q[1]));
        }
    }

    #[test]
    fn torus_distance_uses_nearest_translate() {
        let d = Domain::Torus.distance(&Point::new(0.95, 0.02), &Point::new(0.05, 0.98));
        assert!((d - (0.1f64.powi(2) + 0.04f64.powi(2)).sqrt()).abs() < 1e-12);
        assert!(Domain::TorusPair.distance(&Point::new(0.5, 0.5), &Point::new(2.5, 0.5)).is_infinite());
    }

    #[test]
    fn perturbed_amplitude_validation_and_cone() {
        let f = perturbed_cat(0.05).unwrap();
        assert!(perturbed_cone_check(&f, 64, 0.5).is_some());
        assert!(perturbed_cat(0.2).is_err());
    }
}
