//! Small numeric helpers shared by the estimators.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::dynsys::{Mat2, Point};

/// Ordinary least-squares line through `(x, y)` samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return LinearFit {
            slope: 0.0,
            intercept: ys.first().copied().unwrap_or(0.0),
            r_squared: 0.0,
            residuals: vec![0.0; xs.len()],
        };
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    // A perfectly flat response is a perfect fit of a zero slope.
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit { slope, intercept, r_squared, residuals }
}

/// Eigenvalues of a real 2×2 matrix, ordered by increasing modulus.
pub fn eigenvalues2(m: &Mat2) -> [Complex<f64>; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr / 4.0 - det;
    let (a, b) = if disc >= 0.0 {
        let s = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = tr / 2.0 + s.copysign(tr);
        let small = if big != 0.0 { det / big } else { tr / 2.0 - s.copysign(tr) };
        (Complex::new(small, 0.0), Complex::new(big, 0.0))
    } else {
        let im = (-disc).sqrt();
        (Complex::new(tr / 2.0, -im), Complex::new(tr / 2.0, im))
    };
    if a.norm() <= b.norm() {
        [a, b]
    } else {
        [b, a]
    }
}

/// Unit eigenvector of a real 2×2 matrix for the real eigenvalue `lambda`.
pub fn eigenvector2(m: &Mat2, lambda: f64) -> Point {
    let a = m - Mat2::identity() * lambda;
    // Null vector of a rank-one matrix: orthogonal to its largest row.
    let r0 = Point::new(a[(0, 0)], a[(0, 1)]);
    let r1 = Point::new(a[(1, 0)], a[(1, 1)]);
    let r = if r0.norm() >= r1.norm() { r0 } else { r1 };
    if r.norm() == 0.0 {
        return Point::new(1.0, 0.0);
    }
    let v = Point::new(-r[1], r[0]).normalize();
    canonical_direction(v)
}

/// Orientation convention for directions: positive x, or positive y when
/// vertical.
pub fn canonical_direction(v: Point) -> Point {
    if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
        -v
    } else {
        v
    }
}

/// Unsigned angle in `[0, π/2]` between the lines spanned by `a` and `b`.
pub fn line_angle(a: &Point, b: &Point) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let cross = (a[0] * b[1] - a[1] * b[0]).abs() / (na * nb);
    let dot = a.dot(b).abs() / (na * nb);
    cross.atan2(dot)
}

pub fn cross(a: &Point, b: &Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Greatest common divisor.
pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cat_eigendata() {
        let a = Mat2::new(2.0, 1.0, 1.0, 1.0);
        let [s, u] = eigenvalues2(&a);
        let phi2 = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((u.re - phi2).abs() < 1e-14 && (s.re - 1.0 / phi2).abs() < 1e-14);
        let v = eigenvector2(&a, u.re);
        assert!((v[1] / v[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_eigenvalues_unit_modulus() {
        let (s, c) = 0.4f64.sin_cos();
        let [a, b] = eigenvalues2(&Mat2::new(c, -s, s, c));
        assert!((a.norm() - 1.0).abs() < 1e-14 && (b.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn angles() {
        assert!((line_angle(&Point::new(1.0, 0.0), &Point::new(0.0, 2.0)) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(line_angle(&Point::new(1.0, 1.0), &Point::new(-2.0, -2.0)) < 1e-15);
        assert_eq!(gcd(12, 18), 6);
    }
}
