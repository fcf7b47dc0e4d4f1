use hyperdyn::dynsys::models::*;
use hyperdyn::manifolds::{
    grow_manifold, hausdorff_distance, local_manifold, straight_segment, transverse_intersections, ManifoldCurve,
    ManifoldKind, RefineTol,
};
use hyperdyn::orbits::{find_periodic, PeriodicOrbit};
use hyperdyn::{Point, SmoothMap2D};

fn fixed_saddle(f: &SmoothMap2D) -> PeriodicOrbit {
    find_periodic(f, 1, 16).unwrap().into_iter().find(|o| o.is_saddle()).unwrap()
}

fn grown(f: &SmoothMap2D, o: &PeriodicOrbit, kind: ManifoldKind, len: f64) -> ManifoldCurve {
    let local = local_manifold(f, o, 0, kind, 0.01, RefineTol::default()).unwrap();
    grow_manifold(f, &local, len).unwrap()
}

/// Unit tangent of `c` at signed arclength `s`.
fn tangent(c: &ManifoldCurve, s: f64) -> Point {
    let br = c.branches.iter().find(|b| b.sign * s >= 0.0).unwrap();
    let a = s.abs();
    let i = br.arclength.windows(2).position(|w| w[0] <= a && a <= w[1]).unwrap_or(br.len() - 2);
    (br.points[i + 1] - br.points[i]).normalize()
}

/// Distance from `x` to the polyline of `c`, on the map's domain.
fn distance_to_curve(f: &SmoothMap2D, c: &ManifoldCurve, x: &Point) -> f64 {
    let dom = f.domain();
    let mut best = f64::INFINITY;
    for br in &c.branches {
        for i in 0..br.len().saturating_sub(1) {
            if br.is_break(i) {
                continue;
            }
            let (a, b) = (br.points[i], br.points[i + 1]);
            let Some(d) = dom.displacement(&dom.wrap(&a), x) else { continue };
            let r = b - a;
            let t = (d.dot(&r) / r.dot(&r)).clamp(0.0, 1.0);
            best = best.min((d - r * t).norm());
        }
    }
    best
}

#[test]
fn cat_unstable_curve_is_the_eigenline() {
    let f = cat_map();
    let o = fixed_saddle(&f);
    let c = grown(&f, &o, ManifoldKind::Unstable, 3.0);
    assert!(c.arclength() >= 3.0);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let e = Point::new(phi, 1.0).normalize();
    assert!(c.direction.dot(&e).abs() > 1.0 - 1e-12);
    let mut worst: f64 = 0.0;
    for br in &c.branches {
        let sign = br.sign * c.direction.dot(&e).signum();
        for (x, &s) in br.images().iter().zip(&br.arclength) {
            worst = worst.max(f.domain().distance(x, &f.domain().wrap(&(e * (sign * s)))));
        }
    }
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn witnesses_are_transverse_and_lie_on_both_curves() {
    for f in [cat_map(), perturbed_cat(0.05).unwrap()] {
        let o = fixed_saddle(&f);
        let u = grown(&f, &o, ManifoldKind::Unstable, 2.0);
        let s = grown(&f, &o, ManifoldKind::Stable, 2.0);
        let sin_min = 0.05;
        let hits = transverse_intersections(&f, &u, &s, sin_min);
        assert!(hits.witnesses.len() >= 4, "{}", hits.witnesses.len());
        for w in &hits.witnesses {
            assert!(w.angle.sin() >= sin_min);
            let (tu, ts) = (tangent(&u, w.params[0]), tangent(&s, w.params[1]));
            assert!((tu[0] * ts[1] - tu[1] * ts[0]).abs() >= sin_min * 0.9);
            // polylines sag from the true curve by about h·angle/8
            assert!(distance_to_curve(&f, &u, &w.point) < 2e-6);
            assert!(distance_to_curve(&f, &s, &w.point) < 2e-6);
        }
    }
}

#[test]
fn intersections_are_equivariant() {
    let f = perturbed_cat(0.05).unwrap();
    let o = fixed_saddle(&f);
    let len = 1.5;
    let u = grown(&f, &o, ManifoldKind::Unstable, len);
    let s = grown(&f, &o, ManifoldKind::Stable, len);
    // f stretches unstable arclength by at most about 3 and shrinks stable arclength
    let u_long = grown(&f, &o, ManifoldKind::Unstable, 4.0 * len);
    let hits = transverse_intersections(&f, &u, &s, 1e-3).witnesses;
    let later = transverse_intersections(&f, &u_long, &s, 1e-3).witnesses;
    assert!(!hits.is_empty());
    for w in &hits {
        let y = f.forward(&w.point);
        let d = later.iter().map(|v| f.domain().distance(&v.point, &y)).fold(f64::INFINITY, f64::min);
        assert!(d < 1e-8, "{:?} -> {:?}: {d:e}", w.point, y);
    }
}

#[test]
fn iterated_transversal_accumulates_on_the_unstable_curve() {
    let f = perturbed_cat(0.05).unwrap();
    let o = fixed_saddle(&f);
    let u = grown(&f, &o, ManifoldKind::Unstable, 1.5);
    let s = grown(&f, &o, ManifoldKind::Stable, 1.5);
    let w = transverse_intersections(&f, &u, &s, 0.1).witnesses.into_iter().max_by(|a, b| a.angle.total_cmp(&b.angle)).unwrap();
    let ts = tangent(&s, w.params[1]);
    let normal = Point::new(-ts[1], ts[0]);
    let disk = straight_segment(f.domain(), w.point, normal, 1e-3, 2e-5);
    let local_u = local_manifold(&f, &o, 0, ManifoldKind::Unstable, 0.2, RefineTol { angle: 0.01, h: 1e-4 }).unwrap();

    // each branch runs outward from the homoclinic point
    let mut halves: Vec<Vec<Point>> = disk.branches.iter().map(|b| b.images().to_vec()).collect();
    let mut dist = Vec::new();
    for n in 1..=14 {
        for h in &mut halves {
            *h = h.iter().map(|x| f.forward(x)).collect();
        }
        if n < 6 {
            continue;
        }
        // the piece of fⁿ(D) through fⁿ(q) inside the 0.05-ball about the saddle
        let inside = |x: &&Point| f.domain().distance(x, &o.points[0]) < 0.05;
        let near: Vec<&Point> = halves.iter().flat_map(|h| h.iter().take_while(inside)).collect();
        assert!(!near.is_empty(), "n = {n}");
        dist.push(near.iter().map(|x| distance_to_curve(&f, &local_u, x)).fold(0.0, f64::max));
    }
    for w in dist.windows(2) {
        assert!(w[1] < w[0] || w[1] < 1e-9, "{dist:?}");
    }
    assert!(*dist.last().unwrap() < 1e-5, "{dist:?}");
}

#[test]
fn growth_is_nested() {
    let f = classic_henon();
    let o = fixed_saddle(&f);
    let short = grown(&f, &o, ManifoldKind::Unstable, 1.0);
    let long = grown(&f, &o, ManifoldKind::Unstable, 2.0);
    let worst = short
        .branches
        .iter()
        .flat_map(|b| b.images().iter())
        .map(|x| distance_to_curve(&f, &long, x))
        .fold(0.0, f64::max);
    assert!(worst < 2e-6, "{worst:e}");
    assert!(hausdorff_distance(&f, &short, &short) == 0.0);
}
