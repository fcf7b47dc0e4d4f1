use hyperdyn::dynsys::models::*;
use hyperdyn::entropy::{
    katok_entropy, orbit_sample, spanning_count, tail_entropy, topological_entropy, uniform_sample, TailConfig,
};
use hyperdyn::orbits::lyapunov_orbit;
use hyperdyn::{Error, Point};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_bracket_a_monotone_spanning_number(
        seed in 0u64..10_000,
        eps in 0.04..0.2f64,
        shrink in 0.3..1.0f64,
        n in 1usize..6,
        extra in 0usize..3,
    ) {
        // lower(ε, n) ≤ r(ε, n) ≤ r(ε', n') ≤ upper(ε', n') for ε' ≤ ε, n' ≥ n
        let f = perturbed_cat(0.05).unwrap();
        let sample = uniform_sample(&f, 400, seed);
        let c = spanning_count(&f, &sample, eps, n).unwrap();
        prop_assert!(c.lower <= c.upper);
        let finer = spanning_count(&f, &sample, eps * shrink, n + extra).unwrap();
        prop_assert!(c.lower <= finer.upper, "{:?} vs {:?}", c, finer);
        prop_assert!(finer.lower <= finer.upper);
        prop_assert!(c.upper <= sample.len() && c.lower >= 1);
    }
}

#[test]
fn one_step_count_is_a_covering_number() {
    // at n = 1 the Bowen metric is the torus metric, and a grid of spacing
    // below ε is fully covered by balls around its points
    let f = cat_map();
    let k = 20;
    let grid: Vec<Point> = (0..k * k).map(|i| Point::new((i % k) as f64 / k as f64, (i / k) as f64 / k as f64)).collect();
    let c = spanning_count(&f, &grid, 0.3, 1).unwrap();
    assert!(c.upper >= 2 && c.upper <= 16, "{c:?}");
    assert!(spanning_count(&f, &grid, 2.0, 1).unwrap().upper == 1);
    assert!(matches!(spanning_count(&f, &grid, 0.3, 0), Err(Error::InvalidParams(_))));
}

#[test]
fn katok_entropy_is_at_most_topological_entropy() {
    let f = perturbed_cat(0.05).unwrap();
    let sample = uniform_sample(&f, 20_000, 3);
    let top = topological_entropy(&f, &sample, &[0.1], (1, 9)).unwrap();
    let orbit = orbit_sample(&f, &Point::new(0.123456789, 0.314159265), 60_000, 100).unwrap();
    let katok = katok_entropy(&f, &orbit, 0.1, (1, 8), 0.5).unwrap();
    assert!(katok.value <= top.value + 0.1, "{} > {}", katok.value, top.value);
    let l = lyapunov_orbit(&f, &Point::new(0.123456789, 0.314159265), 60_000).unwrap();
    assert!(katok.value <= l.exponents[1] + 0.02);
}

#[test]
fn isometries_have_zero_entropy() {
    for f in [rotation(0.7), translation([0.31, 0.57])] {
        let sample = uniform_sample(&f, 3000, 1);
        let e = topological_entropy(&f, &sample, &[0.1], (1, 10)).unwrap();
        assert!(e.value.abs() < 0.02, "{:?}: {}", f.family(), e.value);
    }
}

#[test]
fn cat_map_has_no_tail_entropy() {
    let f = cat_map();
    let probes = uniform_sample(&f, 2, 5);
    let cfg = TailConfig { ball_samples: 300, ..Default::default() };
    let tail = tail_entropy(&f, 0.05, &[0.02], (1, 6), &probes, &cfg).unwrap();
    assert!(tail.value <= 0.02, "{}", tail.value);
    assert!(tail_entropy(&f, 0.05, &[0.06], (1, 6), &probes, &cfg).is_err());
}

#[test]
fn invalid_scales_are_rejected() {
    let f = cat_map();
    let s = uniform_sample(&f, 100, 0);
    assert!(topological_entropy(&f, &s, &[0.05, 0.1], (1, 5)).is_err());
    assert!(topological_entropy(&f, &s, &[0.05], (5, 2)).is_err());
    let orbit = orbit_sample(&f, &Point::new(0.1, 0.2), 1000, 0).unwrap();
    assert!(katok_entropy(&f, &orbit, 0.1, (1, 5), 1.5).is_err());
    assert!(katok_entropy(&f, &orbit, 0.1, (1, 500), 0.5).is_err());
}
