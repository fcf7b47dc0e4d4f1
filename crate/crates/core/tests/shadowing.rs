use hyperdyn::dynsys::models::*;
use hyperdyn::entropy::uniform_sample;
use hyperdyn::homoclinic::{smale_edge, GrowthBudget};
use hyperdyn::orbits::find_periodic;
use hyperdyn::shadowing::{
    build_horseshoe, endpoint_mismatch, pseudo_orbit_graph, shadow, symbolic_horseshoe, Connection, HorseshoeConfig,
    ShadowConfig,
};
use hyperdyn::shift::{full_shift, gurevich_entropy, PerronConfig};
use hyperdyn::{Point, SmoothMap2D};
use proptest::prelude::*;

const VERTS: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 1.0]];

fn coded_path(code: &[usize]) -> Vec<Point> {
    code.iter().map(|&c| Point::from(VERTS[c])).collect()
}

fn wobbly() -> SmoothMap2D {
    perturbed_horseshoe(0.25, 3.0, 0.03)
}

fn closed_code() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..2, 2..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shadowing_commutes_with_the_shift(code in closed_code()) {
        let f = wobbly();
        let cfg = ShadowConfig::default();
        let x = shadow(&f, &coded_path(&code), true, &cfg).unwrap();
        let mut shifted = code.clone();
        shifted.rotate_left(1);
        let y = shadow(&f, &coded_path(&shifted), true, &cfg).unwrap();
        let d = f.domain().distance(&f.forward(&x.point), &y.point);
        prop_assert!(d <= 2.0 * x.residual.max(y.residual) + 1e-12, "{d:e}");
        prop_assert!(x.residual <= cfg.tol);
    }

    #[test]
    fn distinct_codes_separate(a in closed_code(), flip in 0usize..24) {
        let f = wobbly();
        let cfg = ShadowConfig::default();
        let k = flip % a.len();
        let mut b = a.clone();
        b[k] ^= 1;
        let x = shadow(&f, &coded_path(&a), true, &cfg).unwrap();
        let y = shadow(&f, &coded_path(&b), true, &cfg).unwrap();
        // the two branches of the horseshoe are 1 − 2·0.25 apart horizontally
        let sep = f.domain().distance(&x.orbit[k], &y.orbit[k]);
        prop_assert!(sep > 0.5 * (1.0 - 2.0 * 0.25), "{sep}");
    }

    #[test]
    fn transition_graph_matches_its_predicate(seed in 0u64..1000, eps in 0.05..0.3f64) {
        let f = cat_map();
        let pts = uniform_sample(&f, 60, seed);
        let g = pseudo_orbit_graph(&f, &pts, eps);
        prop_assert!(g.edges_match_predicate(&f));
        for u in 0..g.len() {
            prop_assert!(g.graph.successors(u).iter().all(|&v| g.jump(&f, u, v) < eps));
        }
    }
}

#[test]
fn symbolic_horseshoe_samples_are_orbits() {
    let f = wobbly();
    let cfg = HorseshoeConfig { samples: 50, sample_len: 60, ..Default::default() };
    let hs = symbolic_horseshoe(&f, VERTS.iter().map(|&v| Point::from(v)).collect(), full_shift(2), &cfg).unwrap();
    assert!((hs.entropy - 2f64.ln()).abs() < 1e-12);
    for s in &hs.samples {
        assert!(s.residual < 1e-9);
        assert!(s.distance <= hs.delta);
        for k in 0..s.orbit.len() - 1 {
            assert!(f.domain().distance(&f.forward(&s.orbit[k]), &s.orbit[k + 1]) < 1e-9);
        }
    }
    assert!(hs.certificate.is_some_and(|c| c.kappa > 0.0 && c.cone_contraction < 1.0));
}

#[test]
fn horseshoe_entropy_grows_with_the_window() {
    let f = cat_map();
    let o = find_periodic(&f, 1, 16).unwrap().remove(0);
    let w = smale_edge(&f, &o, &o, GrowthBudget::default()).unwrap().unwrap();
    let saddles = vec![o];
    let conn = [Connection { from: 0, to: 0, point: w.point, offset: 0 }];
    let m0 = 10;
    let epsilon = 2.2 * endpoint_mismatch(&f, &saddles, &conn, m0).unwrap();
    let mut last = 0.0;
    for m in m0..=14 {
        assert!(endpoint_mismatch(&f, &saddles, &conn, m).unwrap() < epsilon / 2.0);
        let cfg = HorseshoeConfig { m, epsilon, samples: 10, sample_len: 30, ..Default::default() };
        let hs = build_horseshoe(&f, &saddles, &conn, &cfg).unwrap();
        let h = gurevich_entropy(&hs.graph.graph, &PerronConfig::default()).unwrap().value;
        assert!(h >= last - 1e-12, "m = {m}: {h} < {last}");
        last = h;
    }
    assert!(last > 0.2);
}
