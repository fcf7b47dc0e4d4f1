use hyperdyn::dynsys::models::*;
use hyperdyn::lamination::{
    box_dimension, holonomy, holonomy_refinement, horizontal_leaves, transverse_dimension,
    transverse_dimension_with, unstable_lamination, BoxConfig, Lamination, Leaf, SardModel, Transversal,
    MIN_CROSSINGS,
};
use hyperdyn::manifolds::ManifoldKind;
use hyperdyn::shadowing::{symbolic_horseshoe, HorseshoeConfig};
use hyperdyn::shift::full_shift;
use hyperdyn::{Error, Point, SmoothMap2D};
use proptest::prelude::*;

fn affine_lamination(f: &SmoothMap2D) -> Lamination {
    let cfg = HorseshoeConfig { samples: 400, sample_len: 80, ..Default::default() };
    let hs = symbolic_horseshoe(f, vec![Point::new(0.0, 0.0), Point::new(1.0, 1.0)], full_shift(2), &cfg).unwrap();
    unstable_lamination(f, &hs, 0.6).unwrap()
}

fn horizontal(y: f64) -> Transversal {
    Transversal::segment(Point::new(-0.05, y), Point::new(1.05, y))
}

/// Non-crossing straight leaves from `(x_i, 0)` to `(x′_i, 1)`.
fn fan() -> impl Strategy<Value = Lamination> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 3..40).prop_map(|mut ends| {
        let (mut a, mut b): (Vec<f64>, Vec<f64>) = ends.drain(..).unzip();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let leaves = a.iter().zip(&b).map(|(&x0, &x1)| Leaf::segment(Point::new(x0, 0.0), Point::new(x1, 1.0))).collect();
        Lamination::synthetic(ManifoldKind::Unstable, leaves)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn holonomy_and_its_inverse_multiply_past_one(lam in fan(), y0 in 0.05..0.45f64, y1 in 0.55..0.95f64) {
        let tau = Transversal::segment(Point::new(-0.1, y0), Point::new(1.1, y0));
        let tau2 = Transversal::segment(Point::new(-0.1, y1), Point::new(1.1, y1));
        match holonomy(&lam, &tau, &tau2, 0.05) {
            Ok(h) => {
                prop_assert!(h.lipschitz * h.inverse_lipschitz >= 1.0 - 1e-9);
                prop_assert!(h.pairs.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].2 <= w[1].2));
            }
            Err(Error::TooFewPoints { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

#[test]
fn affine_holonomy_is_an_isometry() {
    let f = affine_horseshoe(1.0 / 3.0, 3.0);
    let lam = affine_lamination(&f);
    let rep = holonomy_refinement(&lam, &horizontal(0.1), &horizontal(0.4), 0.1, 3).unwrap();
    assert!((rep.lipschitz - 1.0).abs() < 1e-6, "{rep:?}");
    assert!(rep.converged);
    let last = rep.levels.last().unwrap();
    assert!(last.lipschitz * last.inverse_lipschitz >= 1.0 - 1e-9);
}

#[test]
fn affine_transverse_dimension_is_transversal_independent_and_scale_stable() {
    let f = affine_horseshoe(1.0 / 3.0, 3.0);
    let lam = affine_lamination(&f);
    let moran = 2f64.ln() / 3f64.ln();
    let a = transverse_dimension(&lam, &horizontal(0.5)).unwrap().value;
    let b = transverse_dimension(&lam, &horizontal(0.27)).unwrap().value;
    assert!((a - b).abs() < 0.05, "{a} vs {b}");
    assert!((a - moran).abs() < 0.05, "{a}");
    let finer = BoxConfig { max_exp: 13, ..Default::default() };
    let c = transverse_dimension_with(&lam, &horizontal(0.5), &finer).unwrap().value;
    assert!((c - a).abs() < 0.03, "{c} vs {a}");
}

#[test]
fn filling_lamination_has_dimension_one() {
    let n = 4096;
    let heights: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let lam = horizontal_leaves(&heights, [0.0, 1.0]);
    let tau = Transversal::segment(Point::new(0.5, -0.01), Point::new(0.5, 1.01));
    let d = transverse_dimension(&lam, &tau).unwrap();
    assert!((d.value - 1.0).abs() <= 0.02, "{}", d.value);
    assert_eq!(d.distinct, n);
}

#[test]
fn single_leaf_has_dimension_zero() {
    let mut lam = horizontal_leaves(&[0.5], [0.0, 1.0]);
    let tau = Transversal::segment(Point::new(0.5, 0.0), Point::new(0.5, 1.0));
    assert!(matches!(transverse_dimension(&lam, &tau), Err(Error::TooFewPoints { .. })));
    lam.leaves[0].weight = MIN_CROSSINGS;
    assert_eq!(transverse_dimension(&lam, &tau).unwrap().value, 0.0);
    let one = BoxConfig { min_points: 1, ..Default::default() };
    assert_eq!(box_dimension(&[0.25], &one).unwrap().value, 0.0);
}

#[test]
fn parallel_transversal_is_rejected() {
    let heights: Vec<f64> = (0..1200).map(|i| i as f64 / 1200.0).collect();
    let lam = horizontal_leaves(&heights, [0.0, 1.0]);
    let tilted = Transversal::segment(Point::new(0.0, 0.0), Point::new(1.0, 0.001));
    assert!(matches!(transverse_dimension(&lam, &tilted), Err(Error::NotTransverse(_))));
}

#[test]
fn sard_model_rejects_low_smoothness() {
    assert!(SardModel::new(1.0).is_err());
    assert!(SardModel::new(f64::INFINITY).is_err());
    let m = SardModel::new(2.0).unwrap();
    assert!(m.height_ratio() < 0.45 && m.expected_dimension() > 0.0 && m.expected_dimension() < 1.0);
}
