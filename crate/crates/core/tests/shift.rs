use hyperdyn::shift::{
    cyclic_classes, golden_mean, gurevich_entropy, markov_entropy, mme_census, parry_measure, perron_pair,
    scc_decompose, stationary_vector, MarkovGraph, PerronConfig, TIE_TOLERANCE,
};
use nalgebra::{DMatrix, Schur};
use proptest::prelude::*;

/// Spectral radius from the full complex spectrum. Francis QR can stall on
/// permutation-like matrices, so a stalled attempt is retried on an
/// orthogonally conjugated copy, which has the same spectrum.
fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    for attempt in 0..8u32 {
        let q = if attempt == 0 {
            DMatrix::identity(n, n)
        } else {
            let r = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 13 + 1) as f64 * (attempt as f64 + 0.61)).sin());
            r.qr().q()
        };
        let conj = &q * m * q.transpose();
        if let Some(s) = Schur::try_new(conj, f64::EPSILON, 20_000) {
            return s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
    }
    panic!("Schur iteration did not converge");
}

fn log_radius(m: &DMatrix<f64>) -> f64 {
    spectral_radius(m).ln()
}

/// An irreducible graph: the cycle 0 → 1 → … → n−1 → 0 plus extra edges.
fn irreducible() -> impl Strategy<Value = MarkovGraph> {
    (2usize..16).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 1..3 * n).prop_map(move |extra| {
            MarkovGraph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)).chain(extra))
        })
    })
}

/// An irreducible graph of period exactly `ell`: vertex `v` lies in class
/// `v mod ℓ` and every edge goes from class `r` to class `r + 1`.
fn periodic() -> impl Strategy<Value = (usize, MarkovGraph)> {
    (2usize..5, 2usize..5).prop_flat_map(|(ell, per)| {
        let n = ell * per;
        prop::collection::vec((0..n, 0..per), 1..3 * n).prop_map(move |extra| {
            let mut edges: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
            // the short loop 0 → … → ℓ−1 → 0 pins the gcd of loop lengths at ℓ
            edges.push((ell - 1, 0));
            for (u, k) in extra {
                let r = (u + 1) % ell;
                edges.push((u, (r + ell * k) % n));
            }
            (ell, MarkovGraph::from_edges(n, edges))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parry_entropy_equals_gurevich_entropy(g in irreducible()) {
        let cfg = PerronConfig::default();
        let h = gurevich_entropy(&g, &cfg).unwrap().value;
        let mu = parry_measure(&g, &cfg).unwrap();
        prop_assert!((mu.entropy - h).abs() < 1e-9, "{} vs {}", mu.entropy, h);
        prop_assert!((h - log_radius(&g.adjacency_matrix())).abs() < 1e-9);
        prop_assert!(mu.supported_on(&g));
        prop_assert!(mu.stationarity_defect() < 1e-12 && mu.max_row_defect() < 1e-12);
    }

    #[test]
    fn perturbing_the_parry_measure_lowers_entropy(g in irreducible(), row in 0usize..16, size in 0.002..0.01f64) {
        let cfg = PerronConfig::default();
        let mu = parry_measure(&g, &cfg).unwrap();
        let rows: Vec<usize> = (0..g.len()).filter(|&v| g.successors(v).len() >= 2).collect();
        prop_assume!(!rows.is_empty());
        let i = rows[row % rows.len()];
        let (a, b) = (g.successors(i)[0], g.successors(i)[1]);
        let mut p = mu.transition.clone();
        let d = size.min(0.5 * p[i][b]);
        p[i][a] += d;
        p[i][b] -= d;
        let pi = stationary_vector(&p).unwrap();
        let h = markov_entropy(&p, &pi);
        prop_assert!(h < mu.entropy - 1e-12, "{} !< {}", h, mu.entropy);
    }

    #[test]
    fn census_maximizers_are_exactly_the_top_components(blocks in prop::collection::vec(irreducible(), 1..4), bridges in prop::collection::vec((0usize..64, 0usize..64), 0..4), dup in any::<bool>()) {
        // disjoint union of blocks, optionally with one block repeated, joined
        // by one-way bridges from earlier to later blocks
        let mut blocks = blocks;
        if dup {
            blocks.push(blocks[0].clone());
        }
        let offsets: Vec<usize> = blocks.iter().scan(0, |s, b| { let o = *s; *s += b.len(); Some(o) }).collect();
        let n: usize = blocks.iter().map(MarkovGraph::len).sum();
        let mut edges: Vec<(usize, usize)> = blocks.iter().zip(&offsets).flat_map(|(b, &o)| b.edges().map(move |(u, v)| (u + o, v + o))).collect();
        for (x, y) in bridges {
            let (bi, bj) = (x % blocks.len(), y % blocks.len());
            if bi < bj {
                edges.push((offsets[bi], offsets[bj]));
            }
        }
        let g = MarkovGraph::from_edges(n, edges);
        let census = mme_census(&g, &PerronConfig::default()).unwrap();
        let h: Vec<f64> = blocks.iter().map(|b| log_radius(&b.adjacency_matrix())).collect();
        let top = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want = h.iter().filter(|&&x| x >= top - TIE_TOLERANCE).count();
        prop_assert_eq!(census.entries.len(), blocks.len());
        prop_assert_eq!(census.maximizers.len(), want);
        prop_assert_eq!(census.tie, want > 1);
        for &k in &census.maximizers {
            prop_assert!((census.entries[k].entropy - top).abs() < 1e-9);
        }
    }

    #[test]
    fn power_restricted_to_a_class_has_entropy_ell_h((ell, g) in periodic()) {
        let cfg = PerronConfig::default();
        let comps = scc_decompose(&g);
        prop_assert_eq!(comps.len(), 1);
        let comp = &comps[0];
        prop_assert_eq!(comp.period, ell as u64);
        let h = gurevich_entropy(&g, &cfg).unwrap().value;
        let a = g.adjacency_matrix();
        let mut al = DMatrix::identity(g.len(), g.len());
        for _ in 0..ell {
            al = &al * &a;
        }
        let classes = cyclic_classes(&g, comp);
        prop_assert_eq!(classes.len(), ell);
        for class in classes {
            let sub = DMatrix::from_fn(class.len(), class.len(), |i, j| al[(class[i], class[j])]);
            let (rho, _, _) = perron_pair(&sub, &cfg).unwrap();
            prop_assert!((rho.ln() - ell as f64 * h).abs() < 1e-9);
            let restricted = g.power(ell).subgraph(&class);
            let rc = scc_decompose(&restricted);
            prop_assert!(rc.len() == 1 && rc[0].vertices.len() == class.len() && rc[0].period == 1);
        }
    }
}

#[test]
fn golden_mean_parry_measure() {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mu = parry_measure(&golden_mean(), &PerronConfig::default()).unwrap();
    assert!((mu.entropy - phi.ln()).abs() < 1e-12);
    assert!((mu.transition[0][0] - 1.0 / phi).abs() < 1e-12);
    assert!((mu.stationary[0] - phi * phi / (1.0 + phi * phi)).abs() < 1e-12);
}
