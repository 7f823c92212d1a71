use std::collections::BTreeSet;

use approx::assert_relative_eq;
use fracheat::harness::stats::{anova_oneway, t_test};
use fracheat::refine::{anomaly_scores, cosine_similarity, structural_similarity, threshold_sparsify};
use fracheat::selftrain::{fractional_confidence, simplex_rows, confidence};
use fracheat::{Graph, KernelOperator, LaplacianKind, SpectralDecomposition, Strategy as Kernel};
use nalgebra::{DMatrix, Rotation2};
use proptest::prelude::*;

/// Random spanning tree plus extra edges, positive weights.
fn connected_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..max_n).prop_flat_map(|n| {
        let tree = proptest::collection::vec((0.0f64..1.0, 0.1f64..2.0), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 0.1f64..2.0), 0..2 * n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges = Vec::new();
            for (k, (u, w)) in tree.into_iter().enumerate() {
                let i = k + 1;
                let parent = ((u * i as f64) as usize).min(i - 1);
                edges.push((parent, i, w));
            }
            let mut seen: BTreeSet<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect();
            for (a, b, w) in extra {
                if a != b && seen.insert((a.min(b), a.max(b))) {
                    edges.push((a, b, w));
                }
            }
            Graph::from_edges(n, &edges).unwrap()
        })
    })
}

fn kinds() -> impl Strategy<Value = LaplacianKind> {
    prop_oneof![
        Just(LaplacianKind::Combinatorial),
        Just(LaplacianKind::SymNormalized),
        Just(LaplacianKind::SymNormalizedSelfLoops),
    ]
}

fn scores(n: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..2.0, n * c).prop_map(move |v| DMatrix::from_vec(n, c, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_psd_and_symmetric(g in connected_graph(14), kind in kinds()) {
        let l = DMatrix::from(&g.laplacian(kind).unwrap());
        prop_assert!((&l - l.transpose()).amax() < 1e-12);
        let eig = l.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() > -1e-10);
        if kind == LaplacianKind::Combinatorial {
            for row in l.row_iter() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
        }
        if kind != LaplacianKind::Combinatorial {
            prop_assert!(eig.eigenvalues.max() <= 2.0 + 1e-10);
        }
    }

    #[test]
    fn projector_is_idempotent_and_kills_range(g in connected_graph(12), kind in kinds(), m in scores(12, 2)) {
        let n = g.n();
        let m = m.rows(0, n).into_owned();
        let p = g.projector(kind).unwrap();
        let pm = p.apply(&m).unwrap();
        let ppm = p.apply(&pm).unwrap();
        prop_assert!((&ppm - &pm).amax() < 1e-12);
        // The complement lies in the range of L, which is orthogonal to the kernel.
        let q = p.complement(&m).unwrap();
        prop_assert!(p.apply(&q).unwrap().amax() < 1e-12);
        let l = DMatrix::from(&g.laplacian(kind).unwrap());
        prop_assert!((&l * &pm).amax() < 1e-10);
    }

    #[test]
    fn heat_semigroup_and_linearity(
        g in connected_graph(12),
        kind in kinds(),
        s in 0.1f64..=1.0,
        t1 in 0.0f64..2.0,
        t2 in 0.0f64..2.0,
        a in scores(12, 2),
        b in scores(12, 2),
        alpha in -2.0f64..2.0,
    ) {
        let n = g.n();
        let (a, b) = (a.rows(0, n).into_owned(), b.rows(0, n).into_owned());
        let spec = SpectralDecomposition::from_sparse(&g.laplacian(kind).unwrap()).unwrap();
        let once = spec.apply_heat(s, t1 + t2, &a).unwrap();
        let twice = spec.apply_heat(s, t2, &spec.apply_heat(s, t1, &a).unwrap()).unwrap();
        prop_assert!((&once - &twice).amax() < 1e-10);
        let lin = spec.apply_heat(s, t1, &(&a * alpha + &b)).unwrap();
        let sep = spec.apply_heat(s, t1, &a).unwrap() * alpha + spec.apply_heat(s, t1, &b).unwrap();
        prop_assert!((&lin - &sep).amax() < 1e-10);
    }

    #[test]
    fn heat_contracts_dirichlet_energy(g in connected_graph(12), s in 0.1f64..=1.0, t in 0.01f64..3.0, u in scores(12, 1)) {
        let n = g.n();
        let u = u.rows(0, n).column(0).into_owned();
        let spec = SpectralDecomposition::from_sparse(&g.laplacian(LaplacianKind::Combinatorial).unwrap()).unwrap();
        let v = spec.apply_heat(s, t, &DMatrix::from_column_slice(n, 1, u.as_slice())).unwrap();
        let before = spec.dirichlet_energy(s, &u).unwrap();
        let after = spec.dirichlet_energy(s, &v.column(0).into_owned()).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn chebyshev_heat_tracks_spectral(g in connected_graph(20), t in 0.1f64..2.0, m in scores(20, 2)) {
        let n = g.n();
        let m = m.rows(0, n).into_owned();
        let kind = LaplacianKind::SymNormalized;
        let exact = KernelOperator::new(&g, kind, Kernel::SpectralExact).unwrap();
        let cheb = KernelOperator::new(&g, kind, Kernel::Chebyshev { degree: Some(30), tolerance: None }).unwrap();
        let a = exact.apply_heat(1.0, t, &m).unwrap();
        let b = cheb.apply_heat(1.0, t, &m).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-8 * a.norm().max(1e-300));
    }

    #[test]
    fn sparsify_keeps_every_original_edge(g in connected_graph(12), eps in 0.0f64..3.0, noise in scores(12, 12)) {
        let n = g.n();
        let noise = noise.view((0, 0), (n, n)).into_owned();
        let m = (&noise + noise.transpose()) * 0.25 + g.to_dense();
        let kept = threshold_sparsify(&m, eps, Some(&g)).unwrap();
        let dense = DMatrix::from(&kept);
        for (i, j, _) in g.edges() {
            if m[(i, j)] > 0.0 {
                prop_assert!(dense[(i, j)] > 0.0 && dense[(j, i)] > 0.0);
            }
        }
        prop_assert!((&dense - dense.transpose()).amax() < 1e-15);
    }

    #[test]
    fn similarity_matrices_are_symmetric(g in connected_graph(12), z in scores(12, 3)) {
        let n = g.n();
        let z = z.rows(0, n).map(|v| v + 3.0);
        let c = cosine_similarity(&z).unwrap();
        prop_assert!((&c - c.transpose()).amax() < 1e-12);
        prop_assert!(c.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
        let st = structural_similarity(&g);
        prop_assert!((&st - st.transpose()).amax() < 1e-12);
    }

    #[test]
    fn anomaly_scores_ignore_rotations(g in connected_graph(12), angle in 0.0f64..std::f64::consts::TAU, z in scores(12, 2), k in 1usize..4) {
        let n = g.n();
        let z = z.rows(0, n).map(|v| v + 1.5);
        let rot = Rotation2::new(angle);
        let rt = DMatrix::from_column_slice(2, 2, rot.matrix().transpose().as_slice());
        let zr = &z * rt;
        let a = anomaly_scores(&g, &z, k).unwrap();
        let b = anomaly_scores(&g, &zr, k).unwrap();
        // Exact ties can flip under rounding; only compare tie-free fixtures.
        let c = cosine_similarity(&z).unwrap();
        let mut vals: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| c[(i, j)]).collect();
        vals.sort_by(f64::total_cmp);
        prop_assume!(vals.windows(2).all(|w| w[1] - w[0] > 1e-9));
        prop_assert_eq!(&a, &b);
        prop_assert!(b.iter().all(|&x| x <= 2 * k));
    }

    #[test]
    fn confidence_bounded_on_simplex(u in scores(10, 3), s in 0.0f64..1.0) {
        let p = simplex_rows(&u);
        for row in p.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.min() >= 0.0);
        }
        let c = confidence(&p);
        prop_assert!(c.max() <= 1.0 - 1.0 / 3.0 + 1e-12);
        prop_assert!(c.min() >= -1e-15);
        let fc = fractional_confidence(&u, s);
        prop_assert!(fc.iter().zip(c.iter()).all(|(f, b)| *f >= *b - 1e-15));
    }

    #[test]
    fn two_group_anova_is_t_squared(
        a in proptest::collection::vec(0.0f64..1.0, 2..30),
        b in proptest::collection::vec(0.0f64..1.0, 2..30),
    ) {
        let f = anova_oneway(&[&a, &b]).unwrap();
        let t = t_test(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f.p) && (0.0..=1.0).contains(&t.p));
        if t.t.abs() < 1e6 {
            assert_relative_eq!(f.f, t.t * t.t, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(f.p, t.p, max_relative = 1e-8, epsilon = 1e-14);
        }
    }
}
