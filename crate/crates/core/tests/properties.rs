use fipp::align::{procrustes, weighted_procrustes};
use fipp::embio::{read_embeddings, save_embeddings, Embedding};
use fipp::factor::low_rank_psd_factor;
use fipp::gram::{closed_form_gstar, filter_mask, gram, objective_at_gram};
use fipp::preprocess::normalize_rows;
use fipp::retrieval::nn_retrieve;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn seed_pair() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (2usize..9, 1usize..5, 1usize..5).prop_flat_map(|(c, d1, d2)| (matrix(c, d1), matrix(c, d2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_grows_with_epsilon((xs, xt) in seed_pair(), e1 in 1e-3f64..1.0, e2 in 1e-3f64..1.0) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (gs, gt) = (gram(&xs), gram(&xt));
        let a = filter_mask(&gs, &gt, lo).unwrap();
        let b = filter_mask(&gs, &gt, hi).unwrap();
        let c = gs.dim();
        let mut count = 0;
        for i in 0..c {
            for j in 0..c {
                prop_assert!(!a.get(i, j) || b.get(i, j));
                prop_assert_eq!(a.get(i, j), a.get(j, i));
                count += a.get(i, j) as usize;
            }
        }
        prop_assert_eq!(count, a.nnz());
        prop_assert!(a.nnz() <= b.nnz());
    }

    #[test]
    fn gstar_is_a_convex_blend_and_a_minimizer(
        (xs, xt) in seed_pair(),
        eps in 0.05f64..2.0,
        lambda in 0.0f64..5.0,
        bump in -0.1f64..0.1,
    ) {
        let (gs, gt) = (gram(&xs), gram(&xt));
        let mask = filter_mask(&gs, &gt, eps).unwrap();
        let g = closed_form_gstar(&gs, &gt, &mask, lambda).unwrap();
        let (s, t, v) = (gs.entries(), gt.entries(), g.entries());
        let c = gs.dim();
        for i in 0..c {
            for j in 0..c {
                if mask.get(i, j) {
                    let (lo, hi) = (s[(i, j)].min(t[(i, j)]), s[(i, j)].max(t[(i, j)]));
                    prop_assert!(v[(i, j)] >= lo - 1e-12 && v[(i, j)] <= hi + 1e-12);
                } else {
                    prop_assert_eq!(v[(i, j)], s[(i, j)]);
                }
            }
        }
        let best = objective_at_gram(v, &gs, &gt, &mask, lambda).unwrap().total;
        let mut moved = v.clone();
        moved[(0, c - 1)] += bump;
        moved[(c - 1, 0)] += bump;
        let other = objective_at_gram(&moved, &gs, &gt, &mask, lambda).unwrap().total;
        prop_assert!(best <= other + 1e-12);
    }

    #[test]
    fn psd_factor_reproduces_low_rank_grams(x in (3usize..10, 1usize..4).prop_flat_map(|(c, r)| matrix(c, r))) {
        let g = gram(&x);
        let f = low_rank_psd_factor(&g, x.ncols()).unwrap();
        let err = (gram(&f).entries() - g.entries()).amax();
        prop_assert!(err < 1e-9 * (1.0 + g.entries().amax()), "{}", err);
    }

    #[test]
    fn weighted_procrustes_is_orthogonal(
        (a, b) in (3usize..10, 1usize..5).prop_flat_map(|(n, d)| (matrix(n, d), matrix(n, d))),
        scale in 0.1f64..10.0,
    ) {
        let n = a.nrows();
        let d = a.ncols();
        let w = DVector::from_element(n, scale);
        let r = weighted_procrustes(&a, &b, &w).unwrap();
        prop_assert!((r.transpose() * &r - DMatrix::identity(d, d)).amax() < 1e-9);
        let p = procrustes(&a, &b).unwrap();
        let lhs = (&a * &r - &b).norm();
        let rhs = (&a * &p - &b).norm();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs));
    }

    #[test]
    fn normalized_rows_have_unit_length(mut m in (1usize..8, 1usize..6).prop_flat_map(|(n, d)| matrix(n, d))) {
        let zero = normalize_rows(&mut m);
        prop_assert_eq!(zero, 0);
        for r in m.row_iter() {
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nn_ranking_ignores_query_scale(
        (q, c) in (1usize..5, 2usize..12, 1usize..5).prop_flat_map(|(m, n, d)| (matrix(m, d), matrix(n, d))),
        scale in 0.01f64..100.0,
    ) {
        let k = c.nrows();
        let a = nn_retrieve(&q, &c, k).unwrap();
        let b = nn_retrieve(&(&q * scale), &c, k).unwrap();
        prop_assert_eq!(a.len(), q.nrows());
        for r in &a {
            let mut sorted = r.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
        }
        let cos = |i: usize, j: usize| {
            let (a, b) = (q.row(i), c.row(j));
            let n = a.norm() * b.norm();
            if n > 0.0 { a.dot(&b) / n } else { 0.0 }
        };
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            prop_assert!((cos(i, x[0]) - cos(i, y[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn embeddings_round_trip_exactly(m in (1usize..6, 1usize..5).prop_flat_map(|(n, d)| matrix(n, d))) {
        let vocab: Vec<String> = (0..m.nrows()).map(|i| format!("w{i}")).collect();
        let emb = Embedding::new(vocab, m.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.vec");
        save_embeddings(&emb, &path).unwrap();
        let text = std::fs::read(&path).unwrap();
        let back = read_embeddings(&text[..], None, "e.vec").unwrap();
        prop_assert_eq!(back.vocab(), emb.vocab());
        prop_assert_eq!(back.matrix(), &m);
    }
}
