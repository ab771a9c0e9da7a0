mod support;

use pamt_core::sparse::spmm;
use pamt_core::{
    build_propagation_matrix, build_similarity_mask, normalize_adjacency, propagate, PropagationConfig,
    PropagationMatrix,
};
use rand::Rng;
use support::*;

#[test]
fn masked_propagation_matches_dense_closed_form() {
    let mut r = rng(11);
    for case in 0..50u64 {
        let n = r.random_range(1..=50);
        let g = random_graph(n, r.random_range(0.02..0.3), case);
        let norm = normalize_adjacency(&g);
        let c = r.random_range(2..=5);
        let h = random_simplex_rows(n, c, &mut r);
        let m = random_dense(n, c, 0.0, 1.0, &mut r);
        let mask = build_similarity_mask(&h, &norm).unwrap();
        let ap = build_propagation_matrix(&norm, &mask).unwrap();
        let dense_ap = dense_masked(&dense_normalized(&g), &to_dense(&h));
        for alpha in [0.0, 0.1, 0.5, 1.0] {
            for k in [1, 5, 10] {
                let cfg = PropagationConfig::new(alpha, k).unwrap();
                let got = propagate(ap.as_sparse(), &m, cfg).unwrap();
                let want = dense_ppr(&dense_ap, &to_dense(&m), alpha, k);
                let err = max_abs_diff(&want, &got);
                assert!(err <= 1e-10, "case {case} n={n} alpha={alpha} K={k}: {err:e}");
            }
        }
    }
}

#[test]
fn unmasked_operator_matches_definition() {
    for seed in 0..10 {
        let g = random_graph(30, 0.15, seed);
        let want = dense_normalized(&g);
        let got = normalize_adjacency(&g).to_dense();
        assert!(max_abs_diff(&want, &got) <= 1e-15);
        let m = random_dense(30, 3, -1.0, 1.0, &mut rng(seed));
        let sp = spmm(PropagationMatrix::unmasked(&normalize_adjacency(&g)).as_sparse(), &m).unwrap();
        assert!(max_abs_diff(&matmul(&want, &to_dense(&m)), &sp) <= 1e-12);
    }
}
