//! Randomized invariants of the public pipeline, checked with proptest.
//!
//! Case counts are kept small because each case assembles and factors a
//! matrix; the point is coverage of odd shapes and parameter mixes, not
//! statistical volume.

use gphodlr::kernels::eval_entry;
use gphodlr::{
    aca_compress, assemble, factorize, kd_sort, KernelFamily, KernelSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn family_strategy() -> impl Strategy<Value = KernelFamily> {
    prop::sample::select(KernelFamily::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kd_sort_yields_a_permutation(
        n in 1usize..200,
        dim in 1usize..4,
        leaf in 1usize..40,
        seed in 0u64..1000,
    ) {
        let coords = gphodlr::geometry::uniform_points(n, dim, 3.0, seed);
        let pts = kd_sort(&coords, dim, leaf).unwrap();
        let mut seen = vec![false; n];
        for pos in 0..n {
            let orig = pts.original_index(pos);
            prop_assert!(orig < n);
            prop_assert!(!seen[orig], "index {orig} appears twice");
            seen[orig] = true;
            // sorting relabels, never rewrites, the coordinates
            prop_assert_eq!(pts.sorted_point(pos), &coords[orig * dim..(orig + 1) * dim]);
        }
    }

    #[test]
    fn kernel_entries_symmetric_and_diagonally_dominant_in_noise(
        family in family_strategy(),
        n in 2usize..40,
        dim in 1usize..4,
        noise in 0.5f64..4.0,
        ell in 0.3f64..3.0,
        seed in 0u64..1000,
    ) {
        let spec = KernelSpec::new(family, noise).unwrap().with_length_scale(ell).unwrap();
        let coords = gphodlr::geometry::uniform_points(n, dim, 3.0, seed);
        let pts = kd_sort(&coords, dim, 10).unwrap();
        for i in 0..n {
            let d = eval_entry(&spec, &pts, i, i).unwrap();
            prop_assert!(d >= noise);
            for j in (i + 1)..n {
                let a = eval_entry(&spec, &pts, i, j).unwrap();
                let b = eval_entry(&spec, &pts, j, i).unwrap();
                // bitwise: distance accumulation has a fixed term order
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn compression_error_within_tolerance(
        m in 4usize..60,
        n in 4usize..60,
        gap in 0.5f64..4.0,
        seed in 0u64..1000,
    ) {
        // two 1-D clusters separated by `gap`: compressible but not trivial
        let rows = gphodlr::geometry::uniform_points(m, 1, 1.0, seed);
        let cols: Vec<f64> = gphodlr::geometry::uniform_points(n, 1, 1.0, seed + 1)
            .into_iter()
            .map(|x| x + 2.0 + gap)
            .collect();
        let entry = |i: usize, j: usize| {
            let d = rows[i] - cols[j];
            (-d * d).exp()
        };
        let eps = 1e-10;
        let block = aca_compress(entry, m, n, eps, m.min(n), seed).unwrap();
        prop_assert!(!block.truncated());
        let dense = DMatrix::from_fn(m, n, &entry);
        let err = (block.to_dense() - &dense).norm();
        prop_assert!(
            err <= 10.0 * eps * dense.norm().max(1e-300),
            "residual {err:e} at rank {}",
            block.rank()
        );
    }

    #[test]
    fn solve_round_trips_through_apply(
        family in family_strategy(),
        n in 2usize..220,
        dim in 1usize..4,
        noise in 1.0f64..4.0,
        seed in 0u64..1000,
    ) {
        let spec = KernelSpec::new(family, noise).unwrap();
        let coords = gphodlr::geometry::uniform_points(n, dim, 3.0, seed);
        let pts = kd_sort(&coords, dim, 20).unwrap();
        let tree = assemble(&spec, &pts, 1e-11, 20).unwrap();
        let fact = factorize(&tree).unwrap();
        let x0 = DVector::from_fn(n, |i, _| ((i as f64) * 0.37).sin() + 0.2);
        let b = tree.apply_vector(&x0).unwrap();
        let x = fact.solve_vector(&b).unwrap();
        let rel = (&x - &x0).norm() / x0.norm();
        prop_assert!(rel <= 1e-8, "round trip error {rel:e}");
    }

    #[test]
    fn solve_and_logdet_match_dense_reference(
        family in family_strategy(),
        n in 2usize..160,
        dim in 1usize..3,
        noise in 1.0f64..4.0,
        seed in 0u64..1000,
    ) {
        let spec = KernelSpec::new(family, noise).unwrap();
        let coords = gphodlr::geometry::uniform_points(n, dim, 3.0, seed);
        let pts = kd_sort(&coords, dim, 16).unwrap();
        let tree = assemble(&spec, &pts, 1e-12, 16).unwrap();
        let fact = factorize(&tree).unwrap();
        let dense = gphodlr::dense::dense_assemble(&spec, &pts).unwrap();

        let b = DMatrix::from_fn(n, 2, |i, c| ((i * 3 + c) % 11) as f64 - 5.0);
        let x = fact.solve(&b).unwrap();
        let x_ref = gphodlr::dense::dense_solve(&dense, &b).unwrap();
        let rel = (&x - &x_ref).norm() / x_ref.norm().max(1e-300);
        prop_assert!(rel <= 1e-9, "solve error {rel:e}");

        let (logdet_ref, sign_ref) = gphodlr::dense::dense_logdet(&dense).unwrap();
        prop_assert_eq!(fact.det_sign(), sign_ref);
        let dd = (fact.log_abs_det() - logdet_ref).abs() / logdet_ref.abs().max(1.0);
        prop_assert!(dd <= 1e-9, "logdet off by {dd:e}");
    }

    #[test]
    fn pipeline_is_deterministic(
        family in family_strategy(),
        n in 2usize..150,
        noise in 1.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let spec = KernelSpec::new(family, noise).unwrap();
        let coords = gphodlr::geometry::uniform_points(n, 1, 3.0, seed);
        let run = || {
            let pts = kd_sort(&coords, 1, 20).unwrap();
            let fact = factorize(&assemble(&spec, &pts, 1e-10, 20).unwrap()).unwrap();
            let b = DVector::from_fn(n, |i, _| (i as f64).cos());
            (fact.solve_vector(&b).unwrap(), fact.log_abs_det())
        };
        let (xa, da) = run();
        let (xb, db) = run();
        prop_assert_eq!(da.to_bits(), db.to_bits());
        for (a, b) in xa.iter().zip(xb.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
