//! End-to-end agreement between the hierarchical solver and the dense
//! reference, across every kernel family and a spread of dimensions and
//! parameter settings. Fixed seeds keep the geometry reproducible.

use gphodlr::dense::{dense_assemble, dense_logdet, dense_solve};
use gphodlr::geometry::uniform_points;
use gphodlr::lowrank::svd_truncate;
use gphodlr::{
    aca_compress, assemble, factorize, kd_sort, GpModel, KernelFamily, KernelSpec, LowRankBlock,
};
use nalgebra::{DMatrix, DVector};

/// Kernel settings that jointly cover each family, both Matérn evaluation
/// paths, and a non-default smoothness/shape parameter.
fn kernel_matrix() -> Vec<(KernelSpec, &'static str)> {
    let s = |f, noise: f64| KernelSpec::new(f, noise).unwrap();
    vec![
        (s(KernelFamily::Gaussian, 2.0), "gaussian"),
        (s(KernelFamily::Exponential, 1.0), "exponential"),
        (s(KernelFamily::Multiquadric, 1.0), "multiquadric"),
        (s(KernelFamily::InverseMultiquadric, 1.0), "inverse multiquadric"),
        (s(KernelFamily::Biharmonic, 2.0), "biharmonic"),
        (
            s(KernelFamily::Matern, 1.0).with_matern_nu(2.5).unwrap(),
            "matern nu = 5/2 (closed form)",
        ),
        (
            s(KernelFamily::Matern, 1.0).with_matern_nu(1.8).unwrap(),
            "matern nu = 1.8 (Bessel path)",
        ),
        (
            s(KernelFamily::RationalQuadratic, 1.0).with_rq_alpha(1.5).unwrap(),
            "rational quadratic",
        ),
    ]
}

#[test]
fn solve_matches_dense_for_every_family() {
    for dim in [1usize, 3] {
        let coords = uniform_points(256, dim, 3.0, 101 + dim as u64);
        let pts = kd_sort(&coords, dim, 20).unwrap();
        let b = DMatrix::from_fn(256, 2, |i, c| ((i * 13 + c * 7) % 23) as f64 / 11.0 - 1.0);
        for (spec, label) in kernel_matrix() {
            let fact = factorize(&assemble(&spec, &pts, 1e-12, 20).unwrap()).unwrap();
            let x = fact.solve(&b).unwrap();
            let dense = dense_assemble(&spec, &pts).unwrap();
            let x_ref = dense_solve(&dense, &b).unwrap();
            let rel = (&x - &x_ref).norm() / x_ref.norm();
            assert!(rel <= 1e-10, "{label}, dim {dim}: solve error {rel:e}");
        }
    }
}

#[test]
fn logdet_matches_dense_for_every_family() {
    let coords = uniform_points(256, 1, 3.0, 103);
    let pts = kd_sort(&coords, 1, 20).unwrap();
    for (spec, label) in kernel_matrix() {
        let fact = factorize(&assemble(&spec, &pts, 1e-12, 20).unwrap()).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let (want, sign) = dense_logdet(&dense).unwrap();
        assert_eq!(fact.det_sign(), sign, "{label}: determinant sign");
        let rel = ((fact.log_abs_det() - want) / want.abs().max(1.0)).abs();
        assert!(rel <= 1e-10, "{label}: logdet error {rel:e}");
    }
}

#[test]
fn apply_matches_dense_for_every_family() {
    let coords = uniform_points(200, 2, 3.0, 107);
    let pts = kd_sort(&coords, 2, 20).unwrap();
    let x = DVector::from_fn(200, |i, _| ((i as f64) * 0.29).sin());
    for (spec, label) in kernel_matrix() {
        let tree = assemble(&spec, &pts, 1e-12, 20).unwrap();
        let y = tree.apply_vector(&x).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let y_ref = dense.matrix() * &x;
        let rel = (&y - &y_ref).norm() / y_ref.norm();
        assert!(rel <= 1e-11, "{label}: matvec error {rel:e}");
    }
}

/// The two compression routes are written independently; on kernel blocks
/// the adaptive route must land within a few ranks of the optimum and meet
/// the same reconstruction tolerance.
#[test]
fn adaptive_compression_tracks_svd_optimum_on_kernel_blocks() {
    let coords = uniform_points(240, 1, 3.0, 109);
    let pts = kd_sort(&coords, 1, 20).unwrap();
    // top-level off-diagonal block of the sorted matrix
    let (m, n0) = (120usize, 120usize);
    for (spec, label) in kernel_matrix() {
        let entry = |i: usize, j: usize| {
            gphodlr::kernels::eval_entry(&spec, &pts, pts.original_index(i), pts.original_index(n0 + j))
                .unwrap()
        };
        for eps in [1e-6, 1e-10] {
            let aca = aca_compress(entry, m, n0, eps, 60, 113).unwrap();
            assert!(!aca.truncated(), "{label}: rank cap hit at eps {eps:e}");
            let dense = DMatrix::from_fn(m, n0, entry);
            let svd = svd_truncate(&dense, eps).unwrap();
            assert!(
                aca.rank() <= svd.rank() + 5,
                "{label}, eps {eps:e}: adaptive rank {} vs optimal {}",
                aca.rank(),
                svd.rank()
            );
            for block in [&aca, &svd] as [&LowRankBlock; 2] {
                let err = (block.to_dense() - &dense).norm();
                assert!(
                    err <= 10.0 * eps * dense.norm(),
                    "{label}, eps {eps:e}: reconstruction error {err:e} at rank {}",
                    block.rank()
                );
            }
        }
    }
}

/// Regression and likelihood through the hierarchical path agree with the
/// same quantities computed densely.
#[test]
fn gp_predictions_match_dense_formulas_at_scale() {
    let n = 256;
    let dim = 2;
    let coords = uniform_points(n, dim, 3.0, 127);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let p = &coords[i * dim..(i + 1) * dim];
            (2.0 * p[0]).sin() + 0.5 * (p[1]).cos()
        })
        .collect();
    let queries = uniform_points(48, dim, 3.0, 131);

    for (spec, label) in [
        (KernelSpec::new(KernelFamily::Gaussian, 1.0).unwrap(), "gaussian"),
        (
            KernelSpec::new(KernelFamily::Matern, 1.0)
                .unwrap()
                .with_matern_nu(1.5)
                .unwrap(),
            "matern",
        ),
    ] {
        let model = GpModel::fit(&spec, &coords, dim, &y, 1e-12, 20).unwrap();
        let (mean, var) = model.predict(&queries).unwrap();

        let pts = kd_sort(&coords, dim, 20).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let alpha = dense_solve(&dense, &DMatrix::from_column_slice(n, 1, &y)).unwrap();
        let mut cross = DMatrix::zeros(n, 48);
        for j in 0..48 {
            for i in 0..n {
                cross[(i, j)] = gphodlr::kernels::eval_kernel(
                    &spec,
                    &coords[i * dim..(i + 1) * dim],
                    &queries[j * dim..(j + 1) * dim],
                )
                .unwrap();
            }
        }
        let solved = dense_solve(&dense, &cross).unwrap();
        for j in 0..48 {
            let want_mean = cross.column(j).dot(&alpha.column(0));
            let q = &queries[j * dim..(j + 1) * dim];
            let want_var = gphodlr::kernels::eval_kernel(&spec, q, q).unwrap()
                - cross.column(j).dot(&solved.column(j));
            assert!(
                (mean[j] - want_mean).abs() <= 1e-8,
                "{label}: mean[{j}] {} vs {want_mean}",
                mean[j]
            );
            assert!(
                (var[j] - want_var).abs() <= 1e-8,
                "{label}: var[{j}] {} vs {want_var}",
                var[j]
            );
        }

        // likelihood against the dense evaluation of the same formula
        let (logdet, sign) = dense_logdet(&dense).unwrap();
        assert_eq!(sign, 1.0);
        let yta: f64 = y
            .iter()
            .zip(alpha.column(0).iter())
            .map(|(a, b)| a * b)
            .sum();
        let want =
            -0.5 * yta - 0.5 * logdet - 0.5 * (n as f64) * (2.0 * std::f64::consts::PI).ln();
        let got = model.log_marginal_likelihood();
        assert!(
            (got - want).abs() <= 1e-6,
            "{label}: log-likelihood {got} vs {want}"
        );
    }
}

/// Exercise the awkward sizes: a point count below the leaf size, a prime
/// count, and exact powers of two.
#[test]
fn awkward_sizes_agree_with_dense() {
    let spec = KernelSpec::new(KernelFamily::Gaussian, 2.0).unwrap();
    for n in [1usize, 2, 19, 64, 127, 128, 129] {
        let coords = uniform_points(n, 1, 3.0, 137 + n as u64);
        let pts = kd_sort(&coords, 1, 20).unwrap();
        let fact = factorize(&assemble(&spec, &pts, 1e-12, 20).unwrap()).unwrap();
        let b = DMatrix::from_fn(n, 1, |i, _| (i as f64) - 0.5 * n as f64);
        let x = fact.solve(&b).unwrap();
        let dense = dense_assemble(&spec, &pts).unwrap();
        let x_ref = dense_solve(&dense, &b).unwrap();
        let rel = (&x - &x_ref).norm() / x_ref.norm().max(1e-300);
        assert!(rel <= 1e-10, "n = {n}: solve error {rel:e}");
    }
}
