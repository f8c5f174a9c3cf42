//! Shared fixtures for the benchmark targets.

use gphodlr::{kd_sort, KernelFamily, KernelSpec, PointSet};

/// The 1-D Gaussian setup most benchmarks run on.
pub fn gaussian_fixture(n: usize, seed: u64) -> (KernelSpec, PointSet) {
    let spec = KernelSpec::new(KernelFamily::Gaussian, 2.0).expect("valid spec");
    let coords = gphodlr::geometry::uniform_points(n, 1, 3.0, seed);
    let pts = kd_sort(&coords, 1, 20).expect("finite coordinates");
    (spec, pts)
}
