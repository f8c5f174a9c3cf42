//! Point sets and the kd-tree ordering that makes covariance blocks
//! compressible.
//!
//! The solver needs an ordering in which points that are close in index are
//! close in space. [`kd_sort`] produces one by recursively splitting the point
//! set at the count median along cycling coordinate axes. Only the resulting
//! permutation is kept; the hierarchical block structure later re-derives the
//! same splits from subrange lengths alone, so the two stay consistent by
//! construction.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// An immutable set of `n` points in `d` dimensions together with the
/// kd-tree permutation over them.
///
/// `perm[pos] = i` maps a sorted position to the original point index.
/// Coordinates are stored row-major (`point i` occupies
/// `coords[i*dim .. (i+1)*dim]`).
#[derive(Debug, Clone)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
    perm: Vec<usize>,
}

impl PointSet {
    /// Number of points.
    #[allow(clippy::len_without_is_empty)] // construction rejects empty sets
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinates of the point with original index `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinates of the point at sorted position `pos`.
    pub fn sorted_point(&self, pos: usize) -> &[f64] {
        self.point(self.perm[pos])
    }

    /// Sorted position -> original index.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Original index of the point at sorted position `pos`.
    pub fn original_index(&self, pos: usize) -> usize {
        self.perm[pos]
    }
}

/// Build a [`PointSet`] ordered by recursive count-median kd splits.
///
/// `coords` holds `n * dim` values row-major. Splitting starts on axis 0 and
/// cycles with depth; each split is a stable sort along the axis (ties keep
/// their prior order) with the left half receiving `ceil(m / 2)` points.
/// Recursion stops once a subrange has at most `leaf_size` points. In one
/// dimension the result is exactly a stable ascending argsort.
pub fn kd_sort(coords: &[f64], dim: usize, leaf_size: usize) -> Result<PointSet> {
    if dim == 0 {
        return Err(Error::InvalidInput("points must have dimension >= 1".into()));
    }
    if leaf_size == 0 {
        return Err(Error::InvalidInput("leaf_size must be >= 1".into()));
    }
    if coords.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    if coords.len() % dim != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} coordinates do not tile into points of dimension {dim}",
            coords.len()
        )));
    }
    if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite coordinate at flat index {bad}"
        )));
    }
    let n = coords.len() / dim;
    let mut perm: Vec<usize> = (0..n).collect();
    split_recursive(coords, dim, leaf_size, &mut perm, 0);
    Ok(PointSet {
        coords: coords.to_vec(),
        dim,
        perm,
    })
}

fn split_recursive(coords: &[f64], dim: usize, leaf_size: usize, idx: &mut [usize], depth: usize) {
    let m = idx.len();
    if m <= leaf_size {
        return;
    }
    let axis = depth % dim;
    // total_cmp is safe here: construction rejected non-finite coordinates
    idx.sort_by(|&a, &b| coords[a * dim + axis].total_cmp(&coords[b * dim + axis]));
    let mid = m.div_ceil(2);
    let (left, right) = idx.split_at_mut(mid);
    split_recursive(coords, dim, leaf_size, left, depth + 1);
    split_recursive(coords, dim, leaf_size, right, depth + 1);
}

/// `n` points drawn uniformly from the box `[-half_width, half_width]^dim`,
/// reproducible from the seed. Returned row-major, ready for [`kd_sort`].
pub fn uniform_points(n: usize, dim: usize, half_width: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim)
        .map(|_| {
            let u: f64 = rng.random();
            (2.0 * u - 1.0) * half_width
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_is_argsort() {
        let pts = kd_sort(&[3.0, 1.0, 2.0, 0.0], 1, 1).unwrap();
        assert_eq!(pts.perm(), &[3, 1, 2, 0]);
    }

    #[test]
    fn single_point() {
        let pts = kd_sort(&[42.0], 1, 1).unwrap();
        assert_eq!(pts.perm(), &[0]);
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn unit_square_alternates_axes() {
        // (0,0) (1,0) (0,1) (1,1), leaf_size 1: axis 0 splits {0,2} | {1,3},
        // then axis 1 orders each pair by y
        let coords = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let pts = kd_sort(&coords, 2, 1).unwrap();
        assert_eq!(pts.perm(), &[0, 2, 1, 3]);
    }

    #[test]
    fn ties_keep_original_order() {
        let pts = kd_sort(&[1.0, 1.0, 0.0, 1.0], 1, 1).unwrap();
        assert_eq!(pts.perm(), &[2, 0, 1, 3]);
    }

    #[test]
    fn left_half_gets_ceil() {
        // 5 points: the first split must place 3 on the left
        let pts = kd_sort(&[4.0, 3.0, 2.0, 1.0, 0.0], 1, 3).unwrap();
        assert_eq!(pts.perm(), &[4, 3, 2, 1, 0]);
    }

    #[test]
    fn accessors_are_consistent() {
        let coords = [0.5, -1.0, 2.0, 0.0, -3.0, 1.0];
        let pts = kd_sort(&coords, 2, 1).unwrap();
        assert_eq!(pts.dim(), 2);
        assert_eq!(pts.len(), 3);
        for pos in 0..3 {
            let i = pts.original_index(pos);
            assert_eq!(pts.sorted_point(pos), pts.point(i));
            assert_eq!(pts.point(i), &coords[i * 2..i * 2 + 2]);
        }
    }

    #[test]
    fn perm_is_a_permutation() {
        for (n, dim, leaf) in [(1usize, 1usize, 1usize), (17, 3, 2), (100, 2, 7), (64, 1, 20)] {
            let coords = uniform_points(n, dim, 3.0, n as u64);
            let pts = kd_sort(&coords, dim, leaf).unwrap();
            let mut seen = vec![false; n];
            for &i in pts.perm() {
                assert!(!seen[i], "duplicate index {i}");
                seen[i] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn one_dimensional_matches_stable_sort_oracle() {
        let coords = uniform_points(257, 1, 3.0, 9);
        let pts = kd_sort(&coords, 1, 1).unwrap();
        let mut expect: Vec<usize> = (0..257).collect();
        expect.sort_by(|&a, &b| coords[a].total_cmp(&coords[b]));
        assert_eq!(pts.perm(), expect.as_slice());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kd_sort(&[], 1, 1).is_err());
        assert!(kd_sort(&[1.0], 0, 1).is_err());
        assert!(kd_sort(&[1.0, 2.0], 1, 0).is_err());
        assert!(kd_sort(&[1.0, 2.0, 3.0], 2, 1).is_err());
        assert!(kd_sort(&[1.0, f64::NAN], 1, 1).is_err());
        assert!(kd_sort(&[1.0, f64::INFINITY], 1, 1).is_err());
    }

    #[test]
    fn uniform_points_reproducible_and_boxed() {
        let a = uniform_points(50, 3, 2.5, 7);
        let b = uniform_points(50, 3, 2.5, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|&c| (-2.5..=2.5).contains(&c)));
        let c = uniform_points(50, 3, 2.5, 8);
        assert_ne!(a, c);
    }
}
