//! Brute-force dense reference.
//!
//! Everything here is the obvious `O(n^2)` / `O(n^3)` computation, kept free
//! of the hierarchical machinery (and of any shared factorization code) so it
//! can serve as an independent oracle: assemble the full covariance matrix,
//! solve it by partial-pivoted LU, and take log-determinants from the LU
//! diagonal or, for symmetric positive-definite input, from a Cholesky
//! factor.

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::{entry_unchecked, KernelSpec};
use nalgebra::DMatrix;

/// Hard cap on dense assembly; above this the quadratic storage is refused.
pub const DENSE_SIZE_GUARD: usize = 20_000;

/// A fully materialized covariance matrix, in original point order.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    a: DMatrix<f64>,
    symmetric: bool,
}

impl DenseMatrix {
    /// Wrap an explicit matrix (tests and diagnostics).
    pub fn from_matrix(a: DMatrix<f64>) -> Result<DenseMatrix> {
        if a.nrows() != a.ncols() || a.is_empty() {
            return Err(Error::InvalidInput(format!(
                "dense reference needs a nonempty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let symmetric = a == a.transpose();
        Ok(DenseMatrix { a, symmetric })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Evaluate every entry of `C_ij = sigma^2 delta_ij + k(x_i, x_j)`.
///
/// Entries are addressed by original index, so the result is directly
/// comparable with user-facing solver output. Symmetry is verified to exact
/// equality as a self-check of the entry generator.
pub fn dense_assemble(spec: &KernelSpec, points: &PointSet) -> Result<DenseMatrix> {
    let n = points.len();
    if n > DENSE_SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "dense assembly of {n} points exceeds the cap of {DENSE_SIZE_GUARD}"
        )));
    }
    let a = DMatrix::from_fn(n, n, |i, j| entry_unchecked(spec, points, i, j));
    for i in 0..n {
        for j in i + 1..n {
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::Factorization(format!(
                    "entry generator broke symmetry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(DenseMatrix { a, symmetric: true })
}

/// A reusable LU factorization of a dense covariance matrix, for callers
/// that want to time or amortize the `O(n^3)` step separately from solves.
#[derive(Debug)]
pub struct DenseFactorization {
    lu: LuFactors,
}

impl DenseFactorization {
    pub fn n(&self) -> usize {
        self.lu.pivots.len()
    }

    /// `C^{-1} B`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if rhs.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {n}x{n} but right-hand side has {} rows",
                rhs.nrows()
            )));
        }
        let mut x = rhs.clone();
        self.lu.solve_in_place(&mut x);
        Ok(x)
    }

    /// `(log|det C|, sign(det C))` off the LU diagonal.
    pub fn log_abs_det(&self) -> (f64, f64) {
        self.lu.log_abs_det()
    }
}

/// Factor `C` by partial-pivoted LU.
pub fn dense_factorize(matrix: &DenseMatrix) -> Result<DenseFactorization> {
    Ok(DenseFactorization {
        lu: LuFactors::new(matrix.a.clone())?,
    })
}

/// Solve `C X = B` by partial-pivoted LU (one-shot convenience).
pub fn dense_solve(matrix: &DenseMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = matrix.n();
    if rhs.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {n}x{n} but right-hand side has {} rows",
            rhs.nrows()
        )));
    }
    dense_factorize(matrix)?.solve(rhs)
}

/// `(log|det C|, sign(det C))`.
///
/// Symmetric matrices are first attempted by Cholesky (`2 sum log L_ii`,
/// sign `+1`); indefinite or unsymmetric input falls back to the LU diagonal.
pub fn dense_logdet(matrix: &DenseMatrix) -> Result<(f64, f64)> {
    if matrix.symmetric {
        if let Some(l) = cholesky_lower(&matrix.a) {
            let logdet = 2.0 * (0..matrix.n()).map(|i| l[(i, i)].ln()).sum::<f64>();
            return Ok((logdet, 1.0));
        }
    }
    let lu = LuFactors::new(matrix.a.clone())?;
    Ok(lu.log_abs_det())
}

/// Textbook right-looking LU with partial pivoting, column-major.
#[derive(Debug)]
struct LuFactors {
    lu: DMatrix<f64>,
    pivots: Vec<usize>,
    pivot_sign: f64,
}

impl LuFactors {
    fn new(mut a: DMatrix<f64>) -> Result<LuFactors> {
        let n = a.nrows();
        let mut pivots = vec![0usize; n];
        let mut pivot_sign = 1.0;
        let s = a.as_mut_slice(); // column-major, column j at s[j*n..]
        for k in 0..n {
            let mut p = k;
            let mut best = s[k * n + k].abs();
            for i in k + 1..n {
                let v = s[k * n + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::Singular(format!(
                    "dense reference hit a zero pivot at elimination step {k}"
                )));
            }
            pivots[k] = p;
            if p != k {
                pivot_sign = -pivot_sign;
                for j in 0..n {
                    s.swap(j * n + k, j * n + p);
                }
            }
            let piv = s[k * n + k];
            for i in k + 1..n {
                s[k * n + i] /= piv;
            }
            // rank-1 update of the trailing block, one column at a time so the
            // inner loop walks contiguous memory
            for j in k + 1..n {
                let f = s[j * n + k];
                if f != 0.0 {
                    let (head, tail) = s.split_at_mut(j * n);
                    let colk = &head[k * n + k + 1..k * n + n];
                    let colj = &mut tail[k + 1..n];
                    for (cj, ck) in colj.iter_mut().zip(colk) {
                        *cj -= f * ck;
                    }
                }
            }
        }
        Ok(LuFactors {
            lu: a,
            pivots,
            pivot_sign,
        })
    }

    fn solve_in_place(&self, b: &mut DMatrix<f64>) {
        let n = self.pivots.len();
        for k in 0..n {
            if self.pivots[k] != k {
                b.swap_rows(k, self.pivots[k]);
            }
        }
        for c in 0..b.ncols() {
            for k in 0..n {
                let bk = b[(k, c)];
                if bk != 0.0 {
                    for i in k + 1..n {
                        b[(i, c)] -= self.lu[(i, k)] * bk;
                    }
                }
            }
            for k in (0..n).rev() {
                let bk = b[(k, c)] / self.lu[(k, k)];
                b[(k, c)] = bk;
                for i in 0..k {
                    b[(i, c)] -= self.lu[(i, k)] * bk;
                }
            }
        }
    }

    fn log_abs_det(&self) -> (f64, f64) {
        let mut log = 0.0;
        let mut sign = self.pivot_sign;
        for k in 0..self.pivots.len() {
            let d = self.lu[(k, k)];
            log += d.abs().ln();
            sign *= d.signum();
        }
        (log, sign)
    }
}

/// Left-looking Cholesky; `None` when the matrix is not positive definite.
fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = a.lower_triangle();
    let s = l.as_mut_slice();
    for j in 0..n {
        for k in 0..j {
            let f = s[k * n + j];
            if f != 0.0 {
                let (head, tail) = s.split_at_mut(j * n);
                let colk = &head[k * n + j..k * n + n];
                let colj = &mut tail[j..n];
                for (cj, ck) in colj.iter_mut().zip(colk) {
                    *cj -= f * ck;
                }
            }
        }
        let d = s[j * n + j];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let root = d.sqrt();
        for i in j..n {
            s[j * n + i] /= root;
        }
    }
    Some(l)
}
