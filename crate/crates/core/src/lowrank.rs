//! Low-rank compression of matrix blocks.
//!
//! [`aca_compress`] builds a rank-revealing approximation of a block it can
//! only see through an entry generator, touching `O(rank * (m + n))` entries.
//! It is adaptive cross approximation with partial pivoting: each step picks a
//! pivot row, normalizes the residual row at the pivot column, takes the
//! residual column as the paired factor, and moves to the row where that
//! column is largest. [`svd_truncate`] is the dense route to the same
//! representation; the two are kept deliberately independent so each can
//! validate the other.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A rank-`r` block `U V^T` with its placement inside a larger matrix.
#[derive(Debug, Clone)]
pub struct LowRankBlock {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    row_offset: usize,
    col_offset: usize,
    truncated: bool,
}

impl LowRankBlock {
    fn new(u: DMatrix<f64>, v: DMatrix<f64>, truncated: bool) -> Self {
        debug_assert_eq!(u.ncols(), v.ncols());
        LowRankBlock {
            u,
            v,
            row_offset: 0,
            col_offset: 0,
            truncated,
        }
    }

    /// Left factor, `m x rank`.
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right factor, `n x rank`; the block is `u * v^T`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// True when the rank cap cut compression short of its tolerance.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Decompose into the `(u, v)` factor pair.
    pub fn into_factors(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.u, self.v)
    }

    pub fn row_offset(&self) -> usize {
        self.row_offset
    }

    pub fn col_offset(&self) -> usize {
        self.col_offset
    }

    /// Record where the block sits inside the matrix it was cut from.
    pub fn with_offsets(mut self, row_offset: usize, col_offset: usize) -> Self {
        self.row_offset = row_offset;
        self.col_offset = col_offset;
        self
    }

    /// Single reconstructed entry (block-local indices).
    pub fn eval(&self, i: usize, j: usize) -> f64 {
        (0..self.rank()).map(|l| self.u[(i, l)] * self.v[(j, l)]).sum()
    }

    /// Materialize `u * v^T`; meant for tests and small diagnostics.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

/// Compress an `m x n` block given by `entry` to relative Frobenius accuracy
/// `eps`, stopping at rank `max_rank`.
///
/// Stopping: a new term `u_k v_k^T` ends the sweep when
/// `|u_k| |v_k| <= eps * |S_k|_F` (the running approximation norm is tracked
/// incrementally) *and* a fixed random sample of `2 (m + n)` entries agrees
/// with the generator to `eps`; the negligible final term is discarded. An
/// all-zero pivot row is retried on up to three random rows before the sample
/// check may declare convergence; a sample entry still in disagreement
/// redirects the sweep to its row instead. Hitting `max_rank` first returns
/// the best-effort block with [`LowRankBlock::truncated`] set.
///
/// The `seed` fixes the sample set and any retry rows, making the result a
/// deterministic function of the arguments.
pub fn aca_compress<F>(
    entry: F,
    m: usize,
    n: usize,
    eps: f64,
    max_rank: usize,
    seed: u64,
) -> Result<LowRankBlock>
where
    F: Fn(usize, usize) -> f64,
{
    aca_compress_with_floor(entry, m, n, eps, max_rank, seed, 0.0)
}

/// [`aca_compress`] with an absolute negligibility threshold for the block
/// as a whole.
///
/// When every entry of the fixed `2 (m + n)` sample is at most `floor` in
/// magnitude, the stopping rule is capped at `floor`, so a block that is
/// negligible against the scale of the matrix it was cut from resolves to
/// rank zero (or near it) instead of chasing relative accuracy of
/// round-off-sized entries. A block with any sampled entry above `floor` is
/// compressed exactly as by [`aca_compress`]: the floor is a detector for
/// negligible blocks, never a license to leave visible structure behind.
/// `floor = 0` always recovers the purely relative rule.
pub fn aca_compress_with_floor<F>(
    entry: F,
    m: usize,
    n: usize,
    eps: f64,
    max_rank: usize,
    seed: u64,
    floor: f64,
) -> Result<LowRankBlock>
where
    F: Fn(usize, usize) -> f64,
{
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("cannot compress an empty block".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            value: eps,
            reason: "compression tolerance must lie in (0, 1)",
        });
    }
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "floor",
            value: floor,
            reason: "negligibility threshold must be finite and >= 0",
        });
    }
    if max_rank == 0 {
        return Err(Error::InvalidParameter {
            name: "max_rank",
            value: 0.0,
            reason: "rank cap must be >= 1",
        });
    }
    let limit = max_rank.min(m).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_ij: Vec<(usize, usize)> = (0..2 * (m + n))
        .map(|_| (rng.random_range(0..m), rng.random_range(0..n)))
        .collect();
    let sample_target: Vec<f64> = sample_ij.iter().map(|&(i, j)| entry(i, j)).collect();
    // The floor only applies when nothing sampled rises above it; a block
    // with visible structure is held to the full relative tolerance.
    let sample_max = sample_target.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
    let floor = if sample_max > floor { 0.0 } else { floor };
    let mut sample_approx = vec![0.0; sample_ij.len()];
    // Unbiased estimate of |A|_F^2 from the sample; the scale against which
    // "agrees to eps" is measured before any terms exist.
    let sample_scale = {
        let mean_sq =
            sample_target.iter().map(|t| t * t).sum::<f64>() / sample_target.len() as f64;
        (mean_sq * (m as f64) * (n as f64)).sqrt()
    };

    let mut us: Vec<DVector<f64>> = Vec::new();
    let mut vs: Vec<DVector<f64>> = Vec::new();
    let mut used_row = vec![false; m];
    let mut used_col = vec![false; n];
    let mut fro2 = 0.0f64; // |S_k|_F^2, maintained incrementally
    let mut truncated = false;
    let mut next_row = 0usize;

    let residual_row = |i: usize, us: &[DVector<f64>], vs: &[DVector<f64>]| -> DVector<f64> {
        let mut row = DVector::from_fn(n, |j, _| entry(i, j));
        for (ul, vl) in us.iter().zip(vs) {
            let w = ul[i];
            if w != 0.0 {
                row.axpy(-w, vl, 1.0);
            }
        }
        row
    };

    loop {
        if used_row.iter().all(|&u| u) || used_col.iter().all(|&u| u) {
            break; // every cross consumed: the block is exactly represented
        }

        // Locate a pivot row with a nonzero residual. Zero rows are retired
        // and replaced by random rows (three tries), then by the row of the
        // worst-disagreeing sample entry if the sample still objects.
        let mut pivot = None;
        let mut tries = 0;
        let mut candidate = if used_row[next_row] { None } else { Some(next_row) };
        let mut escalated = false;
        while let Some(i) = candidate {
            let row = residual_row(i, &us, &vs);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if !used_col[j] {
                    let a = row[j].abs();
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((j, a));
                    }
                }
            }
            match best {
                Some((j, a)) if a > 0.0 => {
                    pivot = Some((i, j, row));
                    break;
                }
                _ => {
                    used_row[i] = true; // resolved row; never revisit
                    candidate = if tries < 3 {
                        tries += 1;
                        random_unused(&used_row, &mut rng)
                    } else if !escalated {
                        escalated = true;
                        worst_sample_row(
                            &sample_ij,
                            &sample_target,
                            &sample_approx,
                            &used_row,
                            (eps * sample_scale.max(fro2.sqrt())).max(floor),
                        )
                    } else {
                        None
                    };
                }
            }
        }
        let Some((i_piv, j_piv, row)) = pivot else {
            break; // nothing left above the noise floor
        };

        let v_new = &row / row[j_piv];
        let mut u_new = DVector::from_fn(m, |i, _| entry(i, j_piv));
        for (ul, vl) in us.iter().zip(vs.iter()) {
            let w = vl[j_piv];
            if w != 0.0 {
                u_new.axpy(-w, ul, 1.0);
            }
        }

        // |S_k|^2 = |S_{k-1}|^2 + 2 sum_l (u_k.u_l)(v_l.v_k) + |u_k|^2 |v_k|^2
        let inc2 = u_new.norm_squared() * v_new.norm_squared();
        let cross: f64 = us
            .iter()
            .zip(vs.iter())
            .map(|(ul, vl)| u_new.dot(ul) * v_new.dot(vl))
            .sum();
        let fro2_with = (fro2 + 2.0 * cross + inc2).max(0.0);

        let scale = fro2.sqrt().max(sample_scale);
        if inc2.sqrt() <= (eps * fro2_with.sqrt()).max(floor)
            && samples_agree(&sample_target, &sample_approx, (eps * scale).max(floor))
        {
            break; // converged; the candidate term is below tolerance, drop it
        }
        if us.len() == limit {
            truncated = true; // wanted another term but the cap forbids it
            break;
        }

        used_row[i_piv] = true;
        used_col[j_piv] = true;
        for (idx, &(si, sj)) in sample_ij.iter().enumerate() {
            sample_approx[idx] += u_new[si] * v_new[sj];
        }
        fro2 = fro2_with;
        // steer to the row where the new column residual is largest
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if !used_row[i] {
                let a = u_new[i].abs();
                if best.is_none_or(|(_, b)| a > b) {
                    best = Some((i, a));
                }
            }
        }
        us.push(u_new);
        vs.push(v_new);
        if let Some((i, _)) = best {
            next_row = i;
        } // else: loop top exits, all rows consumed
    }

    let rank = us.len();
    let mut u = DMatrix::zeros(m, rank);
    let mut v = DMatrix::zeros(n, rank);
    for (l, (ul, vl)) in us.iter().zip(vs.iter()).enumerate() {
        u.set_column(l, ul);
        v.set_column(l, vl);
    }
    Ok(LowRankBlock::new(u, v, truncated))
}

fn random_unused(used: &[bool], rng: &mut ChaCha8Rng) -> Option<usize> {
    let free = used.iter().filter(|&&u| !u).count();
    if free == 0 {
        return None;
    }
    let pick = rng.random_range(0..free);
    used.iter()
        .enumerate()
        .filter(|(_, &u)| !u)
        .nth(pick)
        .map(|(i, _)| i)
}

fn worst_sample_row(
    sample_ij: &[(usize, usize)],
    target: &[f64],
    approx: &[f64],
    used_row: &[bool],
    tol: f64,
) -> Option<usize> {
    let mut worst: Option<(usize, f64)> = None;
    for (idx, &(i, _)) in sample_ij.iter().enumerate() {
        let err = (target[idx] - approx[idx]).abs();
        if err > tol && !used_row[i] && worst.is_none_or(|(_, w)| err > w) {
            worst = Some((i, err));
        }
    }
    worst.map(|(idx_row, _)| idx_row)
}

fn samples_agree(target: &[f64], approx: &[f64], tol: f64) -> bool {
    target
        .iter()
        .zip(approx)
        .all(|(t, a)| (t - a).abs() <= tol)
}

/// Dense SVD route to the same representation: smallest rank whose discarded
/// tail satisfies `sqrt(sum_i>r sigma_i^2) <= eps * |A|_F`.
pub fn svd_truncate(block: &DMatrix<f64>, eps: f64) -> Result<LowRankBlock> {
    if block.is_empty() {
        return Err(Error::InvalidInput("cannot compress an empty block".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            value: eps,
            reason: "compression tolerance must lie in (0, 1)",
        });
    }
    let svd = block.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::Factorization("SVD iteration failed to converge".into())
    })?;
    let sv = &svd.singular_values;
    let total2: f64 = sv.iter().map(|s| s * s).sum();
    let budget = eps * eps * total2;
    let mut rank = sv.len();
    let mut tail2 = 0.0;
    while rank > 0 {
        let t = tail2 + sv[rank - 1] * sv[rank - 1];
        if t <= budget {
            tail2 = t;
            rank -= 1;
        } else {
            break;
        }
    }
    let u_full = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut u = DMatrix::zeros(block.nrows(), rank);
    let mut v = DMatrix::zeros(block.ncols(), rank);
    for l in 0..rank {
        u.set_column(l, &(u_full.column(l) * sv[l]));
        v.set_column(l, &v_t.row(l).transpose());
    }
    Ok(LowRankBlock::new(u, v, false))
}
