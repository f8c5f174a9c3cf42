//! Hierarchical assembly and factorization of covariance matrices.
//!
//! In the kd-sorted ordering the covariance matrix is viewed as a binary
//! block hierarchy: each node splits its index range in two, the two
//! off-diagonal coupling blocks are stored in compressed form `u v^T` /
//! `v u^T`, and only the leaf diagonal blocks are dense. [`assemble`] builds
//! that tree; [`factorize`] rewrites it as a product of block-diagonal
//! factors
//!
//! ```text
//! C = D * B_deepest * ... * B_1 * B_0
//! ```
//!
//! where `D` carries the dense leaf blocks and each `B_t` is identity plus a
//! low-rank update per node at depth `t`. Each update block is inverted
//! through the Woodbury identity, so applying `C^{-1}` costs one small dense
//! solve per node, and `log |det C|` is the sum of leaf LU diagonals plus the
//! determinants of the small Woodbury systems.
//!
//! Compression failures degrade gracefully: an off-diagonal block that does
//! not reach tolerance within its rank cap collapses the node into a dense
//! leaf, so hostile geometries fall back toward a dense factorization
//! instead of losing accuracy.
//!
//! The public entry points accept and return data in the caller's original
//! point order; the kd permutation is applied internally.

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::kernels::{entry_unchecked, KernelSpec};
use crate::lowrank::aca_compress_with_floor;
use nalgebra::{storage::StorageMut, DMatrix, DVector, Dyn, Matrix};
use serde::Serialize;
use std::sync::Arc;

/// Largest dense block the fallback path may materialize.
pub const DENSE_LEAF_GUARD: usize = 20_000;

/// Hierarchically compressed covariance matrix in kd-sorted order.
#[derive(Debug, Clone)]
pub struct HodlrTree {
    n: usize,
    levels: usize,
    eps: f64,
    p_max: usize,
    perm: Vec<usize>,
    root: Node,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        block: DMatrix<f64>,
        /// true when this leaf exists because compression hit its rank cap
        pruned: bool,
    },
    Branch {
        start: usize,
        top_len: usize,
        bot_len: usize,
        /// top-right block is `u v^T`, bottom-left is `v u^T`
        u: Arc<DMatrix<f64>>,
        v: Arc<DMatrix<f64>>,
        top: Box<Node>,
        bot: Box<Node>,
    },
}

/// Structural description of an assembled tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeSummary {
    pub n: usize,
    pub levels: usize,
    pub leaf_count: usize,
    pub pruned_leaves: usize,
    pub largest_leaf: usize,
    /// maximum off-diagonal rank per branch depth, `[0]` = root
    pub max_rank_per_depth: Vec<usize>,
}

/// Assemble the hierarchical representation of
/// `C_ij = sigma^2 delta_ij + k(x_i, x_j)` over a kd-sorted point set.
///
/// The split depth is `floor(log2(n / p_max))` (at least zero), giving leaf
/// blocks of at most `2 p_max` rows; subrange splits put `ceil(m/2)`
/// rows in the top child, matching [`crate::geometry::kd_sort`]. Every
/// off-diagonal block is compressed to relative accuracy `eps` with rank cap
/// `max(1, min(m, n)/2)`; a block that cannot reach tolerance under the cap
/// collapses its node into a dense leaf (counted in
/// [`TreeSummary::pruned_leaves`]) unless that leaf would exceed
/// [`DENSE_LEAF_GUARD`].
///
/// The result is a deterministic function of the inputs.
pub fn assemble(spec: &KernelSpec, points: &PointSet, eps: f64, p_max: usize) -> Result<HodlrTree> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            value: eps,
            reason: "compression tolerance must lie in (0, 1)",
        });
    }
    if p_max == 0 {
        return Err(Error::InvalidParameter {
            name: "p_max",
            value: 0.0,
            reason: "leaf size must be >= 1",
        });
    }
    let n = points.len();
    let ratio = n / p_max;
    let levels = if ratio >= 1 { ratio.ilog2() as usize } else { 0 };
    // Blocks are compressed relative to themselves, but never beyond the
    // matrix's own scale: residual terms below eps times the diagonal entry
    // are negligible no matter how small the block is. Without this, a
    // far-field block whose entries are all round-off-sized would be
    // resolved to full relative accuracy at substantial rank.
    let floor = eps * (spec.noise_variance() + spec.value_from_sqdist(0.0).abs());
    let root = build_node(spec, points, 0, n, 0, levels, eps, floor)?;
    Ok(HodlrTree {
        n,
        levels,
        eps,
        p_max,
        perm: points.perm().to_vec(),
        root,
    })
}

fn build_node(
    spec: &KernelSpec,
    points: &PointSet,
    start: usize,
    len: usize,
    depth: usize,
    levels: usize,
    eps: f64,
    floor: f64,
) -> Result<Node> {
    if depth == levels || len < 2 {
        return Ok(dense_leaf(spec, points, start, len, false));
    }
    let top_len = len.div_ceil(2);
    let bot_len = len - top_len;
    let col0 = start + top_len;
    let pair = aca_compress_with_floor(
        |i, j| sorted_entry(spec, points, start + i, col0 + j),
        top_len,
        bot_len,
        eps,
        (top_len.min(bot_len) / 2).max(1),
        block_seed(start, top_len, len),
        floor,
    )?
    .with_offsets(start, col0);
    if pair.truncated() {
        // The coupling is essentially full-rank; compressing deeper cannot
        // help, so absorb the whole node into one dense block.
        if len > DENSE_LEAF_GUARD {
            return Err(Error::SizeGuard(format!(
                "off-diagonal block at rows {start}..{} failed to compress and its dense \
                 fallback of {len} rows exceeds the cap of {DENSE_LEAF_GUARD}",
                start + len
            )));
        }
        return Ok(dense_leaf(spec, points, start, len, true));
    }
    let top = build_node(spec, points, start, top_len, depth + 1, levels, eps, floor)?;
    let bot = build_node(spec, points, col0, bot_len, depth + 1, levels, eps, floor)?;
    let (u, v) = pair.into_factors();
    Ok(Node::Branch {
        start,
        top_len,
        bot_len,
        u: Arc::new(u),
        v: Arc::new(v),
        top: Box::new(top),
        bot: Box::new(bot),
    })
}

fn dense_leaf(spec: &KernelSpec, points: &PointSet, start: usize, len: usize, pruned: bool) -> Node {
    let mut block = DMatrix::zeros(len, len);
    for a in 0..len {
        for b in a..len {
            let v = sorted_entry(spec, points, start + a, start + b);
            block[(a, b)] = v;
            block[(b, a)] = v;
        }
    }
    Node::Leaf {
        start,
        block,
        pruned,
    }
}

fn sorted_entry(spec: &KernelSpec, points: &PointSet, pi: usize, pj: usize) -> f64 {
    entry_unchecked(spec, points, points.original_index(pi), points.original_index(pj))
}

/// Deterministic per-block seed for compression sampling (splitmix64 mix of
/// the block's position), so rebuilding a tree reproduces it bitwise.
fn block_seed(start: usize, split: usize, len: usize) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64
        ^ (start as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (split as u64).rotate_left(21)
        ^ (len as u64).rotate_left(42);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl HodlrTree {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Requested split depth (`floor(log2(n / p_max))`, at least 0).
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    /// Sorted position -> original index, as inherited from the point set.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn summary(&self) -> TreeSummary {
        let mut s = TreeSummary {
            n: self.n,
            levels: self.levels,
            leaf_count: 0,
            pruned_leaves: 0,
            largest_leaf: 0,
            max_rank_per_depth: Vec::new(),
        };
        fn walk(node: &Node, depth: usize, s: &mut TreeSummary) {
            match node {
                Node::Leaf { block, pruned, .. } => {
                    s.leaf_count += 1;
                    s.largest_leaf = s.largest_leaf.max(block.nrows());
                    if *pruned {
                        s.pruned_leaves += 1;
                    }
                }
                Node::Branch { u, top, bot, .. } => {
                    if s.max_rank_per_depth.len() <= depth {
                        s.max_rank_per_depth.resize(depth + 1, 0);
                    }
                    s.max_rank_per_depth[depth] = s.max_rank_per_depth[depth].max(u.ncols());
                    walk(top, depth + 1, s);
                    walk(bot, depth + 1, s);
                }
            }
        }
        walk(&self.root, 0, &mut s);
        s
    }

    /// `C X` for `X` given in original point order (`n x k`).
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "operand has {} rows, matrix is {}x{}",
                x.nrows(),
                self.n,
                self.n
            )));
        }
        let xs = gather_rows(x, &self.perm);
        let mut ys = DMatrix::zeros(self.n, x.ncols());
        apply_node(&self.root, &xs, &mut ys);
        Ok(scatter_rows(&ys, &self.perm))
    }

    /// Convenience wrapper of [`HodlrTree::apply`] for a single vector.
    pub fn apply_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.apply(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok(DVector::from_column_slice(y.as_slice()))
    }

    /// Materialize the full matrix in *sorted* order; diagnostic, capped at
    /// [`DENSE_LEAF_GUARD`] rows.
    pub fn to_dense_sorted(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_LEAF_GUARD {
            return Err(Error::SizeGuard(format!(
                "refusing to materialize {} rows densely",
                self.n
            )));
        }
        let mut a = DMatrix::zeros(self.n, self.n);
        fn walk(node: &Node, a: &mut DMatrix<f64>) {
            match node {
                Node::Leaf { start, block, .. } => {
                    a.view_mut((*start, *start), (block.nrows(), block.ncols()))
                        .copy_from(block);
                }
                Node::Branch {
                    start,
                    top_len,
                    bot_len,
                    u,
                    v,
                    top,
                    bot,
                } => {
                    let ut = u.transpose();
                    let vt = v.transpose();
                    a.view_mut((*start, start + top_len), (*top_len, *bot_len))
                        .gemm(1.0, &**u, &vt, 0.0);
                    a.view_mut((start + top_len, *start), (*bot_len, *top_len))
                        .gemm(1.0, &**v, &ut, 0.0);
                    walk(top, a);
                    walk(bot, a);
                }
            }
        }
        walk(&self.root, &mut a);
        Ok(a)
    }
}

fn apply_node(node: &Node, xs: &DMatrix<f64>, ys: &mut DMatrix<f64>) {
    match node {
        Node::Leaf { start, block, .. } => {
            let m = block.nrows();
            let x_view = xs.rows(*start, m);
            let mut y_view = ys.rows_mut(*start, m);
            y_view.gemm(1.0, block, &x_view, 1.0);
        }
        Node::Branch {
            start,
            top_len,
            bot_len,
            u,
            v,
            top,
            bot,
        } => {
            let r = u.ncols();
            if r > 0 {
                let x_top = xs.rows(*start, *top_len);
                let x_bot = xs.rows(start + top_len, *bot_len);
                let mut t = DMatrix::zeros(r, xs.ncols());
                t.gemm_tr(1.0, v, &x_bot, 0.0);
                ys.rows_mut(*start, *top_len).gemm(1.0, &**u, &t, 1.0);
                t.gemm_tr(1.0, u, &x_top, 0.0);
                ys.rows_mut(start + top_len, *bot_len).gemm(1.0, &**v, &t, 1.0);
            }
            apply_node(top, xs, ys);
            apply_node(bot, xs, ys);
        }
    }
}

fn gather_rows(x: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (pos, &orig) in perm.iter().enumerate() {
        for c in 0..x.ncols() {
            out[(pos, c)] = x[(orig, c)];
        }
    }
    out
}

fn scatter_rows(xs: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(xs.nrows(), xs.ncols());
    for (pos, &orig) in perm.iter().enumerate() {
        for c in 0..xs.ncols() {
            out[(orig, c)] = xs[(pos, c)];
        }
    }
    out
}

/// Multiplicative factorization of an assembled tree.
///
/// Holds one LU per dense leaf and one Woodbury block per branch, ordered so
/// that applying inverses front-to-back yields `C^{-1}`.
#[derive(Debug)]
pub struct HodlrFactorization {
    n: usize,
    perm: Vec<usize>,
    leaves: Vec<LeafFactor>,
    /// branch factors grouped by depth, deepest first
    levels: Vec<LevelFactor>,
    log_abs_det: f64,
    sign: f64,
}

#[derive(Debug)]
struct LeafFactor {
    start: usize,
    lu: PivotedLu,
    log_abs_det: f64,
    sign: f64,
}

#[derive(Debug)]
struct LevelFactor {
    blocks: Vec<SmwBlock>,
    log_abs_det: f64,
    sign: f64,
}

/// One branch factor `B = I + [0, u~ v^T; v~ u^T, 0]`, inverted via the
/// Woodbury identity with cached LU of the `2r x 2r` inner system
/// `M = I + [0, v^T v~; u^T u~, 0]`.
#[derive(Debug)]
struct SmwBlock {
    start: usize,
    m_top: usize,
    m_bot: usize,
    u_tilde: DMatrix<f64>,
    v_tilde: DMatrix<f64>,
    u: Arc<DMatrix<f64>>,
    v: Arc<DMatrix<f64>>,
    inner: PivotedLu,
}

impl SmwBlock {
    fn len(&self) -> usize {
        self.m_top + self.m_bot
    }

    fn rank(&self) -> usize {
        self.u_tilde.ncols()
    }

    /// `b <- B^{-1} b` for `b` covering exactly this block's rows.
    fn solve_in_place<S: StorageMut<f64, Dyn, Dyn>>(&self, b: &mut Matrix<f64, Dyn, Dyn, S>) {
        let r = self.rank();
        let k = b.ncols();
        let mut small = DMatrix::zeros(2 * r, k);
        {
            let top = b.rows(0, self.m_top);
            let bot = b.rows(self.m_top, self.m_bot);
            small.rows_mut(0, r).gemm_tr(1.0, &*self.v, &bot, 0.0);
            small.rows_mut(r, r).gemm_tr(1.0, &*self.u, &top, 0.0);
        }
        self.inner.solve_in_place(&mut small);
        b.rows_mut(0, self.m_top)
            .gemm(-1.0, &self.u_tilde, &small.rows(0, r), 1.0);
        b.rows_mut(self.m_top, self.m_bot)
            .gemm(-1.0, &self.v_tilde, &small.rows(r, r), 1.0);
    }

    /// Dense image of this factor block (diagnostics).
    fn to_dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::identity(m, m);
        let ut = self.u.transpose();
        let vt = self.v.transpose();
        a.view_mut((0, self.m_top), (self.m_top, self.m_bot))
            .gemm(1.0, &self.u_tilde, &vt, 0.0);
        a.view_mut((self.m_top, 0), (self.m_bot, self.m_top))
            .gemm(1.0, &self.v_tilde, &ut, 0.0);
        a
    }
}

/// Factor an assembled tree into the block-diagonal product form.
///
/// Works from the leaves upward: leaf blocks are LU-factored and their
/// inverses pushed through the left factors (`u`, `v`) of every enclosing
/// branch; then each depth, deepest first, forms its Woodbury blocks from the
/// updated left factors and pushes their inverses outward the same way. The
/// log-determinant falls out for free as the sum of leaf LU diagonals and
/// inner-system determinants.
pub fn factorize(tree: &HodlrTree) -> Result<HodlrFactorization> {
    // Flatten the tree into indexable work slots; parents precede children.
    struct BranchSlot<'t> {
        start: usize,
        top_len: usize,
        bot_len: usize,
        depth: usize,
        parent: Option<usize>,
        u: &'t Arc<DMatrix<f64>>,
        v: &'t Arc<DMatrix<f64>>,
        u_work: DMatrix<f64>,
        v_work: DMatrix<f64>,
    }
    struct LeafSlot<'t> {
        start: usize,
        block: &'t DMatrix<f64>,
        parent: Option<usize>,
    }

    fn collect<'t>(
        node: &'t Node,
        depth: usize,
        parent: Option<usize>,
        branches: &mut Vec<BranchSlot<'t>>,
        leaves: &mut Vec<LeafSlot<'t>>,
    ) {
        match node {
            Node::Leaf { start, block, .. } => leaves.push(LeafSlot {
                start: *start,
                block,
                parent,
            }),
            Node::Branch {
                start,
                top_len,
                bot_len,
                u,
                v,
                top,
                bot,
            } => {
                let idx = branches.len();
                branches.push(BranchSlot {
                    start: *start,
                    top_len: *top_len,
                    bot_len: *bot_len,
                    depth,
                    parent,
                    u,
                    v,
                    u_work: (**u).clone(),
                    v_work: (**v).clone(),
                });
                collect(top, depth + 1, Some(idx), branches, leaves);
                collect(bot, depth + 1, Some(idx), branches, leaves);
            }
        }
    }

    let mut branches = Vec::new();
    let mut leaves = Vec::new();
    collect(&tree.root, 0, None, &mut branches, &mut leaves);

    // Apply an inverse acting on sorted rows [start, start+len) to the
    // overlapping row slice of every enclosing branch's left factors.
    fn push_through_ancestors(
        branches: &mut [BranchSlot<'_>],
        mut parent: Option<usize>,
        start: usize,
        len: usize,
        mut apply: impl FnMut(&mut DMatrix<f64>, usize, usize),
    ) {
        while let Some(a) = parent {
            let slot = &mut branches[a];
            let bot_start = slot.start + slot.top_len;
            if start < bot_start {
                debug_assert!(start + len <= bot_start);
                apply(&mut slot.u_work, start - slot.start, len);
            } else {
                debug_assert!(start + len <= bot_start + slot.bot_len);
                apply(&mut slot.v_work, start - bot_start, len);
            }
            parent = slot.parent;
        }
    }

    let mut leaf_factors = Vec::with_capacity(leaves.len());
    let mut total_log = 0.0;
    let mut total_sign = 1.0;
    for leaf in &leaves {
        let len = leaf.block.nrows();
        let lu = PivotedLu::factor(leaf.block.clone()).map_err(|_| {
            Error::Singular(format!(
                "dense diagonal block covering sorted rows {}..{} is singular",
                leaf.start,
                leaf.start + len
            ))
        })?;
        push_through_ancestors(
            &mut branches,
            leaf.parent,
            leaf.start,
            len,
            |work, off, l| {
                let mut rows = work.rows_mut(off, l);
                lu.solve_in_place(&mut rows);
            },
        );
        let (log_abs_det, sign) = lu.log_abs_det();
        total_log += log_abs_det;
        total_sign *= sign;
        leaf_factors.push(LeafFactor {
            start: leaf.start,
            lu,
            log_abs_det,
            sign,
        });
    }

    let mut levels = Vec::new();
    let max_depth = branches.iter().map(|b| b.depth).max();
    if let Some(max_depth) = max_depth {
        for depth in (0..=max_depth).rev() {
            let at_depth: Vec<usize> = (0..branches.len())
                .filter(|&i| branches[i].depth == depth)
                .collect();
            if at_depth.is_empty() {
                continue;
            }
            let mut blocks = Vec::new();
            let mut level_log = 0.0;
            let mut level_sign = 1.0;
            for bi in at_depth {
                let (start, m_top, m_bot, parent, u, v, u_tilde, v_tilde) = {
                    let slot = &mut branches[bi];
                    (
                        slot.start,
                        slot.top_len,
                        slot.bot_len,
                        slot.parent,
                        Arc::clone(slot.u),
                        Arc::clone(slot.v),
                        std::mem::take(&mut slot.u_work),
                        std::mem::take(&mut slot.v_work),
                    )
                };
                let r = u.ncols();
                if r == 0 {
                    continue; // identity factor block
                }
                let mut m = DMatrix::identity(2 * r, 2 * r);
                m.view_mut((0, r), (r, r)).gemm_tr(1.0, &*v, &v_tilde, 0.0);
                m.view_mut((r, 0), (r, r)).gemm_tr(1.0, &*u, &u_tilde, 0.0);
                let inner = PivotedLu::factor(m).map_err(|_| {
                    Error::Singular(format!(
                        "low-rank update system at depth {depth}, sorted rows {start}..{}, \
                         is singular",
                        start + m_top + m_bot
                    ))
                })?;
                let (log_abs_det, sign) = inner.log_abs_det();
                let block = SmwBlock {
                    start,
                    m_top,
                    m_bot,
                    u_tilde,
                    v_tilde,
                    u,
                    v,
                    inner,
                };
                push_through_ancestors(
                    &mut branches,
                    parent,
                    start,
                    block.len(),
                    |work, off, l| {
                        debug_assert_eq!(l, block.len());
                        let mut rows = work.rows_mut(off, l);
                        block.solve_in_place(&mut rows);
                    },
                );
                level_log += log_abs_det;
                level_sign *= sign;
                blocks.push(block);
            }
            total_log += level_log;
            total_sign *= level_sign;
            levels.push(LevelFactor {
                blocks,
                log_abs_det: level_log,
                sign: level_sign,
            });
        }
    }

    Ok(HodlrFactorization {
        n: tree.n,
        perm: tree.perm.clone(),
        leaves: leaf_factors,
        levels,
        log_abs_det: total_log,
        sign: total_sign,
    })
}

impl HodlrFactorization {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `C^{-1} B` for `B` given in original point order (`n x k`).
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, matrix is {}x{}",
                rhs.nrows(),
                self.n,
                self.n
            )));
        }
        let mut work = gather_rows(rhs, &self.perm);
        for leaf in &self.leaves {
            let mut rows = work.rows_mut(leaf.start, leaf.lu.n());
            leaf.lu.solve_in_place(&mut rows);
        }
        for level in &self.levels {
            for block in &level.blocks {
                let mut rows = work.rows_mut(block.start, block.len());
                block.solve_in_place(&mut rows);
            }
        }
        Ok(scatter_rows(&work, &self.perm))
    }

    /// Convenience wrapper of [`HodlrFactorization::solve`] for one vector.
    pub fn solve_vector(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    /// `log |det C|`, accumulated exactly once during factorization.
    ///
    /// `-inf` can only appear through underflow of an individual pivot
    /// magnitude; a hard zero pivot fails [`factorize`] instead.
    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    /// Sign of `det C` (`+1.0` or `-1.0`).
    pub fn det_sign(&self) -> f64 {
        self.sign
    }

    /// True when the determinant degenerated to zero or the log-determinant
    /// lost meaning (`-inf` / NaN).
    pub fn is_singular(&self) -> bool {
        !self.log_abs_det.is_finite() || self.sign == 0.0
    }

    /// Number of block-diagonal factors, dense leaf factor included.
    pub fn num_factors(&self) -> usize {
        1 + self.levels.len()
    }

    /// `(log |det F_i|, sign)` of factor `i` in application order
    /// (0 = dense leaf factor, then branch levels deepest-first).
    pub fn factor_log_abs_det(&self, idx: usize) -> Result<(f64, f64)> {
        if idx == 0 {
            let log = self.leaves.iter().map(|l| l.log_abs_det).sum();
            let sign = self.leaves.iter().map(|l| l.sign).product();
            Ok((log, sign))
        } else {
            let level = self.levels.get(idx - 1).ok_or_else(|| {
                Error::InvalidInput(format!("factor index {idx} out of range"))
            })?;
            Ok((level.log_abs_det, level.sign))
        }
    }

    /// Dense image of factor `i` in sorted order (diagnostics; capped).
    pub fn factor_to_dense(&self, idx: usize) -> Result<DMatrix<f64>> {
        if self.n > DENSE_LEAF_GUARD {
            return Err(Error::SizeGuard(format!(
                "refusing to materialize {} rows densely",
                self.n
            )));
        }
        if idx == 0 {
            let mut a = DMatrix::identity(self.n, self.n);
            for leaf in &self.leaves {
                let block = leaf.lu.reconstruct();
                a.view_mut((leaf.start, leaf.start), (block.nrows(), block.ncols()))
                    .copy_from(&block);
            }
            Ok(a)
        } else {
            let level = self.levels.get(idx - 1).ok_or_else(|| {
                Error::InvalidInput(format!("factor index {idx} out of range"))
            })?;
            let mut a = DMatrix::identity(self.n, self.n);
            for block in &level.blocks {
                let dense = block.to_dense();
                a.view_mut((block.start, block.start), (dense.nrows(), dense.ncols()))
                    .copy_from(&dense);
            }
            Ok(a)
        }
    }

    /// Product of all factors in order — the matrix the factorization
    /// represents, in sorted order (diagnostics; capped).
    pub fn product_to_dense(&self) -> Result<DMatrix<f64>> {
        let mut prod = self.factor_to_dense(0)?;
        for idx in 1..self.num_factors() {
            prod *= self.factor_to_dense(idx)?;
        }
        Ok(prod)
    }
}

/// Partial-pivoted LU used for leaf blocks and Woodbury inner systems.
///
/// Distinct from the dense reference module's implementation on purpose: the
/// reference must stay independent of the code it validates.
#[derive(Debug)]
struct PivotedLu {
    lu: DMatrix<f64>,
    pivots: Vec<usize>,
    pivot_sign: f64,
}

impl PivotedLu {
    fn factor(mut a: DMatrix<f64>) -> Result<PivotedLu> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut pivots = vec![0usize; n];
        let mut pivot_sign = 1.0;
        let s = a.as_mut_slice();
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
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot at step {k}")));
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
        Ok(PivotedLu {
            lu: a,
            pivots,
            pivot_sign,
        })
    }

    fn n(&self) -> usize {
        self.pivots.len()
    }

    fn solve_in_place<S: StorageMut<f64, Dyn, Dyn>>(&self, b: &mut Matrix<f64, Dyn, Dyn, S>) {
        let n = self.n();
        debug_assert_eq!(b.nrows(), n);
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
        for k in 0..self.n() {
            let d = self.lu[(k, k)];
            log += d.abs().ln();
            sign *= d.signum();
        }
        (log, sign)
    }

    /// Undo the factorization: `P^{-1} L U` (diagnostics).
    fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut prod = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                // sum_{k <= min(i,j)} L[i,k] U[k,j], with L unit lower
                let mut acc = if i <= j { self.lu[(i, j)] } else { 0.0 };
                for k in 0..i.min(j + 1) {
                    acc += self.lu[(i, k)] * self.lu[(k, j)];
                }
                prod[(i, j)] = acc;
            }
        }
        for k in (0..n).rev() {
            if self.pivots[k] != k {
                prod.swap_rows(k, self.pivots[k]);
            }
        }
        prod
    }
}
