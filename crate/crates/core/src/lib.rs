//! Direct solver for Gaussian-process covariance matrices.
//!
//! A covariance matrix built from a smooth kernel over scattered points,
//! `C = sigma^2 I + K`, has off-diagonal blocks of rapidly decaying numerical
//! rank once the points are ordered so that index distance tracks spatial
//! distance. This crate exploits that structure: points are sorted along a
//! kd-tree, off-diagonal blocks are compressed by adaptive cross
//! approximation, and the resulting hierarchical matrix is factored into a
//! product of block-diagonal terms, each an identity plus a low-rank update.
//! Factorization costs roughly `O(n log^2 n)`; solves and log-determinants
//! are `O(n log n)`.
//!
//! The crate is organized around the pipeline:
//!
//! 1. [`kernels`] — kernel families and covariance entry evaluation,
//! 2. [`geometry`] — kd-tree ordering of the point set,
//! 3. [`lowrank`] — low-rank block compression (cross approximation, plus an
//!    SVD route used for validation),
//! 4. [`hodlr`] — hierarchical assembly, factorization, solve, matvec and
//!    log-determinant,
//! 5. [`gp`] — Gaussian-process regression and marginal likelihood on top of
//!    the solver,
//! 6. [`dense`] — a brute-force dense reference used for cross-checking.

pub mod dense;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod hodlr;
pub mod kernels;
pub mod lowrank;

pub use error::{Error, Result};
pub use geometry::{kd_sort, PointSet};
pub use gp::{loglik_grid_scan, GpModel, ScanPoint};
pub use hodlr::{assemble, factorize, HodlrFactorization, HodlrTree};
pub use kernels::{KernelFamily, KernelSpec};
pub use lowrank::{aca_compress, aca_compress_with_floor, svd_truncate, LowRankBlock};
