//! Reproducible experiment drivers: manufactured-solution solves with phase
//! timings, scaling sweeps for both engines, the regression-error sweep over
//! compression tolerance, and the high-dimension stress runs.
//!
//! Every driver is deterministic for a given seed. Timings are wall-clock
//! and machine-bound; accuracy columns are the reproducible part.

use crate::error::{CliError, CliResult};
use gphodlr::dense::{dense_assemble, dense_factorize};
use gphodlr::geometry::uniform_points;
use gphodlr::kernels::eval_entry;
use gphodlr::{assemble, factorize, kd_sort, GpModel, KernelFamily, KernelSpec, PointSet};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Which solver backs a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Hodlr,
    Dense,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Hodlr => "hodlr",
            Engine::Dense => "dense",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hodlr" => Ok(Engine::Hodlr),
            "dense" => Ok(Engine::Dense),
            other => Err(format!("unknown engine '{other}' (expected hodlr or dense)")),
        }
    }
}

/// One manufactured-solution run: phase timings plus accuracy columns.
#[derive(Debug, Clone, Serialize)]
pub struct SolveStats {
    pub engine: &'static str,
    pub kernel: &'static str,
    pub n: usize,
    pub dim: usize,
    pub assembly_s: f64,
    pub factor_s: f64,
    pub solve_s: f64,
    pub det_s: f64,
    pub rel_error: f64,
    pub log_abs_det: f64,
    pub det_sign: f64,
    pub levels: usize,
    pub max_rank: usize,
    pub pruned_leaves: usize,
}

/// Configuration of a manufactured-solution run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: KernelSpec,
    pub engine: Engine,
    pub n: usize,
    pub dim: usize,
    /// points are drawn uniformly from `[-half_width, half_width]^dim`
    pub half_width: f64,
    pub eps: f64,
    pub p_max: usize,
    pub seed: u64,
    /// timing repetitions; the reported time per phase is the median
    pub repeats: usize,
    /// verify against a right-hand side evaluated entry-exactly (`O(n^2)`)
    /// instead of through the compressed operator
    pub exact_reference: bool,
}

impl RunConfig {
    pub fn new(spec: KernelSpec, n: usize) -> RunConfig {
        RunConfig {
            spec,
            engine: Engine::Hodlr,
            n,
            dim: 1,
            half_width: 3.0,
            eps: 1e-12,
            p_max: 20,
            seed: 0,
            repeats: 1,
            exact_reference: n <= 4096,
        }
    }
}

/// splitmix64 step, for deriving independent per-case seeds from a base.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Known solution the manufactured right-hand sides are built from:
/// smooth, mean-shifted, no RNG involved.
fn manufactured_solution(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| ((i as f64) * 0.37).sin() + 0.25)
}

/// `b = C x` with every entry evaluated exactly, never materializing `C`.
fn exact_rhs(spec: &KernelSpec, pts: &PointSet, x: &DVector<f64>) -> CliResult<DVector<f64>> {
    let n = pts.len();
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += eval_entry(spec, pts, i, j)? * x[j];
        }
        b[i] = acc;
    }
    Ok(b)
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Run one solve with points drawn fresh from the config's seed.
pub fn manufactured_run(cfg: &RunConfig) -> CliResult<SolveStats> {
    let coords = uniform_points(cfg.n, cfg.dim, cfg.half_width, cfg.seed);
    run_on_points(cfg, &coords)
}

/// Run one solve on caller-provided coordinates (row-major).
pub fn run_on_points(cfg: &RunConfig, coords: &[f64]) -> CliResult<SolveStats> {
    if cfg.repeats == 0 {
        return Err(CliError::Config("repeats must be >= 1".into()));
    }
    let pts = kd_sort(coords, cfg.dim, cfg.p_max)?;
    let x_star = manufactured_solution(cfg.n);
    let kernel = cfg.spec.family().name();

    let mut assembly_t = Vec::with_capacity(cfg.repeats);
    let mut factor_t = Vec::with_capacity(cfg.repeats);
    let mut solve_t = Vec::with_capacity(cfg.repeats);
    let mut det_t = Vec::with_capacity(cfg.repeats);

    match cfg.engine {
        Engine::Hodlr => {
            let mut last = None;
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                let tree = assemble(&cfg.spec, &pts, cfg.eps, cfg.p_max)?;
                assembly_t.push(t0.elapsed().as_secs_f64());

                let t0 = Instant::now();
                let fact = factorize(&tree)?;
                factor_t.push(t0.elapsed().as_secs_f64());

                let b = if cfg.exact_reference {
                    exact_rhs(&cfg.spec, &pts, &x_star)?
                } else {
                    tree.apply_vector(&x_star)?
                };
                let t0 = Instant::now();
                let x = fact.solve_vector(&b)?;
                solve_t.push(t0.elapsed().as_secs_f64());

                let t0 = Instant::now();
                let log_abs_det = fact.log_abs_det();
                det_t.push(t0.elapsed().as_secs_f64());

                last = Some((tree, fact, x, log_abs_det));
            }
            let (tree, fact, x, log_abs_det) = last.expect("repeats >= 1");
            let summary = tree.summary();
            Ok(SolveStats {
                engine: cfg.engine.name(),
                kernel,
                n: cfg.n,
                dim: cfg.dim,
                assembly_s: median(&mut assembly_t),
                factor_s: median(&mut factor_t),
                solve_s: median(&mut solve_t),
                det_s: median(&mut det_t),
                rel_error: (&x - &x_star).norm() / x_star.norm(),
                log_abs_det,
                det_sign: fact.det_sign(),
                levels: summary.levels,
                max_rank: summary.max_rank_per_depth.iter().copied().max().unwrap_or(0),
                pruned_leaves: summary.pruned_leaves,
            })
        }
        Engine::Dense => {
            let mut last = None;
            for _ in 0..cfg.repeats {
                let t0 = Instant::now();
                let dense = dense_assemble(&cfg.spec, &pts)?;
                assembly_t.push(t0.elapsed().as_secs_f64());

                let t0 = Instant::now();
                let fact = dense_factorize(&dense)?;
                factor_t.push(t0.elapsed().as_secs_f64());

                let b = dense.matrix() * &x_star;
                let t0 = Instant::now();
                let x = fact.solve(&nalgebra::DMatrix::from_column_slice(
                    cfg.n,
                    1,
                    b.as_slice(),
                ))?;
                solve_t.push(t0.elapsed().as_secs_f64());

                let t0 = Instant::now();
                let det = fact.log_abs_det();
                det_t.push(t0.elapsed().as_secs_f64());

                last = Some((DVector::from_column_slice(x.as_slice()), det));
            }
            let (x, (log_abs_det, det_sign)) = last.expect("repeats >= 1");
            Ok(SolveStats {
                engine: cfg.engine.name(),
                kernel,
                n: cfg.n,
                dim: cfg.dim,
                assembly_s: median(&mut assembly_t),
                factor_s: median(&mut factor_t),
                solve_s: median(&mut solve_t),
                det_s: median(&mut det_t),
                rel_error: (&x - &x_star).norm() / x_star.norm(),
                log_abs_det,
                det_sign,
                levels: 0,
                max_rank: 0,
                pruned_leaves: 0,
            })
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let lx = x.ln();
        let ly = y.max(1e-9).ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (k * sxy - sx * sy) / (k * sxx - sx * sx)
}

/// Configuration of the factor-time scaling comparison.
#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub spec: KernelSpec,
    pub hodlr_ns: Vec<usize>,
    pub dense_ns: Vec<usize>,
    pub eps: f64,
    pub p_max: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl ScalingConfig {
    /// The comparison at its standard sizes: hierarchical engine on
    /// `n = 2^13..2^17`, dense engine on `n = 256..2048`.
    pub fn standard(seed: u64) -> ScalingConfig {
        ScalingConfig {
            spec: KernelSpec::new(KernelFamily::Gaussian, 2.0).expect("valid spec"),
            hodlr_ns: vec![8192, 16384, 32768, 65536, 131072],
            dense_ns: vec![256, 512, 1024, 2048],
            eps: 1e-12,
            p_max: 20,
            seed,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub hodlr: Vec<SolveStats>,
    pub dense: Vec<SolveStats>,
    /// log-log slope of hierarchical factor time over `hodlr_ns`
    pub hodlr_factor_slope: f64,
    /// log-log slope of dense factor time over `dense_ns`
    pub dense_factor_slope: f64,
}

/// Time factorization against size for both engines and fit slopes.
pub fn scaling_run(cfg: &ScalingConfig) -> CliResult<ScalingReport> {
    let mut hodlr = Vec::new();
    for &n in &cfg.hodlr_ns {
        let mut rc = RunConfig::new(cfg.spec.clone(), n);
        rc.eps = cfg.eps;
        rc.p_max = cfg.p_max;
        rc.seed = derive_seed(cfg.seed, n as u64);
        // repetition is for jitter on short runs; the big sizes are long
        // enough (and expensive enough) to time once
        rc.repeats = if n <= 100_000 { cfg.repeats } else { 1 };
        rc.exact_reference = false;
        hodlr.push(manufactured_run(&rc)?);
    }
    let mut dense = Vec::new();
    for &n in &cfg.dense_ns {
        let mut rc = RunConfig::new(cfg.spec.clone(), n);
        rc.engine = Engine::Dense;
        rc.eps = cfg.eps;
        rc.p_max = cfg.p_max;
        rc.seed = derive_seed(cfg.seed, n as u64);
        rc.repeats = cfg.repeats;
        dense.push(manufactured_run(&rc)?);
    }
    let hodlr_pts: Vec<(f64, f64)> = hodlr.iter().map(|s| (s.n as f64, s.factor_s)).collect();
    let dense_pts: Vec<(f64, f64)> = dense.iter().map(|s| (s.n as f64, s.factor_s)).collect();
    Ok(ScalingReport {
        hodlr_factor_slope: log_log_slope(&hodlr_pts),
        dense_factor_slope: log_log_slope(&dense_pts),
        hodlr,
        dense,
    })
}

/// Configuration of the high-dimension stress runs.
#[derive(Debug, Clone)]
pub struct HighdimConfig {
    pub n: usize,
    pub dims: Vec<usize>,
    /// draw points from `[-3/sqrt(d), 3/sqrt(d)]^d` instead of `[-3, 3]^d`,
    /// which keeps typical pair distances comparable across dimensions
    pub scaled: bool,
    pub eps: f64,
    pub p_max: usize,
    pub seed: u64,
}

impl HighdimConfig {
    pub fn standard(scaled: bool, seed: u64) -> HighdimConfig {
        HighdimConfig {
            n: 5000,
            dims: vec![1, 2, 4, 8, 16, 32, 64],
            scaled,
            eps: 1e-12,
            p_max: 20,
            seed,
        }
    }
}

/// Gaussian-kernel solves (`sigma^2 = 2`) across dimensions, with the error
/// column verified against exactly evaluated right-hand sides.
pub fn highdim_run(cfg: &HighdimConfig) -> CliResult<Vec<SolveStats>> {
    let spec = KernelSpec::new(KernelFamily::Gaussian, 2.0)?;
    let mut out = Vec::with_capacity(cfg.dims.len());
    for &d in &cfg.dims {
        let mut rc = RunConfig::new(spec.clone(), cfg.n);
        rc.dim = d;
        rc.half_width = if cfg.scaled {
            3.0 / (d as f64).sqrt()
        } else {
            3.0
        };
        rc.eps = cfg.eps;
        rc.p_max = cfg.p_max;
        rc.seed = derive_seed(cfg.seed, d as u64);
        rc.exact_reference = true;
        out.push(manufactured_run(&rc)?);
    }
    Ok(out)
}

/// Configuration of the regression-error sweep over compression tolerance.
#[derive(Debug, Clone)]
pub struct RmseSweepConfig {
    pub n: usize,
    pub eps_values: Vec<f64>,
    pub p_max: usize,
    pub seed: u64,
    /// standard deviation of the observation noise in the synthetic model
    pub sigma_eps: f64,
}

impl RmseSweepConfig {
    pub fn standard(seed: u64) -> RmseSweepConfig {
        RmseSweepConfig {
            n: 1024,
            eps_values: vec![1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
            p_max: 20,
            seed,
            sigma_eps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RmsePoint {
    pub eps: f64,
    pub rmse: f64,
    pub abs_diff_vs_dense: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RmseReport {
    pub n: usize,
    pub rmse_dense: f64,
    pub points: Vec<RmsePoint>,
}

/// Regression error of the compressed solver against the dense solver as
/// compression tolerance varies.
///
/// Synthetic data: `y = sin(2x) + exp(x)/8 + e`, `e ~ N(0, sigma_eps^2)`,
/// `x` uniform on `(-3, 3)`. Both sides fit a zero-mean Gaussian-kernel
/// process with noise variance `sigma_eps^2` and compare fitted values
/// `y_hat = K alpha` at the training points via `RMSE = |y - y_hat| / sqrt(n)`.
pub fn rmse_sweep(cfg: &RmseSweepConfig) -> CliResult<RmseReport> {
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<f64> = (0..n).map(|_| (2.0 * rng.random::<f64>() - 1.0) * 3.0).collect();
    let y: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let e: f64 = rng.sample(StandardNormal);
            (2.0 * x).sin() + x.exp() / 8.0 + cfg.sigma_eps * e
        })
        .collect();
    let noise = cfg.sigma_eps * cfg.sigma_eps;
    let spec = KernelSpec::new(KernelFamily::Gaussian, noise)?;
    let y_vec = DVector::from_column_slice(&y);

    // dense reference fit, computed once
    let pts = kd_sort(&xs, 1, cfg.p_max)?;
    let dense = dense_assemble(&spec, &pts)?;
    let alpha_dense = dense_factorize(&dense)?.solve(&nalgebra::DMatrix::from_column_slice(
        n,
        1,
        y_vec.as_slice(),
    ))?;
    let alpha_dense = DVector::from_column_slice(alpha_dense.as_slice());
    let y_hat_dense = dense.matrix() * &alpha_dense - noise * &alpha_dense;
    let rmse_dense = (&y_vec - &y_hat_dense).norm() / (n as f64).sqrt();

    let mut points = Vec::with_capacity(cfg.eps_values.len());
    for &eps in &cfg.eps_values {
        let model = GpModel::fit(&spec, &xs, 1, &y, eps, cfg.p_max)?;
        // fitted values K alpha = C alpha - sigma^2 alpha through the
        // compressed operator
        let y_hat = model.tree().apply_vector(model.alpha())? - noise * model.alpha();
        let rmse = (&y_vec - &y_hat).norm() / (n as f64).sqrt();
        points.push(RmsePoint {
            eps,
            rmse,
            abs_diff_vs_dense: (rmse - rmse_dense).abs(),
        });
    }
    Ok(RmseReport {
        n,
        rmse_dense,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_parses_and_prints() {
        assert_eq!("hodlr".parse::<Engine>().unwrap(), Engine::Hodlr);
        assert_eq!("DENSE".parse::<Engine>().unwrap(), Engine::Dense);
        assert!("sparse".parse::<Engine>().is_err());
        assert_eq!(Engine::Hodlr.to_string(), "hodlr");
    }

    #[test]
    fn derived_seeds_differ_by_salt() {
        let a = derive_seed(0, 1);
        let b = derive_seed(0, 2);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(0, 1));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| {
            let x = (1 << k) as f64;
            (x, 3.5 * x * x * x)
        }).collect();
        assert!((log_log_slope(&pts) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn engines_agree_on_small_manufactured_run() {
        let spec = KernelSpec::new(KernelFamily::Multiquadric, 1.0).unwrap();
        let mut cfg = RunConfig::new(spec, 300);
        cfg.exact_reference = true;
        let h = manufactured_run(&cfg).unwrap();
        cfg.engine = Engine::Dense;
        let d = manufactured_run(&cfg).unwrap();
        assert!(h.rel_error <= 1e-10, "hodlr error {:e}", h.rel_error);
        assert!(d.rel_error <= 1e-12, "dense error {:e}", d.rel_error);
        let dd = (h.log_abs_det - d.log_abs_det).abs() / d.log_abs_det.abs();
        assert!(dd <= 1e-10, "logdet gap {dd:e}");
        assert_eq!(h.det_sign, d.det_sign);
    }

    #[test]
    fn stats_are_deterministic_apart_from_timings() {
        let spec = KernelSpec::new(KernelFamily::Gaussian, 2.0).unwrap();
        let cfg = RunConfig::new(spec, 400);
        let a = manufactured_run(&cfg).unwrap();
        let b = manufactured_run(&cfg).unwrap();
        assert_eq!(a.rel_error.to_bits(), b.rel_error.to_bits());
        assert_eq!(a.log_abs_det.to_bits(), b.log_abs_det.to_bits());
        assert_eq!(a.max_rank, b.max_rank);
        assert_eq!(a.levels, b.levels);
    }

    #[test]
    fn rmse_sweep_runs_at_reduced_size() {
        let mut cfg = RmseSweepConfig::standard(7);
        cfg.n = 256;
        cfg.eps_values = vec![1e-6, 1e-10];
        let report = rmse_sweep(&cfg).unwrap();
        assert!(report.rmse_dense > 0.5 && report.rmse_dense < 1.5);
        assert!(report.points[1].abs_diff_vs_dense <= report.points[0].abs_diff_vs_dense + 1e-12);
    }
}
