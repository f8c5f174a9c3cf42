//! Kernel families and covariance-entry evaluation.
//!
//! A [`KernelSpec`] bundles a family with its hyperparameters, all validated
//! at construction. Covariance entries are
//! `C_ij = sigma^2 delta_ij + amplitude * k(|a - b| / length_scale)`:
//! the noise variance enters the diagonal only, and the length scale rescales
//! distance before the family profile is applied. Entries are always computed
//! on demand from point coordinates; nothing here stores an `n x n` array.

mod bessel;

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use serde::Serialize;

/// Supported kernel profiles as functions of the scaled distance `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelFamily {
    /// `exp(-r^2)`
    Gaussian,
    /// `exp(-r)` (Ornstein-Uhlenbeck)
    Exponential,
    /// `sqrt(1 + r^2)`
    Multiquadric,
    /// `1 / sqrt(1 + r^2)`
    InverseMultiquadric,
    /// `r^2 log r`, with the removable singularity at `r = 0` set to `0`
    Biharmonic,
    /// Matérn profile of smoothness `nu`
    Matern,
    /// `(1 + r^2)^-alpha`
    RationalQuadratic,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Multiquadric => "multiquadric",
            KernelFamily::InverseMultiquadric => "inverse-multiquadric",
            KernelFamily::Biharmonic => "biharmonic",
            KernelFamily::Matern => "matern",
            KernelFamily::RationalQuadratic => "rational-quadratic",
        }
    }

    pub const ALL: [KernelFamily; 7] = [
        KernelFamily::Gaussian,
        KernelFamily::Exponential,
        KernelFamily::Multiquadric,
        KernelFamily::InverseMultiquadric,
        KernelFamily::Biharmonic,
        KernelFamily::Matern,
        KernelFamily::RationalQuadratic,
    ];
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canon = s.to_ascii_lowercase().replace(['-', '_', ' '], "");
        Ok(match canon.as_str() {
            "gaussian" | "squaredexponential" | "rbf" => KernelFamily::Gaussian,
            "exponential" | "ornsteinuhlenbeck" | "ou" => KernelFamily::Exponential,
            "multiquadric" => KernelFamily::Multiquadric,
            "inversemultiquadric" => KernelFamily::InverseMultiquadric,
            "biharmonic" | "thinplate" => KernelFamily::Biharmonic,
            "matern" => KernelFamily::Matern,
            "rationalquadratic" | "rq" => KernelFamily::RationalQuadratic,
            _ => {
                return Err(Error::InvalidInput(format!("unknown kernel family `{s}`")));
            }
        })
    }
}

/// A kernel family plus validated hyperparameters.
///
/// Defaults: `length_scale = 1`, `amplitude = 1`, `nu = 1.5`, `alpha = 1`.
/// `nu` is read only by [`KernelFamily::Matern`] and `alpha` only by
/// [`KernelFamily::RationalQuadratic`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpec {
    family: KernelFamily,
    length_scale: f64,
    amplitude: f64,
    noise_variance: f64,
    nu: f64,
    alpha: f64,
}

/// Matérn orders above this are rejected: the profile is within rounding of
/// its Gaussian limit and intermediate terms would overflow.
const MAX_MATERN_NU: f64 = 50.0;

impl KernelSpec {
    pub fn new(family: KernelFamily, noise_variance: f64) -> Result<Self> {
        let spec = KernelSpec {
            family,
            length_scale: 1.0,
            amplitude: 1.0,
            noise_variance: 0.0,
            nu: 1.5,
            alpha: 1.0,
        };
        spec.with_noise_variance(noise_variance)
    }

    pub fn with_noise_variance(mut self, v: f64) -> Result<Self> {
        check(v >= 0.0 && v.is_finite(), "noise_variance", v, "must be finite and >= 0")?;
        self.noise_variance = v;
        Ok(self)
    }

    pub fn with_length_scale(mut self, v: f64) -> Result<Self> {
        check(v > 0.0 && v.is_finite(), "length_scale", v, "must be finite and > 0")?;
        self.length_scale = v;
        Ok(self)
    }

    pub fn with_amplitude(mut self, v: f64) -> Result<Self> {
        check(v >= 0.0 && v.is_finite(), "amplitude", v, "must be finite and >= 0")?;
        self.amplitude = v;
        Ok(self)
    }

    pub fn with_matern_nu(mut self, v: f64) -> Result<Self> {
        check(
            v > 0.0 && v <= MAX_MATERN_NU,
            "nu",
            v,
            "Matérn smoothness must lie in (0, 50]",
        )?;
        self.nu = v;
        Ok(self)
    }

    pub fn with_rq_alpha(mut self, v: f64) -> Result<Self> {
        check(v > 0.0 && v.is_finite(), "alpha", v, "must be finite and > 0")?;
        self.alpha = v;
        Ok(self)
    }

    /// Set a hyperparameter addressed by name; used by the CLI and by
    /// likelihood grid scans.
    pub fn with_param(self, name: &str, value: f64) -> Result<Self> {
        match name {
            "length_scale" | "lengthscale" | "ell" => self.with_length_scale(value),
            "amplitude" => self.with_amplitude(value),
            "noise_variance" | "noise" => self.with_noise_variance(value),
            "nu" | "matern_nu" => self.with_matern_nu(value),
            "alpha" | "rq_alpha" => self.with_rq_alpha(value),
            _ => Err(Error::InvalidInput(format!("unknown kernel parameter `{name}`"))),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn matern_nu(&self) -> f64 {
        self.nu
    }

    pub fn rq_alpha(&self) -> f64 {
        self.alpha
    }

    /// Kernel value (no noise) given the squared unscaled distance.
    ///
    /// This is the hot path behind every entry evaluation; the `Result`-free
    /// signature assumes coordinates were validated when the point set was
    /// built.
    pub(crate) fn value_from_sqdist(&self, sqdist: f64) -> f64 {
        let s2 = sqdist / (self.length_scale * self.length_scale);
        let base = match self.family {
            KernelFamily::Gaussian => (-s2).exp(),
            KernelFamily::Exponential => (-s2.sqrt()).exp(),
            KernelFamily::Multiquadric => (1.0 + s2).sqrt(),
            KernelFamily::InverseMultiquadric => 1.0 / (1.0 + s2).sqrt(),
            // r^2 log r = s2 * ln(sqrt(s2))
            KernelFamily::Biharmonic => {
                if s2 == 0.0 {
                    0.0
                } else {
                    0.5 * s2 * s2.ln()
                }
            }
            KernelFamily::Matern => matern_profile(self.nu, s2.sqrt()),
            KernelFamily::RationalQuadratic => (1.0 + s2).powf(-self.alpha),
        };
        self.amplitude * base
    }
}

fn check(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value, reason })
    }
}

/// Kernel value for two points, without the noise term.
pub fn eval_kernel(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(spec.value_from_sqdist(sqdist(a, b)))
}

/// Covariance entry `C_ij = sigma^2 delta_ij + k(x_i, x_j)` for points of a
/// set, addressed by original (pre-sort) index.
pub fn eval_entry(spec: &KernelSpec, points: &PointSet, i: usize, j: usize) -> Result<f64> {
    let n = points.len();
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!(
            "entry ({i}, {j}) out of bounds for {n} points"
        )));
    }
    Ok(entry_unchecked(spec, points, i, j))
}

/// `eval_entry` without bounds checks, for assembly inner loops.
pub(crate) fn entry_unchecked(spec: &KernelSpec, points: &PointSet, i: usize, j: usize) -> f64 {
    let k = spec.value_from_sqdist(sqdist(points.point(i), points.point(j)));
    if i == j {
        spec.noise_variance + k
    } else {
        k
    }
}

/// Squared Euclidean distance. Term order is fixed by the coordinate index,
/// so the result is bitwise symmetric in its arguments.
pub(crate) fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Matérn profile `z^nu K_nu(z) / (Gamma(nu) 2^{nu-1})` with `z = sqrt(2 nu) r`,
/// normalized so the value at `r = 0` is `1`.
fn matern_profile(nu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let z = (2.0 * nu).sqrt() * r;
    if z > 705.0 {
        // e^{-z} underflows; so does the kernel
        return 0.0;
    }
    let half = nu - 0.5;
    if half >= 0.0 && half.fract() == 0.0 {
        matern_half_integer(half as usize, z)
    } else {
        let k = bessel::bessel_k(nu, z);
        if !k.is_finite() {
            // K_nu overflowed, which only happens when z is so small relative
            // to nu that the profile equals 1 to machine precision.
            return 1.0;
        }
        z.powf(nu) * k / (statrs::function::gamma::gamma(nu) * (nu - 1.0).exp2())
    }
}

/// Closed form for `nu = m + 1/2`:
/// `e^{-z} / (2m-1)!! * sum_{k=0}^m  (m+k)! / (k! (m-k)!) * z^{m-k} / 2^k`.
fn matern_half_integer(m: usize, z: f64) -> f64 {
    let mut coef = 1.0;
    let mut sum = z.powi(m as i32);
    let mut scale = 1.0; // accumulates (2m-1)!!
    for k in 1..=m {
        coef *= ((m + k) * (m - k + 1)) as f64 / k as f64;
        sum += coef * z.powi((m - k) as i32) * 0.5f64.powi(k as i32);
        scale *= (2 * k - 1) as f64;
    }
    (-z).exp() * sum / scale
}
