//! Stationary covariance kernels and their spectral densities.
//!
//! A kernel is a symmetric function ρ on R^d; the covariance of the field
//! between two points is `ρ(x - x')`. The spectral density is the Fourier
//! transform `ρ̂(ξ) = ∫ ρ(x) exp(-2πi ξ·x) dx`.
//!
//! [`MaternKernel`] covers the Matérn family `ρ(x) = κ(‖x‖₂/λ)` including its
//! Gaussian limit (`ν = ∞`). [`CustomKernel`] wraps user callables.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::specialfn;

/// Relative accuracy of the tail integrals.
pub const TAIL_REL_TOL: f64 = 1e-10;

/// The capability every covariance used by the embedding must provide.
pub trait StationaryKernel: Send + Sync {
    fn dim(&self) -> usize;

    /// ρ(x) for `x` of length `dim()`.
    fn rho(&self, x: &[f64]) -> f64;

    /// ρ̂(ξ). Kernels without a known spectral density report
    /// [`Error::CapabilityMissing`].
    fn spectral_density(&self, _xi: &[f64]) -> Result<f64> {
        Err(Error::CapabilityMissing("spectral density"))
    }

    /// ρ as a function of the Euclidean norm, for isotropic kernels.
    fn radial_rho(&self, _r: f64) -> Option<f64> {
        None
    }

    /// Upper bound on `Σ_{‖k‖∞ ≥ k_min} |ρ(h k)|` over `k ∈ Z^d`, when the
    /// kernel can supply one.
    fn lattice_tail_bound(&self, _h: f64, _k_min: usize) -> Option<f64> {
        None
    }

    /// Upper bound on `h^{-d} Σ_{‖r‖∞ ≥ r_min} ρ̂(ξ + r/h)` over `r ∈ Z^d`,
    /// when the kernel can supply one.
    fn aliased_tail_bound(&self, _h: f64, _xi: &[f64], _r_min: usize) -> Option<f64> {
        None
    }

    fn variance(&self) -> f64 {
        self.rho(&vec![0.0; self.dim()])
    }

    fn info(&self) -> KernelInfo;
}

/// Serializable description of a kernel, written into run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelInfo {
    Matern {
        sigma2: f64,
        lambda: f64,
        nu: Smoothness,
        d: usize,
    },
    Custom {
        name: String,
        d: usize,
    },
}

/// Matérn smoothness ν; `Infinite` is the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothness {
    Finite(f64),
    Infinite,
}

impl Smoothness {
    pub fn finite(self) -> Option<f64> {
        match self {
            Smoothness::Finite(nu) => Some(nu),
            Smoothness::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Smoothness::Infinite)
    }
}

impl fmt::Display for Smoothness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothness::Finite(nu) => write!(f, "{nu}"),
            Smoothness::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Smoothness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if matches!(t.as_str(), "inf" | "infinity" | "+inf" | "gaussian") {
            return Ok(Smoothness::Infinite);
        }
        let nu: f64 = t
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("nu = {s:?} is not a number or 'inf'")))?;
        if nu.is_infinite() && nu > 0.0 {
            return Ok(Smoothness::Infinite);
        }
        Ok(Smoothness::Finite(nu))
    }
}

impl Serialize for Smoothness {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Smoothness::Finite(nu) => s.serialize_f64(*nu),
            Smoothness::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Smoothness {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(nu) => Ok(Smoothness::Finite(nu)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Matérn covariance `ρ(x) = κ(‖x‖₂/λ)` with
/// `κ(r) = σ² 2^{1-ν}/Γ(ν) (√(2ν) r)^ν K_ν(√(2ν) r)`, or `κ(r) = σ² exp(-r²/2)`
/// for `ν = ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternKernel {
    sigma2: f64,
    lambda: f64,
    nu: Smoothness,
    d: usize,
    /// ν ∈ (0, 1/2): evaluable, but outside the range the bounds cover.
    outside_analyzed_range: bool,
    /// ln(σ² 2^{1-ν} / Γ(ν)) for finite ν.
    ln_kappa_prefactor: f64,
    /// ln(σ² 2^d π^{d/2} (2ν)^ν Γ(ν+d/2)/Γ(ν)) for finite ν.
    ln_spectral_prefactor: f64,
}

impl MaternKernel {
    /// A Matérn kernel with ν ≥ 1/2 or ν = ∞.
    pub fn new(sigma2: f64, lambda: f64, nu: Smoothness, d: usize) -> Result<Self> {
        if let Smoothness::Finite(v) = nu {
            if v < 0.5 {
                return Err(Error::InvalidParameter(format!(
                    "nu = {v} is below 1/2; use MaternKernel::outside_analyzed_range to accept it"
                )));
            }
        }
        Self::build(sigma2, lambda, nu, d)
    }

    /// Accepts ν ∈ (0, 1/2) as well, marking the kernel as lying outside the
    /// range for which the positive-definiteness bounds hold.
    pub fn outside_analyzed_range(
        sigma2: f64,
        lambda: f64,
        nu: Smoothness,
        d: usize,
    ) -> Result<Self> {
        Self::build(sigma2, lambda, nu, d)
    }

    pub fn gaussian(sigma2: f64, lambda: f64, d: usize) -> Result<Self> {
        Self::new(sigma2, lambda, Smoothness::Infinite, d)
    }

    pub fn exponential(sigma2: f64, lambda: f64, d: usize) -> Result<Self> {
        Self::new(sigma2, lambda, Smoothness::Finite(0.5), d)
    }

    fn build(sigma2: f64, lambda: f64, nu: Smoothness, d: usize) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 = {sigma2} must be positive"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} must be positive"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        let (ln_kappa_prefactor, ln_spectral_prefactor, outside) = match nu {
            Smoothness::Finite(v) => {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "nu = {v} must be positive"
                    )));
                }
                let df = d as f64;
                let lk = sigma2.ln() + (1.0 - v) * 2f64.ln() - specialfn::ln_gamma(v)?;
                let ls = sigma2.ln()
                    + df * 2f64.ln()
                    + 0.5 * df * PI.ln()
                    + v * (2.0 * v).ln()
                    + specialfn::ln_gamma(v + 0.5 * df)?
                    - specialfn::ln_gamma(v)?;
                (lk, ls, v < 0.5)
            }
            Smoothness::Infinite => (sigma2.ln(), sigma2.ln(), false),
        };
        Ok(MaternKernel {
            sigma2,
            lambda,
            nu,
            d,
            outside_analyzed_range: outside,
            ln_kappa_prefactor,
            ln_spectral_prefactor,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn nu(&self) -> Smoothness {
        self.nu
    }

    pub fn is_outside_analyzed_range(&self) -> bool {
        self.outside_analyzed_range
    }

    /// Same kernel with a different variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::build(sigma2, self.lambda, self.nu, self.d)
    }

    /// The radial profile κ(r), r ≥ 0 in units of λ.
    pub fn kappa(&self, r: f64) -> f64 {
        let r = r.abs();
        if r == 0.0 {
            return self.sigma2;
        }
        match self.nu {
            Smoothness::Infinite => self.sigma2 * (-0.5 * r * r).exp(),
            Smoothness::Finite(nu) => {
                let z = (2.0 * nu).sqrt() * r;
                match specialfn::bessel_k_parts(nu, z) {
                    Ok((mant, log_scale)) => {
                        mant * (self.ln_kappa_prefactor + nu * z.ln() + log_scale).exp()
                    }
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// The radial spectral profile κ̂_d(r), so that `ρ̂(ξ) = λ^d κ̂_d(λ‖ξ‖₂)`.
    pub fn kappa_hat(&self, r: f64) -> f64 {
        let df = self.d as f64;
        match self.nu {
            Smoothness::Infinite => {
                self.sigma2 * (2.0 * PI).powf(0.5 * df) * (-2.0 * PI * PI * r * r).exp()
            }
            Smoothness::Finite(nu) => {
                let base = 2.0 * nu + (2.0 * PI * r).powi(2);
                (self.ln_spectral_prefactor - (nu + 0.5 * df) * base.ln()).exp()
            }
        }
    }

    /// `∫_lower^∞ r^{d-1} κ̂_d(r) dr`.
    ///
    /// Finite ν: adaptive quadrature up to a cutoff beyond which the binomial
    /// expansion of `(2ν + 4π²r²)^{-(ν+d/2)}` in `2ν/(4π²r²)` is integrated
    /// term by term. ν = ∞: quadrature with exponential truncation.
    pub fn spectral_tail_integral(&self, lower: f64) -> Result<f64> {
        if !(lower >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lower = {lower} must be nonnegative"
            )));
        }
        let d = self.d as i32;
        let integrand = |r: f64| r.powi(d - 1) * self.kappa_hat(r);
        match self.nu {
            Smoothness::Infinite => {
                let scale = 1.0 / (2.0 * PI);
                Ok(quadrature::integrate_decaying(integrand, lower, scale, TAIL_REL_TOL)?.value)
            }
            Smoothness::Finite(nu) => {
                let df = self.d as f64;
                let p = nu + 0.5 * df;
                let c = 2.0 * nu;
                // Past this radius p·c/(4π²r²) ≤ 0.05 and the series converges fast.
                let cutoff = (20.0 * p * c).sqrt() / (2.0 * PI);
                let t = cutoff.max(lower);
                let head = if t > lower {
                    quadrature::integrate(integrand, lower, t, TAIL_REL_TOL * 1e-2, 0.0)?.value
                } else {
                    0.0
                };
                Ok(head + self.spectral_series_tail(t))
            }
        }
    }

    /// `∫_t^∞ r^{d-1} κ̂_d(r) dr` by the binomial series, valid once
    /// `p·2ν/(4π²t²)` is small.
    fn spectral_series_tail(&self, t: f64) -> f64 {
        let nu = self.nu.finite().expect("finite smoothness");
        let df = self.d as f64;
        let p = nu + 0.5 * df;
        let four_pi2 = 4.0 * PI * PI;
        let u = 2.0 * nu / (four_pi2 * t * t);
        // A (4π²)^{-p} t^{-2ν}
        let lead = (self.ln_spectral_prefactor - p * four_pi2.ln() - 2.0 * nu * t.ln()).exp();
        let mut coeff = 1.0; // binom(-p, j) u^j
        let mut sum = 0.0;
        for j in 0..200 {
            let jf = j as f64;
            let term = coeff / (2.0 * nu + 2.0 * jf);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            coeff *= -(p + jf) / (jf + 1.0) * u;
        }
        lead * sum
    }

    /// `∫_lower^∞ r^{d-1} κ(r) dr` (κ ≥ 0 for this family).
    pub fn covariance_tail_integral(&self, lower: f64) -> Result<f64> {
        if !(lower >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lower = {lower} must be nonnegative"
            )));
        }
        let d = self.d as i32;
        let scale = match self.nu {
            Smoothness::Infinite => 1.0,
            Smoothness::Finite(nu) => 1.0 / (2.0 * nu).sqrt(),
        };
        let integrand = |r: f64| r.powi(d - 1) * self.kappa(r);
        Ok(quadrature::integrate_decaying(integrand, lower, scale, TAIL_REL_TOL)?.value)
    }
}

impl StationaryKernel for MaternKernel {
    fn dim(&self) -> usize {
        self.d
    }

    fn rho(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.kappa(norm / self.lambda)
    }

    fn spectral_density(&self, xi: &[f64]) -> Result<f64> {
        debug_assert_eq!(xi.len(), self.d);
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.lambda.powi(self.d as i32) * self.kappa_hat(self.lambda * norm))
    }

    fn radial_rho(&self, r: f64) -> Option<f64> {
        Some(self.kappa(r / self.lambda))
    }

    /// `(3^d-1) 2^{d-1} (λ/h)^d ∫_{(k_min-1)h/λ}^∞ r^{d-1} κ(r) dr`, from
    /// counting lattice shells `‖k‖∞ = j` and comparing the shell sums with an
    /// integral. Needs `k_min ≥ 2`.
    fn lattice_tail_bound(&self, h: f64, k_min: usize) -> Option<f64> {
        if k_min < 2 || self.outside_analyzed_range {
            return None;
        }
        let d = self.d as i32;
        let shells = (3f64.powi(d) - 1.0) * 2f64.powi(d - 1);
        let lower = (k_min as f64 - 1.0) * h / self.lambda;
        let integral = self.covariance_tail_integral(lower).ok()?;
        Some(shells * (self.lambda / h).powi(d) * integral)
    }

    /// With `c = h‖ξ‖∞` and `R = r_min`, each shell `‖r‖∞ = j` has at most
    /// `(3^d-1) j^{d-1}` points where `λ‖ξ + r/h‖₂ ≥ λ(j-c)/h`. Comparing the
    /// shell sums with an integral gives
    /// `(3^d-1) 2^{d-1} (R/(R-c))^{d-1} ∫_{λ(R-c-1)/h}^∞ r^{d-1} κ̂_d(r) dr`,
    /// valid once `R - c - 1 ≥ 1` (`≥ 0` when `d = 1`).
    fn aliased_tail_bound(&self, h: f64, xi: &[f64], r_min: usize) -> Option<f64> {
        let d = self.d as i32;
        let c = h * xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let r = r_min as f64;
        let start = r - c - 1.0;
        if start < if d == 1 { 0.0 } else { 1.0 } {
            return None;
        }
        let shells = (3f64.powi(d) - 1.0) * 2f64.powi(d - 1) * (r / (r - c)).powi(d - 1);
        let integral = self.spectral_tail_integral(self.lambda * start / h).ok()?;
        Some(shells * integral)
    }

    fn variance(&self) -> f64 {
        self.sigma2
    }

    fn info(&self) -> KernelInfo {
        KernelInfo::Matern {
            sigma2: self.sigma2,
            lambda: self.lambda,
            nu: self.nu,
            d: self.d,
        }
    }
}

type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied stationary covariance. The spectral density is optional.
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    d: usize,
    rho: ScalarField,
    spectral: Option<ScalarField>,
}

impl CustomKernel {
    pub fn new<F>(name: impl Into<String>, d: usize, rho: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        CustomKernel {
            name: name.into(),
            d,
            rho: Arc::new(rho),
            spectral: None,
        }
    }

    pub fn with_spectral_density<F>(mut self, spectral: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.spectral = Some(Arc::new(spectral));
        self
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("spectral", &self.spectral.is_some())
            .finish()
    }
}

impl StationaryKernel for CustomKernel {
    fn dim(&self) -> usize {
        self.d
    }

    fn rho(&self, x: &[f64]) -> f64 {
        (self.rho)(x)
    }

    fn spectral_density(&self, xi: &[f64]) -> Result<f64> {
        match &self.spectral {
            Some(f) => Ok(f(xi)),
            None => Err(Error::CapabilityMissing("spectral density")),
        }
    }

    fn info(&self) -> KernelInfo {
        KernelInfo::Custom {
            name: self.name.clone(),
            d: self.d,
        }
    }
}
