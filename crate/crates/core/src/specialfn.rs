//! Scalar special functions used by the covariance formulas.
//!
//! `gamma`, `ln_gamma` and `erfc` come from `libm`. The inverse normal CDF
//! starts from `statrs`' `erfc_inv` and takes one Newton step against `libm`'s
//! `erfc`.
//! The modified Bessel function of the second kind `K_ν(x)` for real order is
//! implemented here: Temme's series for `x < 2`, Steed's continued fraction
//! for `x >= 2`, both producing `K_μ` and `K_{μ+1}` for `|μ| <= 1/2`, then
//! forward recurrence up to `ν`. Very large orders switch to the uniform
//! asymptotic expansion in `ν`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1.0e-16;
const MAX_ITER: usize = 100_000;
const RESCALE: f64 = 1.0e250;
/// Above this order the recurrence gets long; the uniform expansion is used instead.
const UNIFORM_ORDER: f64 = 1000.0;

/// Γ(x) for x > 0.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(
            "gamma",
            format!("x = {x} must be positive and finite"),
        ));
    }
    Ok(libm::tgamma(x))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(
            "ln_gamma",
            format!("x = {x} must be positive and finite"),
        ));
    }
    Ok(libm::lgamma(x))
}

/// Φ⁻¹(p), the inverse of the standard normal distribution function.
pub fn inv_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "inv_normal_cdf",
            format!("p = {p} must lie in (0, 1)"),
        ));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work on the lower half and reflect, so Φ⁻¹(1-p) = -Φ⁻¹(p) holds up to
    // the rounding of 1-p.
    let (q, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    let mut x = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * q);
    if x.is_finite() {
        let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        if density > 0.0 {
            x -= (normal_cdf(x) - q) / density;
        }
    }
    Ok(sign * -x)
}

/// Standard normal distribution function Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// K_ν(x), the modified Bessel function of the second kind.
///
/// Accepts any real `nu`; `K_{-ν} = K_ν` is applied. Saturates to `0.0` when
/// the result underflows and to `+inf` when it overflows.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    let (mant, log_scale) = bessel_k_parts(nu, x)?;
    Ok(mant * log_scale.exp())
}

/// ln K_ν(x). Finite over the whole range where `bessel_k` would under- or
/// overflow.
pub fn ln_bessel_k(nu: f64, x: f64) -> Result<f64> {
    let (mant, log_scale) = bessel_k_parts(nu, x)?;
    Ok(mant.ln() + log_scale)
}

/// `K_ν(x) = mant · exp(log_scale)` with `mant` a normal positive float.
pub(crate) fn bessel_k_parts(nu: f64, x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::domain(
            "bessel_k",
            format!("x = {x} must be positive"),
        ));
    }
    if !nu.is_finite() {
        return Err(Error::domain(
            "bessel_k",
            format!("order {nu} must be finite"),
        ));
    }
    let nu = nu.abs();
    if x.is_infinite() {
        return Ok((1.0, f64::NEG_INFINITY));
    }
    if nu > UNIFORM_ORDER {
        return Ok((1.0, ln_bessel_k_uniform(nu, x)));
    }

    let nl = (nu + 0.5).floor();
    let xmu = nu - nl;
    let (mut kmu, mut k1, mut log_scale) = if x < 2.0 {
        let (a, b) = temme_series(xmu, x)?;
        (a, b, 0.0)
    } else {
        let (a, b) = steed_cf2(xmu, x)?;
        (a, b, -x)
    };

    let two_over_x = 2.0 / x;
    for i in 1..=(nl as usize) {
        let next = (xmu + i as f64) * two_over_x * k1 + kmu;
        kmu = k1;
        k1 = next;
        if k1 > RESCALE {
            kmu /= RESCALE;
            k1 /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    Ok((kmu, log_scale))
}

/// Chebyshev coefficients (argument 8μ² − 1 on |μ| ≤ 1/2) for
/// Γ₁(μ) = (1/Γ(1−μ) − 1/Γ(1+μ)) / (2μ).
const GAM1_CHEB: [f64; 10] = [
    -1.142_022_680_371_167_8,
    6.516_511_267_073_688e-3,
    3.087_090_173_085_368_2e-4,
    -3.470_626_964_904_317_8e-6,
    6.943_766_448_667_449_6e-9,
    3.677_953_988_574_410_2e-11,
    -1.356_395_102_366_424_9e-13,
    -3.680_298_480_635_798e-17,
    5.458_216_233_376_986e-19,
    -2.449_065_747_746_07e-22,
];

/// Chebyshev coefficients for Γ₂(μ) = (1/Γ(1−μ) + 1/Γ(1+μ)) / 2.
const GAM2_CHEB: [f64; 10] = [
    1.843_740_587_300_905_3,
    -7.685_284_084_478_667e-2,
    1.271_927_136_654_562_3e-3,
    -4.971_736_704_195_74e-6,
    -3.312_611_976_818_085e-8,
    2.423_095_790_048_270_4e-10,
    -1.702_377_664_251_273e-13,
    -1.494_366_706_516_900_2e-15,
    2.382_622_047_685_963_6e-18,
    2.901_759_505_610_474_5e-21,
];

fn chebyshev(coeffs: &[f64], t: f64) -> f64 {
    let (mut d, mut dd) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let sv = d;
        d = 2.0 * t * d - dd + c;
        dd = sv;
    }
    t * d - dd + 0.5 * coeffs[0]
}

/// Temme's series for K_μ(x), K_{μ+1}(x), |μ| ≤ 1/2, x < 2.
fn temme_series(xmu: f64, x: f64) -> Result<(f64, f64)> {
    let xmu2 = xmu * xmu;
    let x2 = 0.5 * x;
    let pimu = PI * xmu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = xmu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };

    let t = 8.0 * xmu2 - 1.0;
    let gam1 = chebyshev(&GAM1_CHEB, t);
    let gam2 = chebyshev(&GAM2_CHEB, t);
    let gampl = gam2 - xmu * gam1; // 1/Γ(1+μ)
    let gammi = gam2 + xmu * gam1; // 1/Γ(1-μ)

    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dq = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - xmu2);
        c *= dq / fi;
        p /= fi - xmu;
        q /= fi + xmu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * EPS {
            return Ok((sum, sum1 * 2.0 / x));
        }
    }
    Err(Error::domain(
        "bessel_k",
        format!("series failed to converge at x = {x}"),
    ))
}

/// Steed's continued fraction CF2 for exp(x)·K_μ(x), exp(x)·K_{μ+1}(x), x ≥ 2.
fn steed_cf2(xmu: f64, x: f64) -> Result<(f64, f64)> {
    let xmu2 = xmu * xmu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - xmu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::domain(
            "bessel_k",
            format!("continued fraction failed at x = {x}"),
        ));
    }
    h *= a1;
    let kmu = (PI / (2.0 * x)).sqrt() / s;
    let k1 = kmu * (xmu + x + 0.5 - h) / x;
    Ok((kmu, k1))
}

/// ln K_ν(x) from the uniform asymptotic expansion in ν (four terms).
fn ln_bessel_k_uniform(nu: f64, x: f64) -> f64 {
    let z = x / nu;
    let root = (1.0 + z * z).sqrt();
    let eta = root + (z / (1.0 + root)).ln();
    let p = 1.0 / root;
    let p2 = p * p;
    let u1 = p * (3.0 - 5.0 * p2) / 24.0;
    let u2 = p2 * (81.0 - 462.0 * p2 + 385.0 * p2 * p2) / 1152.0;
    let u3 = p * p2 * (30375.0 - 369_603.0 * p2 + 765_765.0 * p2 * p2 - 425_425.0 * p2 * p2 * p2)
        / 414_720.0;
    let series = 1.0 - u1 / nu + u2 / (nu * nu) - u3 / (nu * nu * nu);
    0.5 * (PI / (2.0 * nu)).ln() - nu * eta - 0.25 * (1.0 + z * z).ln() + series.ln()
}
