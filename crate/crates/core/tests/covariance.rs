mod common;

use std::f64::consts::PI;

use circembed::covariance::{CustomKernel, MaternKernel, Smoothness, StationaryKernel};
use circembed::specialfn::{bessel_k, gamma, inv_normal_cdf, normal_cdf};
use circembed::Error;
use common::rel;
use statrs::function::erf::erfc;

fn sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * PI.powf(h) / gamma(h).unwrap()
}

#[test]
fn bessel_reference_values() {
    assert!(rel(bessel_k(1.5, 2.0).unwrap(), 0.17990665795209217) < 1e-13);
    assert!(rel(bessel_k(2.0, 0.1).unwrap(), 199.50396464211414) < 1e-13);
    assert!(
        rel(
            bessel_k(0.5, 1.0).unwrap(),
            (PI / 2.0).sqrt() * (-1.0f64).exp()
        ) < 1e-14
    );
}

#[test]
fn inverse_normal_round_trip() {
    assert!((inv_normal_cdf(0.975).unwrap() - 1.959963984540054).abs() < 1e-14);
    for p in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-9] {
        let x = inv_normal_cdf(p).unwrap();
        assert!(rel(normal_cdf(x), p) < 1e-12, "p = {p}");
    }
    assert!(inv_normal_cdf(0.0).is_err());
    assert!(inv_normal_cdf(1.0).is_err());
}

#[test]
fn covariance_tail_matches_reference() {
    let k = MaternKernel::new(1.0, 1.0, Smoothness::Finite(1.5), 2).unwrap();
    let v = k.covariance_tail_integral(2.0).unwrap();
    assert!(rel(v, 0.2649358031720462257355) < 1e-9, "{v}");

    let g = MaternKernel::gaussian(1.0, 1.0, 3).unwrap();
    let v = g.covariance_tail_integral(1.5).unwrap();
    assert!(rel(v, 0.6544395206870082762) < 1e-9, "{v}");
}

#[test]
fn gaussian_one_dimensional_tails_use_erfc() {
    let g = MaternKernel::gaussian(1.0, 1.0, 1).unwrap();
    for a in [0.0, 0.5, 1.0, 2.5, 4.0] {
        let cov = g.covariance_tail_integral(a).unwrap();
        let want = (PI / 2.0).sqrt() * erfc(a / 2f64.sqrt());
        assert!(rel(cov, want) < 1e-9, "a = {a}: {cov} vs {want}");
    }
    for a in [0.0, 0.1, 0.3, 0.6] {
        let spec = g.spectral_tail_integral(a).unwrap();
        let want = 0.5 * erfc(2f64.sqrt() * PI * a);
        assert!(rel(spec, want) < 1e-8, "a = {a}: {spec} vs {want}");
    }
}

#[test]
fn exponential_spectral_tail_closed_form() {
    let k = MaternKernel::exponential(1.0, 1.0, 1).unwrap();
    for a in [0.0, 0.3, 1.0, 10.0, 200.0] {
        let v = k.spectral_tail_integral(a).unwrap();
        let want = (PI / 2.0 - (2.0 * PI * a).atan()) / PI;
        assert!(rel(v, want) < 1e-9, "a = {a}: {v} vs {want}");
    }
    assert!(
        rel(
            k.spectral_tail_integral(0.3).unwrap(),
            0.1552593735859937306
        ) < 1e-9
    );
}

#[test]
fn spectral_density_integrates_to_one() {
    for d in 1..=3 {
        for nu in [
            Smoothness::Finite(0.5),
            Smoothness::Finite(1.5),
            Smoothness::Finite(4.0),
            Smoothness::Infinite,
        ] {
            let k = MaternKernel::new(1.0, 1.0, nu, d).unwrap();
            let total = sphere_area(d) * k.spectral_tail_integral(0.0).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "d = {d}, nu = {nu}: {total}");
        }
    }
}

#[test]
fn spectral_density_scales_with_lambda_and_variance() {
    let base = MaternKernel::new(1.0, 1.0, Smoothness::Finite(2.5), 2).unwrap();
    let k = MaternKernel::new(3.0, 0.4, Smoothness::Finite(2.5), 2).unwrap();
    for xi in [[0.0f64, 0.0], [0.3, -1.2], [2.0, 5.0]] {
        let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        let want = 3.0 * 0.4f64.powi(2) * base.kappa_hat(0.4 * norm);
        assert!(rel(k.spectral_density(&xi).unwrap(), want) < 1e-13);
    }
    for x in [[0.0f64, 0.0], [0.1, 0.2], [1.0, -0.7]] {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        assert!(rel(k.rho(&x), 3.0 * base.kappa(r / 0.4)) < 1e-13);
    }
}

#[test]
fn one_dimensional_fourier_pair() {
    // ρ̂(ξ) = ∫ ρ(x) cos(2π x ξ) dx by a fine trapezoid rule on [-40, 40].
    let k = MaternKernel::new(1.0, 1.0, Smoothness::Finite(1.5), 1).unwrap();
    let n = 400_000;
    let step = 80.0 / n as f64;
    for xi in [0.0, 0.2, 0.7] {
        let sum: f64 = (0..=n)
            .map(|i| {
                let x = -40.0 + i as f64 * step;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * k.rho(&[x]) * (2.0 * PI * x * xi).cos()
            })
            .sum();
        let got = k.spectral_density(&[xi]).unwrap();
        assert!(
            rel(sum * step, got) < 1e-7,
            "xi = {xi}: {} vs {got}",
            sum * step
        );
    }
}

#[test]
fn lattice_tail_bound_dominates_shell_sums() {
    for d in 1..=3 {
        let k = MaternKernel::new(1.0, 0.5, Smoothness::Finite(1.5), d).unwrap();
        let h = 0.25;
        let k_min = 3;
        let radius: usize = 40;
        let width = 2 * radius + 1;
        let direct: f64 = (0..width.pow(d as u32))
            .map(|lin| {
                let idx: Vec<i64> = circembed::embedding::multi_index(lin, width, d)
                    .into_iter()
                    .map(|v| v as i64 - radius as i64)
                    .collect();
                if idx.iter().map(|v| v.unsigned_abs()).max().unwrap() < k_min as u64 {
                    return 0.0;
                }
                let x: Vec<f64> = idx.iter().map(|&v| h * v as f64).collect();
                k.rho(&x).abs()
            })
            .sum();
        let bound = k.lattice_tail_bound(h, k_min).unwrap();
        assert!(bound >= direct, "d = {d}: {bound} < {direct}");
    }
}

#[test]
fn custom_kernel_capabilities() {
    let k = CustomKernel::new("tent", 1, |x: &[f64]| (1.0 - x[0].abs()).max(0.0));
    assert_eq!(k.rho(&[0.25]), 0.75);
    assert!(matches!(
        k.spectral_density(&[0.0]),
        Err(Error::CapabilityMissing(_))
    ));
    assert!(k.lattice_tail_bound(0.1, 2).is_none());

    let k = k.with_spectral_density(|xi: &[f64]| {
        let t = PI * xi[0];
        if t == 0.0 {
            1.0
        } else {
            (t.sin() / t).powi(2)
        }
    });
    assert!((k.spectral_density(&[0.5]).unwrap() - 4.0 / (PI * PI)).abs() < 1e-15);
}

#[test]
fn invalid_matern_parameters_rejected() {
    assert!(MaternKernel::new(1.0, 0.0, Smoothness::Finite(1.0), 2).is_err());
    assert!(MaternKernel::new(-1.0, 1.0, Smoothness::Finite(1.0), 2).is_err());
    assert!(MaternKernel::new(1.0, 1.0, Smoothness::Finite(1.0), 0).is_err());
    assert!(MaternKernel::new(1.0, 1.0, Smoothness::Finite(0.25), 1).is_err());
    assert!(MaternKernel::outside_analyzed_range(1.0, 1.0, Smoothness::Finite(0.25), 1).is_ok());
}
