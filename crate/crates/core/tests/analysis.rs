mod common;

use std::f64::consts::SQRT_2;

use circembed::analysis::{
    calibrate_constants, continuous_eigenvalue, decay_report, default_fit_range,
    gaussian_ell_bound, lattice_ordering, least_squares_slope, matern_ell_bound,
    matern_growth_term, pd_criterion, qmc_criterion_sum, sampling_theorem_check, BoundConstants,
    SweepPoint,
};
use circembed::covariance::{MaternKernel, Smoothness};
use circembed::embedding::{
    compute_spectrum, minimal_embedding, minimal_embedding_with, Embedding, GridSpec, SearchOptions,
};
use circembed::Error;
use common::rel;

fn matern(lambda: f64, nu: f64, d: usize) -> MaternKernel {
    MaternKernel::new(1.0, lambda, Smoothness::Finite(nu), d).unwrap()
}

#[test]
fn gaussian_bound_formula() {
    assert_eq!(gaussian_ell_bound(0.5, 0.1, 1.0), 1.0 + 0.5 * SQRT_2 * 5.0);
    assert_eq!(gaussian_ell_bound(0.5, 0.1, 10.0), 6.0);
}

#[test]
fn matern_bound_reports_violated_hypotheses() {
    let consts = BoundConstants {
        c1: Some(1.0),
        c2: Some(3.0),
        ..Default::default()
    };
    let ok = matern_ell_bound(Smoothness::Finite(1.5), 0.5, 0.05, &consts).unwrap();
    assert!(ok.hypotheses_hold());
    let want = 0.5 * (1.0 + 3.0 * 1.5f64.sqrt() * 10f64.ln());
    assert!(rel(ok.value, want) < 1e-15);
    assert_eq!(matern_growth_term(100.0, 0.5, 0.05), 10.0 * 10f64.ln());

    let bad = BoundConstants {
        c1: Some(1.0),
        c2: Some(2.0),
        ..Default::default()
    };
    let b = matern_ell_bound(Smoothness::Finite(1.5), 2.0, 1.0, &bad).unwrap();
    assert_eq!(b.violations.len(), 3);
    assert!(matern_ell_bound(Smoothness::Infinite, 0.5, 0.05, &consts).is_err());
    assert!(matern_ell_bound(
        Smoothness::Finite(1.5),
        0.5,
        0.05,
        &BoundConstants::default()
    )
    .is_err());
}

#[test]
fn pd_criterion_implies_nonnegative_spectrum() {
    for (d, nu, lambda, m0) in [(1, 0.5, 0.5, 8), (1, 1.5, 0.25, 8), (2, 1.0, 0.25, 8)] {
        let kernel = matern(lambda, nu, d);
        let grid = GridSpec::new(d, m0).unwrap();
        let m = (m0..40 * m0)
            .find(|&m| {
                pd_criterion(&kernel, grid, m as f64 / m0 as f64)
                    .unwrap()
                    .satisfied
            })
            .expect("criterion holds eventually");
        let sp = compute_spectrum(&kernel, &Embedding::new(grid, m).unwrap()).unwrap();
        assert!(sp.min_value() > 0.0, "d = {d}, nu = {nu}: m = {m}");
    }
}

#[test]
fn continuous_eigenvalues_converge_to_discrete_ones() {
    let kernel = matern(0.3, 1.5, 1);
    let grid = GridSpec::new(1, 16).unwrap();
    let emb = Embedding::new(grid, 40).unwrap();
    let sp = compute_spectrum(&kernel, &emb).unwrap();
    let h0 = grid.h0();
    for k in [0i64, 1, 3] {
        let exact = continuous_eigenvalue(&kernel, emb.ell(), &[k], 1024).unwrap();
        let one_step = continuous_eigenvalue(&kernel, emb.ell(), &[k], emb.n()).unwrap();
        let discrete = h0 * sp.values()[k as usize];
        // One rule with 2m points is the scaled discrete eigenvalue.
        assert!((one_step - exact).abs() < 1e-7 * exact.abs().max(1e-3));
        assert!(
            (discrete - exact).abs() < 1e-3,
            "k = {k}: {discrete} vs {exact}"
        );
    }
}

#[test]
fn lattice_ordering_is_sorted_and_complete() {
    for d in 1..=4 {
        let lat = lattice_ordering(d, 200).unwrap();
        let norms = lat.norms();
        assert_eq!(lat.seq[0], vec![0; d]);
        for (w, n) in lat.seq.windows(2).zip(norms.windows(2)) {
            assert!(n[0] < n[1] || (n[0] == n[1] && w[0] < w[1]));
        }
        // Every point strictly inside the largest norm is listed.
        let r = norms[199];
        let inner = lat.seq.iter().zip(&norms).filter(|(_, n)| **n < r).count();
        let r2 = (r * r).round() as i64;
        let lim = r.floor() as i64;
        let width = 2 * lim + 1;
        let total = (0..width.pow(d as u32))
            .filter(|&lin| {
                let mut x = lin;
                let mut n2 = 0;
                for _ in 0..d {
                    let v = x % width - lim;
                    x /= width;
                    n2 += v * v;
                }
                n2 < r2
            })
            .count();
        assert_eq!(inner, total, "d = {d}");
    }
    assert_eq!(
        lattice_ordering(2, 5).unwrap().norms(),
        vec![0.0, 1.0, 1.0, 1.0, 1.0]
    );
    assert!(lattice_ordering(2, 0).is_err());
}

#[test]
fn qmc_sum_stays_bounded_under_refinement() {
    // Eigenvalues decay like j^{-4} here, so with p = 0.75 the sum converges
    // as the grid is refined on a fixed extension length.
    let kernel = matern(0.2, 1.5, 1);
    let mut sums = Vec::new();
    for m0 in [16, 32, 64, 128, 256] {
        let opts = SearchOptions {
            m_start: Some(4 * m0),
            ..SearchOptions::new(1e-13, 4 * m0)
        };
        let sp = minimal_embedding_with(&kernel, GridSpec::new(1, m0).unwrap(), &opts)
            .unwrap()
            .spectrum;
        sums.push(qmc_criterion_sum(&sp, 0.75).unwrap());
    }
    let steps: Vec<f64> = sums.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.windows(2).all(|w| w[1] < w[0]), "{sums:?}");
    assert!(
        steps.last().unwrap() / sums.last().unwrap() < 0.05,
        "{sums:?}"
    );
    let (_, sp) = minimal_embedding(&kernel, GridSpec::new(1, 8).unwrap(), 1e-13, 64).unwrap();
    assert!(qmc_criterion_sum(&sp, 1.0).is_err());
}

#[test]
fn sampling_identity_for_matern() {
    let kernel = matern(1.0, 1.5, 1);
    for xi in [0.0, 0.7, -1.6] {
        let c = sampling_theorem_check(&kernel, 0.25, &[xi], 4000, 4000, 1e-6).unwrap();
        assert!(c.residual < 1e-6, "xi = {xi}: {c:?}");
        assert!(c.tails_within_target);
        assert!(c.lhs_tail_bound.is_some() && c.rhs_tail_bound.is_some());
    }
    let g = MaternKernel::gaussian(1.0, 1.0, 2).unwrap();
    let c = sampling_theorem_check(&g, 0.25, &[0.3, -0.8], 60, 4, 1e-12).unwrap();
    assert!(c.residual < 1e-12 * c.rhs.abs().max(1.0), "{c:?}");
    assert!(sampling_theorem_check(&g, 0.25, &[0.3], 10, 2, 1e-12).is_err());
}

#[test]
fn decay_fit_on_known_power_law() {
    let pts: Vec<(f64, f64)> = (1..50)
        .map(|j| ((j as f64).ln(), -1.5 * (j as f64).ln() + 2.0))
        .collect();
    assert!((least_squares_slope(&pts) + 1.5).abs() < 1e-12);
    assert_eq!(default_fit_range(1024), (2, 64));

    let kernel = matern(0.2, 1.5, 1);
    let (_, sp) = minimal_embedding(&kernel, GridSpec::new(1, 256).unwrap(), 1e-13, 4096).unwrap();
    let r = decay_report(&sp, Smoothness::Finite(1.5), Some((20, 200)), 0.1).unwrap();
    assert_eq!(r.expected_beta, 2.0);
    assert!(r.points.windows(2).all(|w| w[0].1 >= w[1].1));
    assert!(r.pass, "slope {}", r.slope);
    assert!(decay_report(&sp, Smoothness::Infinite, None, 0.1).is_err());
}

#[test]
fn calibration_dominates_measured_lengths_and_generalizes() {
    let tol = 1e-13;
    let measure = |nu: Smoothness, lambda: f64, m0: usize| {
        let kernel = MaternKernel::new(1.0, lambda, nu, 1).unwrap();
        let grid = GridSpec::new(1, m0).unwrap();
        let (emb, _) = minimal_embedding(&kernel, grid, tol, 400 * m0).unwrap();
        SweepPoint {
            d: 1,
            nu,
            lambda,
            h0: grid.h0(),
            ell: emb.ell(),
        }
    };
    let mut train = Vec::new();
    for nu in [0.5, 1.0, 2.0, 4.0] {
        for lambda in [0.1, 0.3] {
            train.push(measure(Smoothness::Finite(nu), lambda, 16));
        }
    }
    for lambda in [0.05, 0.1, 0.15, 0.2] {
        train.push(measure(Smoothness::Infinite, lambda, 32));
    }
    let cal = calibrate_constants(&train).unwrap();
    let c = cal.constants;
    assert!(c.c2.unwrap() >= 2.0 * SQRT_2);
    assert!(cal.matern.unwrap().min_slack >= -1e-12);
    assert!(cal.gaussian.unwrap().min_slack >= -1e-12);
    assert!(c.c3.is_none() && c.c4.is_none());

    // Held-out smoothness values and lengths inside the fitted range.
    for (nu, lambda) in [(1.5, 0.2), (3.0, 0.2), (0.75, 0.25)] {
        let p = measure(Smoothness::Finite(nu), lambda, 16);
        let b = matern_ell_bound(p.nu, lambda, p.h0, &c).unwrap();
        assert!(
            b.value >= p.ell,
            "nu = {nu}: bound {} < measured {}",
            b.value,
            p.ell
        );
    }

    let few = &train[..2];
    assert!(matches!(
        calibrate_constants(few),
        Err(Error::InvalidParameter(_))
    ));
}
