//! Diagnostics for the embedding: a sufficient positivity criterion, growth
//! bounds for the minimal extension, continuous periodic eigenvalues,
//! eigenvalue decay, and the lattice/aliasing identity behind them.

use std::f64::consts::{E, PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{MaternKernel, Smoothness, StationaryKernel};
use crate::embedding::{multi_index, GridSpec, Spectrum};
use crate::error::{Error, Result};

/// Sufficient positivity criterion for a Matérn extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdCriterion {
    /// `∫_{3λ√d/(2h0)}^∞ r^{d-1} κ̂_d(r) dr`
    pub lhs: f64,
    /// `(3^d-1) 3^{d-1} d^{d/2-1} / (2 (h0/λ)^d) · ∫_{(ℓ-h0)/λ}^∞ r^{d-1} |κ(r)| dr`
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates the criterion for extension length `ell`. When it is satisfied
/// the extension is positive definite.
pub fn pd_criterion(kernel: &MaternKernel, grid: GridSpec, ell: f64) -> Result<PdCriterion> {
    let d = grid.d();
    if kernel.dim() != d {
        return Err(Error::InvalidParameter(format!(
            "kernel dimension {} does not match grid dimension {d}",
            kernel.dim()
        )));
    }
    let h0 = grid.h0();
    if !(ell >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ell = {ell} must be at least 1"
        )));
    }
    let lambda = kernel.lambda();
    let df = d as f64;
    let di = d as i32;
    let lhs = kernel.spectral_tail_integral(3.0 * lambda * df.sqrt() / (2.0 * h0))?;
    let factor = (3f64.powi(di) - 1.0) * 3f64.powi(di - 1) * df.powf(0.5 * df - 1.0)
        / (2.0 * (h0 / lambda).powi(di));
    let rhs = factor * kernel.covariance_tail_integral((ell - h0) / lambda)?;
    Ok(PdCriterion {
        lhs,
        rhs,
        satisfied: lhs > rhs,
    })
}

/// Constants of the growth bounds. None of them has a known value; they are
/// supplied by the user or fitted with [`calibrate_constants`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub b: Option<f64>,
}

/// A bound on the extension length with any violated hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllBound {
    pub value: f64,
    pub violations: Vec<String>,
}

impl EllBound {
    pub fn hypotheses_hold(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `√ν · log(max{λ/h0, √ν})`, the growth term of the Matérn bound.
pub fn matern_growth_term(nu: f64, lambda: f64, h0: f64) -> f64 {
    let sqrt_nu = nu.sqrt();
    sqrt_nu * (lambda / h0).max(sqrt_nu).ln()
}

/// `ℓ ≥ λ (C1 + C2 √ν log max{λ/h0, √ν})` guarantees positive definiteness
/// for `1/2 ≤ ν < ∞`, `λ ≤ 1`, `h0/λ ≤ 1/e`, `C2 ≥ 2√2`.
pub fn matern_ell_bound(
    nu: Smoothness,
    lambda: f64,
    h0: f64,
    consts: &BoundConstants,
) -> Result<EllBound> {
    let (c1, c2) = match (consts.c1, consts.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        _ => return Err(Error::InvalidParameter("C1 and C2 are required".into())),
    };
    let Some(nu) = nu.finite() else {
        return Err(Error::InvalidParameter(
            "the Matérn bound needs finite smoothness; use the Gaussian bound".into(),
        ));
    };
    if !(lambda > 0.0 && h0 > 0.0 && nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need positive nu, lambda and h0 (got {nu}, {lambda}, {h0})"
        )));
    }
    let mut violations = Vec::new();
    if nu < 0.5 {
        violations.push(format!("nu = {nu} < 1/2"));
    }
    if lambda > 1.0 {
        violations.push(format!("lambda = {lambda} > 1"));
    }
    if h0 / lambda > 1.0 / E {
        violations.push(format!("h0/lambda = {} > 1/e", h0 / lambda));
    }
    if c2 < 2.0 * SQRT_2 {
        violations.push(format!("C2 = {c2} < 2*sqrt(2)"));
    }
    Ok(EllBound {
        value: lambda * (c1 + c2 * matern_growth_term(nu, lambda, h0)),
        violations,
    })
}

/// `1 + λ max{√2 λ/h0, B}`, the sufficient length for the Gaussian kernel.
pub fn gaussian_ell_bound(lambda: f64, h0: f64, b: f64) -> f64 {
    1.0 + lambda * (SQRT_2 * lambda / h0).max(b)
}

/// Largest number of rectangle-rule points before giving up.
const CONTINUOUS_MAX_POINTS: usize = 1 << 26;

/// Relative convergence target for [`continuous_eigenvalue`].
pub const CONTINUOUS_REL_TOL: f64 = 1e-8;

/// `∫_{[-ℓ,ℓ]^d} ρ(x) cos(2π k·x/(2ℓ)) dx` by the periodic rectangle rule,
/// doubling the points per axis from `quad_n` until two successive values
/// differ by less than `1e-8` of `∫|ρ|`.
///
/// With `quad_n = 2m` one step reproduces `h0^d Λ_k` of the extension.
pub fn continuous_eigenvalue<K: StationaryKernel + ?Sized>(
    kernel: &K,
    ell: f64,
    k: &[i64],
    quad_n: usize,
) -> Result<f64> {
    if quad_n < 2 {
        return Err(Error::InvalidParameter("quad_n must be at least 2".into()));
    }
    if k.len() != kernel.dim() {
        return Err(Error::InvalidParameter(format!(
            "index has {} components, kernel dimension is {}",
            k.len(),
            kernel.dim()
        )));
    }
    let mut n = quad_n;
    let (mut prev, _) = rectangle_rule(kernel, ell, k, n);
    loop {
        n *= 2;
        if n.pow(k.len() as u32) > CONTINUOUS_MAX_POINTS {
            return Err(Error::Quadrature {
                error: f64::NAN,
                tol: CONTINUOUS_REL_TOL,
            });
        }
        let (value, scale) = rectangle_rule(kernel, ell, k, n);
        let diff = (value - prev).abs();
        if diff < CONTINUOUS_REL_TOL * scale {
            return Ok(value);
        }
        if n.pow(k.len() as u32) * 2usize.pow(k.len() as u32) > CONTINUOUS_MAX_POINTS {
            return Err(Error::Quadrature {
                error: diff,
                tol: CONTINUOUS_REL_TOL * scale,
            });
        }
        prev = value;
    }
}

/// One rectangle-rule evaluation with `n` points per axis; returns the
/// value and the same rule applied to `|ρ|`.
pub fn rectangle_rule<K: StationaryKernel + ?Sized>(
    kernel: &K,
    ell: f64,
    k: &[i64],
    n: usize,
) -> (f64, f64) {
    let d = k.len();
    let step = 2.0 * ell / n as f64;
    let weight = step.powi(d as i32);
    let outer = n.pow(d as u32 - 1);
    let rows: Vec<(f64, f64)> = (0..outer)
        .into_par_iter()
        .map(|row| {
            let prefix = multi_index(row, n, d - 1);
            let mut x = vec![0.0; d];
            let mut phase_prefix = 0i64;
            for (a, &p) in prefix.iter().enumerate() {
                let j = p as i64 - (n / 2) as i64;
                x[a] = j as f64 * step;
                phase_prefix += k[a] * j;
            }
            let mut acc = 0.0;
            let mut abs = 0.0;
            for p in 0..n {
                let j = p as i64 - (n / 2) as i64;
                x[d - 1] = j as f64 * step;
                // cos(2π k·x/(2ℓ)) with x = j·2ℓ/n is cos(2π (k·j mod n)/n).
                let phase = (phase_prefix + k[d - 1] * j).rem_euclid(n as i64);
                let v = kernel.rho(&x);
                acc += v * (2.0 * PI * phase as f64 / n as f64).cos();
                abs += v.abs();
            }
            (acc, abs)
        })
        .collect();
    let (value, scale) = rows
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, e)| (a + c, b + e));
    (value * weight, scale * weight)
}

/// Multi-indices in order of nondecreasing Euclidean norm, ties broken
/// lexicographically, starting at the origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrderedLattice {
    pub seq: Vec<Vec<i64>>,
}

impl OrderedLattice {
    pub fn norms(&self) -> Vec<f64> {
        self.seq
            .iter()
            .map(|k| (k.iter().map(|v| v * v).sum::<i64>() as f64).sqrt())
            .collect()
    }
}

pub fn lattice_ordering(d: usize, j: usize) -> Result<OrderedLattice> {
    if j == 0 {
        return Err(Error::InvalidParameter("J must be at least 1".into()));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    let mut radius: i64 = 1;
    loop {
        // Every point with ‖k‖₂ ≤ radius lies in the box, so the selection
        // below is complete up to that norm.
        let width = (2 * radius + 1) as usize;
        let r2 = radius * radius;
        let mut pts: Vec<(i64, Vec<i64>)> = (0..width.pow(d as u32))
            .filter_map(|lin| {
                let k: Vec<i64> = multi_index(lin, width, d)
                    .into_iter()
                    .map(|v| v as i64 - radius)
                    .collect();
                let n2: i64 = k.iter().map(|v| v * v).sum();
                (n2 <= r2).then_some((n2, k))
            })
            .collect();
        if pts.len() >= j {
            pts.sort();
            pts.truncate(j);
            return Ok(OrderedLattice {
                seq: pts.into_iter().map(|(_, k)| k).collect(),
            });
        }
        radius *= 2;
    }
}

/// Log-log fit of the sorted `√(Λ_j/s)` against `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// Inclusive range of `j` used for the fit.
    pub js: (usize, usize),
    pub slope: f64,
    /// `(1 + 2ν/d)/2`; the fitted slope is compared with its negative.
    pub expected_beta: f64,
    pub rel_tol: f64,
    pub pass: bool,
    /// True when all fitted values are equal and the slope carries no
    /// information.
    pub degenerate: bool,
    /// `(j, √(Λ_j/s))` for `j = 1..s`, nonincreasing.
    pub points: Vec<(usize, f64)>,
}

/// Default fit range `[⌈s^0.1⌉, ⌊s^0.6⌋]`.
pub fn default_fit_range(s: usize) -> (usize, usize) {
    let sf = s as f64;
    // powf can land a hair off an exact power, e.g. 1024^0.6 = 63.99…
    let slack = 1e-12;
    let lo = (sf.powf(0.1) * (1.0 - slack)).ceil() as usize;
    let hi = ((sf.powf(0.6) * (1.0 + slack)).floor() as usize).min(s);
    (lo.max(1), hi.max(lo.max(1)))
}

pub fn decay_report(
    spectrum: &Spectrum,
    nu: Smoothness,
    fit_range: Option<(usize, usize)>,
    rel_tol: f64,
) -> Result<DecayReport> {
    let Some(nu) = nu.finite() else {
        return Err(Error::InvalidParameter(
            "no algebraic decay rate for infinite smoothness".into(),
        ));
    };
    let values = spectrum.values();
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::ContractViolation(
            "decay report needs a nonnegative spectrum".into(),
        ));
    }
    let s = values.len();
    let (lo, hi) = fit_range.unwrap_or_else(|| default_fit_range(s));
    if !(1 <= lo && lo < hi && hi <= s) {
        return Err(Error::InvalidParameter(format!(
            "fit range ({lo}, {hi}) must satisfy 1 <= lo < hi <= s = {s}"
        )));
    }
    let d = spectrum.embedding().grid().d() as f64;
    let expected_beta = (1.0 + 2.0 * nu / d) / 2.0;
    let mut sorted: Vec<f64> = values.iter().map(|v| (v / s as f64).sqrt()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let points: Vec<(usize, f64)> = sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i + 1, v))
        .collect();

    let window = &points[lo - 1..hi];
    let degenerate = window.iter().all(|p| p.1 == window[0].1);
    let slope = if degenerate {
        0.0
    } else {
        let fit: Vec<(f64, f64)> = window
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|&(j, v)| ((j as f64).ln(), v.ln()))
            .collect();
        if fit.len() < 2 {
            return Err(Error::DegenerateFit(format!(
                "fewer than two positive values in j = {lo}..{hi}"
            )));
        }
        least_squares_slope(&fit)
    };
    let pass = !degenerate && (slope + expected_beta).abs() <= rel_tol * expected_beta;
    Ok(DecayReport {
        js: (lo, hi),
        slope,
        expected_beta,
        rel_tol,
        pass,
        degenerate,
        points,
    })
}

/// Slope of the least-squares line through `(x, y)` pairs.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// `Σ_k (Λ_k/s)^{p/2}`.
pub fn qmc_criterion_sum(spectrum: &Spectrum, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p = {p} must lie in (0, 1)"
        )));
    }
    let values = spectrum.values();
    if values.iter().any(|v| *v < 0.0) {
        return Err(Error::ContractViolation(
            "criterion needs a nonnegative spectrum".into(),
        ));
    }
    let s = values.len() as f64;
    Ok(values.iter().map(|v| (v / s).powf(p / 2.0)).sum())
}

/// Both sides of the lattice/aliasing identity
/// `Σ_k ρ(hk) cos(2πh k·ξ) = h^{-d} Σ_r ρ̂(ξ + r/h)`, truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Bound on the omitted part of the lattice sum, when available.
    pub lhs_tail_bound: Option<f64>,
    /// Bound on the omitted part of the aliased sum, when available.
    pub rhs_tail_bound: Option<f64>,
    /// Whether both tail bounds are known and below the requested target.
    pub tails_within_target: bool,
}

/// Truncates the lattice sum to `‖k‖∞ ≤ k_trunc` and the aliased sum to
/// `‖r‖∞ ≤ r_trunc`. `target` is the accuracy the caller wants; the
/// returned flag says whether the tail bounds certify it.
pub fn sampling_theorem_check<K: StationaryKernel + ?Sized>(
    kernel: &K,
    h: f64,
    xi: &[f64],
    k_trunc: usize,
    r_trunc: usize,
    target: f64,
) -> Result<SamplingCheck> {
    let d = kernel.dim();
    if xi.len() != d {
        return Err(Error::InvalidParameter(format!(
            "xi has {} components, kernel dimension is {d}",
            xi.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h = {h} must be positive")));
    }
    kernel.spectral_density(xi)?;

    let lhs = box_sum(d, k_trunc, |k| {
        let x: Vec<f64> = k.iter().map(|&v| h * v as f64).collect();
        let phase: f64 = k.iter().zip(xi).map(|(&v, &z)| v as f64 * z).sum();
        Ok(kernel.rho(&x) * (2.0 * PI * h * phase).cos())
    })?;
    let rhs = box_sum(d, r_trunc, |r| {
        let w: Vec<f64> = r.iter().zip(xi).map(|(&v, &z)| z + v as f64 / h).collect();
        kernel.spectral_density(&w)
    })? / h.powi(d as i32);

    let lhs_tail_bound = kernel.lattice_tail_bound(h, k_trunc + 1);
    let rhs_tail_bound = kernel.aliased_tail_bound(h, xi, r_trunc + 1);
    let tails_within_target = matches!(
        (lhs_tail_bound, rhs_tail_bound),
        (Some(a), Some(b)) if a + b <= target
    );
    Ok(SamplingCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        lhs_tail_bound,
        rhs_tail_bound,
        tails_within_target,
    })
}

/// `Σ f(k)` over `‖k‖∞ ≤ radius`, summing from the outermost shell inward
/// so that small terms are accumulated first.
fn box_sum<F>(d: usize, radius: usize, f: F) -> Result<f64>
where
    F: Fn(&[i64]) -> Result<f64> + Sync,
{
    let width = 2 * radius + 1;
    let total = width.pow(d as u32);
    let mut shells: Vec<Vec<f64>> = vec![Vec::new(); radius + 1];
    let terms: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let k: Vec<i64> = multi_index(lin, width, d)
                .into_iter()
                .map(|v| v as i64 - radius as i64)
                .collect();
            let shell = k
                .iter()
                .map(|v| v.unsigned_abs() as usize)
                .max()
                .unwrap_or(0);
            f(&k).map(|v| (shell, v))
        })
        .collect::<Result<_>>()?;
    for (shell, v) in terms {
        shells[shell].push(v);
    }
    Ok(shells
        .into_iter()
        .rev()
        .map(|s| s.into_iter().sum::<f64>())
        .sum())
}

/// One empirical minimal extension length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d: usize,
    pub nu: Smoothness,
    pub lambda: f64,
    pub h0: f64,
    pub ell: f64,
}

/// Slack `bound - ell` over the fitted points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitStats {
    pub points: usize,
    pub min_slack: f64,
    pub mean_slack: f64,
    pub max_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub constants: BoundConstants,
    pub matern: Option<FitStats>,
    pub gaussian: Option<FitStats>,
}

/// Points needed per fitted family.
pub const MIN_CALIBRATION_POINTS: usize = 4;

/// Fits `C1, C2` to the finite-ν points and `B` to the Gaussian points.
///
/// `C1 ≥ 0` and `C2 ≥ 2√2` minimise the total slack subject to the bound
/// dominating every point. `B ≥ 0` is the smallest value that dominates.
/// `C3` and `C4` are left unset.
pub fn calibrate_constants(points: &[SweepPoint]) -> Result<Calibration> {
    if points.is_empty() {
        return Err(Error::InvalidParameter(
            "no sweep points to calibrate".into(),
        ));
    }
    for p in points {
        if !(p.lambda > 0.0 && p.h0 > 0.0 && p.ell.is_finite()) {
            return Err(Error::Infeasible(format!("invalid sweep point {p:?}")));
        }
    }
    let (finite, gaussian): (Vec<&SweepPoint>, Vec<&SweepPoint>) =
        points.iter().partition(|p| !p.nu.is_infinite());
    for (name, family) in [("finite-smoothness", &finite), ("Gaussian", &gaussian)] {
        if !family.is_empty() && family.len() < MIN_CALIBRATION_POINTS {
            return Err(Error::InvalidParameter(format!(
                "{} {name} points; at least {MIN_CALIBRATION_POINTS} are needed",
                family.len()
            )));
        }
    }
    let mut constants = BoundConstants::default();
    let mut matern = None;
    let mut gauss = None;

    if !finite.is_empty() {
        // In units of λ: y = ℓ/λ must satisfy y ≤ C1 + C2 g.
        let data: Vec<(f64, f64)> = finite
            .iter()
            .map(|p| {
                let nu = p.nu.finite().unwrap_or(f64::INFINITY);
                (matern_growth_term(nu, p.lambda, p.h0), p.ell / p.lambda)
            })
            .collect();
        let (c1, c2) = fit_envelope(&data)?;
        constants.c1 = Some(c1);
        constants.c2 = Some(c2);
        let slack: Vec<f64> = finite
            .iter()
            .zip(&data)
            .map(|(p, &(g, _))| p.lambda * (c1 + c2 * g) - p.ell)
            .collect();
        matern = Some(stats(&slack));
    }

    if !gaussian.is_empty() {
        let b = gaussian
            .iter()
            .filter(|p| (p.ell - 1.0) / p.lambda > SQRT_2 * p.lambda / p.h0)
            .map(|p| (p.ell - 1.0) / p.lambda)
            .fold(0.0, f64::max);
        constants.b = Some(b);
        let slack: Vec<f64> = gaussian
            .iter()
            .map(|p| gaussian_ell_bound(p.lambda, p.h0, b) - p.ell)
            .collect();
        gauss = Some(stats(&slack));
    }

    Ok(Calibration {
        constants,
        matern,
        gaussian: gauss,
    })
}

/// Minimises `Σ (C1 + C2 g_i)` subject to `C1 + C2 g_i ≥ y_i`, `C1 ≥ 0`,
/// `C2 ≥ 2√2`. The objective is convex and piecewise linear in `C2`, so the
/// optimum is at the lower limit or at a breakpoint.
fn fit_envelope(data: &[(f64, f64)]) -> Result<(f64, f64)> {
    let c2_min = 2.0 * SQRT_2;
    let c1_for = |c2: f64| data.iter().map(|&(g, y)| y - c2 * g).fold(0.0f64, f64::max);
    let objective = |c2: f64| {
        let c1 = c1_for(c2);
        data.iter().map(|&(g, _)| c1 + c2 * g).sum::<f64>()
    };
    let mut candidates = vec![c2_min];
    for (i, &(gi, yi)) in data.iter().enumerate() {
        if gi > 0.0 {
            candidates.push(yi / gi);
        }
        for &(gj, yj) in &data[i + 1..] {
            if gi != gj {
                candidates.push((yi - yj) / (gi - gj));
            }
        }
    }
    let best = candidates
        .into_iter()
        .filter(|c| c.is_finite() && *c >= c2_min)
        .map(|c2| (objective(c2), c2))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .ok_or_else(|| Error::Infeasible("no admissible C2".into()))?;
    let c2 = best.1;
    Ok((c1_for(c2), c2))
}

fn stats(slack: &[f64]) -> FitStats {
    FitStats {
        points: slack.len(),
        min_slack: slack.iter().copied().fold(f64::INFINITY, f64::min),
        mean_slack: slack.iter().sum::<f64>() / slack.len() as f64,
        max_slack: slack.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{self, Embedding};

    fn matern(lambda: f64, nu: f64, d: usize) -> MaternKernel {
        MaternKernel::new(1.0, lambda, Smoothness::Finite(nu), d).unwrap()
    }

    #[test]
    fn lattice_small_cases() {
        let l = lattice_ordering(1, 5).unwrap();
        assert_eq!(l.seq, vec![vec![0], vec![-1], vec![1], vec![-2], vec![2]]);
        let l = lattice_ordering(2, 5).unwrap();
        assert_eq!(
            l.seq,
            vec![vec![0, 0], vec![-1, 0], vec![0, -1], vec![0, 1], vec![1, 0]]
        );
    }

    #[test]
    fn lattice_prefix_property() {
        for d in 1..=3 {
            let a = lattice_ordering(d, 100).unwrap();
            let b = lattice_ordering(d, 1000).unwrap();
            assert_eq!(a.seq[..], b.seq[..100]);
        }
    }

    #[test]
    fn matern_bound_at_e() {
        let consts = BoundConstants {
            c1: Some(1.5),
            c2: Some(3.0),
            ..Default::default()
        };
        let lambda = 0.5;
        let h0 = lambda / E;
        let b = matern_ell_bound(Smoothness::Finite(2.0), lambda, h0, &consts).unwrap();
        assert!((b.value - lambda * (1.5 + 3.0 * 2f64.sqrt())).abs() < 1e-14);
        assert!(b.hypotheses_hold());
        let bad = matern_ell_bound(Smoothness::Finite(0.3), 2.0, 1.0, &consts).unwrap();
        assert_eq!(bad.violations.len(), 3);
    }

    #[test]
    fn matern_bound_monotone_in_nu() {
        let consts = BoundConstants {
            c1: Some(1.0),
            c2: Some(3.0),
            ..Default::default()
        };
        let mut last = 0.0;
        for i in 1..200 {
            let nu = 0.5 + i as f64 * 0.37;
            let b = matern_ell_bound(Smoothness::Finite(nu), 0.25, 1.0 / 64.0, &consts).unwrap();
            assert!(b.value >= last);
            last = b.value;
        }
    }

    #[test]
    fn gaussian_bound_regimes() {
        assert!(
            (gaussian_ell_bound(0.5, 0.5 / 8.0, 0.0) - (1.0 + 0.5 * SQRT_2 * 8.0)).abs() < 1e-14
        );
        assert_eq!(gaussian_ell_bound(0.1, 0.1, 20.0), 1.0 + 0.1 * 20.0);
    }

    #[test]
    fn pd_criterion_sigma_cancels_and_eventually_holds() {
        let grid = GridSpec::new(1, 16).unwrap();
        let k1 = matern(0.25, 1.0, 1);
        let k2 = k1.with_sigma2(7.3).unwrap();
        let mut seen = false;
        let mut last_rhs = f64::INFINITY;
        for m in 16..200 {
            let ell = m as f64 / 16.0;
            let a = pd_criterion(&k1, grid, ell).unwrap();
            let b = pd_criterion(&k2, grid, ell).unwrap();
            assert_eq!(a.satisfied, b.satisfied);
            assert!(a.rhs <= last_rhs);
            last_rhs = a.rhs;
            seen |= a.satisfied;
        }
        assert!(seen);
    }

    #[test]
    fn rectangle_rule_matches_matrix_eigenvalue() {
        let k = matern(0.7, 1.5, 2);
        let grid = GridSpec::new(2, 4).unwrap();
        let emb = Embedding::new(grid, 6).unwrap();
        let sp = embedding::compute_spectrum(&k, &emb).unwrap();
        let n = emb.n();
        let h2 = grid.h0().powi(2);
        for idx in [[0usize, 0], [1, 2], [3, 5]] {
            let lin = embedding::linear_index(&idx, n);
            let kk = [idx[0] as i64, idx[1] as i64];
            let (v, _) = rectangle_rule(&k, emb.ell(), &kk, n);
            assert!((v - h2 * sp.values()[lin]).abs() < 1e-13);
        }
    }

    #[test]
    fn continuous_eigenvalue_closed_form() {
        // ∫_{-ℓ}^{ℓ} e^{-|x|} cos(ωx) dx = 2 (1 - e^{-ℓ}(cos ωℓ - ω sin ωℓ)) / (1 + ω²)
        let k = MaternKernel::exponential(1.0, 1.0, 1).unwrap();
        let ell = 1.5;
        for j in 0..3i64 {
            let w = 2.0 * PI * j as f64 / (2.0 * ell);
            let exact = 2.0 * (1.0 - (-ell).exp() * ((w * ell).cos() - w * (w * ell).sin()))
                / (1.0 + w * w);
            let got = continuous_eigenvalue(&k, ell, &[j], 8).unwrap();
            assert!((got - exact).abs() < 1e-7, "{j}: {got} vs {exact}");
        }
    }

    #[test]
    fn decay_report_constant_spectrum() {
        let g = GridSpec::new(1, 4).unwrap();
        let emb = Embedding::new(g, 4).unwrap();
        let mut column = vec![0.0; 8];
        column[0] = 1.0;
        let sp = embedding::spectrum(&column, &emb).unwrap();
        let r = decay_report(&sp, Smoothness::Finite(1.0), Some((1, 8)), 0.15).unwrap();
        assert_eq!(r.slope, 0.0);
        assert!(r.degenerate);
        assert!(!r.pass);
    }

    #[test]
    fn qmc_sum_two_point() {
        let g = GridSpec::new(1, 1).unwrap();
        let emb = Embedding::new(g, 1).unwrap();
        let sp = embedding::spectrum(&[1.0, 0.6], &emb).unwrap();
        let p = 0.7;
        let want = (1.6f64 / 2.0).powf(p / 2.0) + (0.4f64 / 2.0).powf(p / 2.0);
        assert!((qmc_criterion_sum(&sp, p).unwrap() - want).abs() < 1e-15);
        assert!(qmc_criterion_sum(&sp, 1.0).is_err());
    }

    #[test]
    fn calibration_recovers_synthetic_constants() {
        let (c1, c2) = (1.7, 4.2);
        let mut pts = Vec::new();
        for &nu in &[0.5, 1.0, 2.0, 4.0] {
            for &m0 in &[8.0, 32.0, 128.0] {
                let lambda = 0.5;
                let h0 = 1.0 / m0;
                let ell = lambda * (c1 + c2 * matern_growth_term(nu, lambda, h0));
                pts.push(SweepPoint {
                    d: 2,
                    nu: Smoothness::Finite(nu),
                    lambda,
                    h0,
                    ell,
                });
            }
        }
        for &(lambda, b) in &[(0.5, 30.0), (0.25, 30.0), (0.125, 30.0), (0.1, 30.0)] {
            let h0 = lambda / 2.0;
            pts.push(SweepPoint {
                d: 2,
                nu: Smoothness::Infinite,
                lambda,
                h0,
                ell: gaussian_ell_bound(lambda, h0, b),
            });
        }
        let cal = calibrate_constants(&pts).unwrap();
        assert!((cal.constants.c1.unwrap() - c1).abs() < 0.01 * c1);
        assert!((cal.constants.c2.unwrap() - c2).abs() < 0.01 * c2);
        assert!((cal.constants.b.unwrap() - 30.0).abs() < 0.3);
        assert!(cal.matern.unwrap().min_slack > -1e-9);
        assert!(calibrate_constants(&[]).is_err());
        assert!(calibrate_constants(&pts[..2]).is_err());
    }

    #[test]
    fn sampling_identity_gaussian() {
        let k = MaternKernel::gaussian(1.0, 1.0, 1).unwrap();
        let c = sampling_theorem_check(&k, 0.25, &[0.13], 60, 3, 1e-12).unwrap();
        assert!(c.residual < 1e-12, "{c:?}");
        assert!(c.tails_within_target);
    }
}
