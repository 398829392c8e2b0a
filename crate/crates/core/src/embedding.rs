//! Periodic extension of a covariance, the circulant first column, its
//! spectrum, and the search for the smallest nonnegative embedding.
//!
//! Arrays over `Z^d_n` are stored lexicographically with the first index
//! varying slowest.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{KernelInfo, StationaryKernel};
use crate::error::{Error, Result};
use crate::fft::{Direction, NdFft};

/// Threshold on `max|Im| / max|Re|` of the spectrum.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-9;

/// Target for the omitted lattice remainder in the lower-bound diagnostic.
const LOWER_BOUND_REMAINDER: f64 = 1e-12;

/// The sampling grid `x_k = h0·k`, `k ∈ {0..m0}^d`, with `h0 = 1/m0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    m0: usize,
}

impl GridSpec {
    pub fn new(d: usize, m0: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "d = {d} must be 1, 2 or 3"
            )));
        }
        if m0 == 0 {
            return Err(Error::InvalidParameter("m0 must be at least 1".into()));
        }
        Ok(GridSpec { d, m0 })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn h0(&self) -> f64 {
        1.0 / self.m0 as f64
    }

    /// Number of grid points `(m0+1)^d`.
    pub fn points(&self) -> usize {
        (self.m0 + 1).pow(self.d as u32)
    }

    /// Coordinate `h0·k` of integer offset `k`.
    fn coord(&self, k: i64) -> f64 {
        k as f64 / self.m0 as f64
    }
}

/// A circulant extension with `2m` points per axis, `ℓ = m·h0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedding {
    grid: GridSpec,
    m: usize,
}

impl Embedding {
    pub fn new(grid: GridSpec, m: usize) -> Result<Self> {
        if m < grid.m0 {
            return Err(Error::InvalidParameter(format!(
                "m = {m} must be at least m0 = {}",
                grid.m0
            )));
        }
        Ok(Embedding { grid, m })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ell(&self) -> f64 {
        self.m as f64 / self.grid.m0 as f64
    }

    /// Points per axis of the extension, `2m`.
    pub fn n(&self) -> usize {
        2 * self.m
    }

    /// Total size `s = (2m)^d`.
    pub fn s(&self) -> usize {
        self.n().pow(self.grid.d as u32)
    }
}

/// Eigenvalues of the circulant extension.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    min_value: f64,
    tolerance: f64,
    embedding: Embedding,
    kernel: Option<KernelInfo>,
}

impl Spectrum {
    /// Eigenvalues in lexicographic order over `Z^d_{2m}`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Smallest eigenvalue before any clamping.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn kernel(&self) -> Option<&KernelInfo> {
        self.kernel.as_ref()
    }

    pub fn with_kernel(mut self, info: KernelInfo) -> Self {
        self.kernel = Some(info);
        self
    }

    /// `ε · √(log2 s) · max|Λ|`, an estimate of the rounding error the FFT
    /// leaves in an eigenvalue. Measured errors sit a few times below it.
    pub fn roundoff_floor(&self) -> f64 {
        let max = self.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        f64::EPSILON * (self.values.len() as f64).log2().max(1.0).sqrt() * max
    }

    pub fn is_nonnegative(&self) -> bool {
        self.min_value >= -self.tolerance
    }

    /// Sets values in `[-tol, 0)` to zero and records `tol`. Returns how many
    /// values were changed.
    pub fn clamp_within(&mut self, tol: f64) -> usize {
        self.tolerance = tol;
        let mut clamped = 0;
        for v in self.values.iter_mut() {
            if *v < 0.0 && *v >= -tol {
                *v = 0.0;
                clamped += 1;
            }
        }
        clamped
    }
}

/// Reflection `φ`: 2ℓ-periodic, identity on `[0, ℓ]`, `2ℓ - x` on `[ℓ, 2ℓ]`.
pub fn phi(x: f64, ell: f64) -> f64 {
    let y = x.rem_euclid(2.0 * ell);
    if y <= ell {
        y
    } else {
        2.0 * ell - y
    }
}

/// The periodic extension `ρ^ext(x) = ρ(φ(x_1), …, φ(x_d))`.
pub fn rho_ext<K: StationaryKernel + ?Sized>(kernel: &K, x: &[f64], ell: f64) -> f64 {
    let folded: Vec<f64> = x.iter().map(|&v| phi(v, ell)).collect();
    kernel.rho(&folded)
}

/// Multi-index of linear position `lin` in `Z^d_n`.
pub fn multi_index(mut lin: usize, n: usize, d: usize) -> Vec<usize> {
    let mut k = vec![0; d];
    for slot in k.iter_mut().rev() {
        *slot = lin % n;
        lin /= n;
    }
    k
}

/// Linear position of multi-index `k` in `Z^d_n`.
pub fn linear_index(k: &[usize], n: usize) -> usize {
    k.iter().fold(0, |acc, &v| acc * n + v)
}

/// Linear positions in `Z^d_{2m}` of the grid points `{0..m0}^d`, in
/// lexicographic order of the grid.
pub fn grid_positions(embedding: &Embedding) -> Vec<usize> {
    let grid = embedding.grid;
    let n = embedding.n();
    (0..grid.points())
        .map(|p| linear_index(&multi_index(p, grid.m0 + 1, grid.d), n))
        .collect()
}

/// Builds first columns for a sequence of extensions of one grid, caching
/// radial covariance values by squared integer norm.
struct ColumnBuilder<'a, K: ?Sized> {
    kernel: &'a K,
    grid: GridSpec,
    isotropic: bool,
    radial: Vec<f64>,
}

impl<'a, K: StationaryKernel + ?Sized> ColumnBuilder<'a, K> {
    fn new(kernel: &'a K, grid: GridSpec) -> Self {
        ColumnBuilder {
            kernel,
            grid,
            isotropic: kernel.radial_rho(0.0).is_some(),
            radial: Vec::new(),
        }
    }

    /// Fills `radial[n]`, ρ at squared integer norm `n`, wherever `needed[n]`.
    fn ensure_radial(&mut self, needed: &[bool]) {
        if needed.len() > self.radial.len() {
            self.radial.resize(needed.len(), f64::NAN);
        }
        let m0 = self.grid.m0 as f64;
        let kernel = self.kernel;
        let missing: Vec<usize> = (0..needed.len())
            .filter(|&n| needed[n] && self.radial[n].is_nan())
            .collect();
        let values: Vec<f64> = missing
            .par_iter()
            .map(|&n| {
                kernel
                    .radial_rho((n as f64).sqrt() / m0)
                    .expect("isotropic kernel")
            })
            .collect();
        for (n, v) in missing.into_iter().zip(values) {
            self.radial[n] = v;
        }
    }

    fn column(&mut self, m: usize) -> Vec<f64> {
        let d = self.grid.d;
        let n = 2 * m;
        let fold: Vec<usize> = (0..n).map(|k| k.min(n - k)).collect();
        let folded_len = (m + 1).pow(d as u32);
        let s = n.pow(d as u32);

        // Values on the folded grid {0..m}^d, indexed lexicographically.
        let folded: Vec<f64> = if self.isotropic {
            let mut needed = vec![false; d * m * m + 1];
            for p in 0..folded_len {
                let k = multi_index(p, m + 1, d);
                needed[k.iter().map(|v| v * v).sum::<usize>()] = true;
            }
            self.ensure_radial(&needed);
            let radial = &self.radial;
            (0..folded_len)
                .into_par_iter()
                .map(|p| {
                    let k = multi_index(p, m + 1, d);
                    radial[k.iter().map(|v| v * v).sum::<usize>()]
                })
                .collect()
        } else {
            let grid = self.grid;
            let kernel = self.kernel;
            (0..folded_len)
                .into_par_iter()
                .map(|p| {
                    let x: Vec<f64> = multi_index(p, m + 1, d)
                        .into_iter()
                        .map(|v| grid.coord(v as i64))
                        .collect();
                    kernel.rho(&x)
                })
                .collect()
        };

        let mut column = vec![0.0; s];
        column.par_chunks_mut(n).enumerate().for_each(|(row, out)| {
            let prefix = multi_index(row, n, d - 1);
            let base = prefix.iter().fold(0, |acc, &v| acc * (m + 1) + fold[v]) * (m + 1);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = folded[base + fold[j]];
            }
        });
        column
    }
}

/// First column of the circulant extension: entry `k` is `ρ^ext(h0·k)`.
pub fn first_column<K: StationaryKernel + ?Sized>(kernel: &K, embedding: &Embedding) -> Vec<f64> {
    ColumnBuilder::new(kernel, embedding.grid).column(embedding.m)
}

/// Eigenvalues of the circulant matrix with first column `column`: the
/// unnormalized forward DFT. Fails if the transform is not real, which
/// means the column was not even.
pub fn spectrum(column: &[f64], embedding: &Embedding) -> Result<Spectrum> {
    let s = embedding.s();
    if column.len() != s {
        return Err(Error::InvalidParameter(format!(
            "column has {} entries, expected s = {s}",
            column.len()
        )));
    }
    let mut data: Vec<Complex64> = column.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    NdFft::new(embedding.n(), embedding.grid.d, Direction::Forward).process(&mut data);
    let scale = data.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let residue = data.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if residue > IMAGINARY_RESIDUE_TOL * scale {
        return Err(Error::ImaginaryResidue { residue, scale });
    }
    let values: Vec<f64> = data.into_iter().map(|c| c.re).collect();
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Spectrum {
        values,
        min_value,
        tolerance: 0.0,
        embedding: *embedding,
        kernel: None,
    })
}

/// First column and spectrum for one extension.
pub fn compute_spectrum<K: StationaryKernel + ?Sized>(
    kernel: &K,
    embedding: &Embedding,
) -> Result<Spectrum> {
    check_dims(kernel, &embedding.grid)?;
    Ok(spectrum(&first_column(kernel, embedding), embedding)?.with_kernel(kernel.info()))
}

fn check_dims<K: StationaryKernel + ?Sized>(kernel: &K, grid: &GridSpec) -> Result<()> {
    if kernel.dim() != grid.d {
        return Err(Error::InvalidParameter(format!(
            "kernel dimension {} does not match grid dimension {}",
            kernel.dim(),
            grid.d
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchSchedule {
    /// `m = m0, m0+1, m0+2, …`
    #[default]
    Increment,
    /// Double `m` until nonnegative, then bisect. Agrees with `Increment`
    /// whenever nonnegativity is monotone in `m`.
    DoubleThenBisect,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub tol: f64,
    pub m_max: usize,
    /// First `m` to try; defaults to `m0`.
    pub m_start: Option<usize>,
    pub schedule: SearchSchedule,
    /// Raise the tolerance to [`Spectrum::roundoff_floor`] when that is
    /// larger. Without it a zero tolerance can be unattainable for very
    /// smooth kernels.
    pub roundoff_guard: bool,
}

impl SearchOptions {
    pub fn new(tol: f64, m_max: usize) -> Self {
        SearchOptions {
            tol,
            m_max,
            m_start: None,
            schedule: SearchSchedule::Increment,
            roundoff_guard: false,
        }
    }
}

/// Outcome of [`minimal_embedding_with`].
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub embedding: Embedding,
    /// Spectrum with values in `[-tol, 0)` clamped to zero.
    pub spectrum: Spectrum,
    /// Number of spectra computed.
    pub steps: usize,
    pub seconds: f64,
}

/// Smallest `m ≥ m0` whose spectrum has minimum `≥ -tol`, trying
/// `m0, m0+1, …` up to `m_max`.
pub fn minimal_embedding<K: StationaryKernel + ?Sized>(
    kernel: &K,
    grid: GridSpec,
    tol: f64,
    m_max: usize,
) -> Result<(Embedding, Spectrum)> {
    let r = minimal_embedding_with(kernel, grid, &SearchOptions::new(tol, m_max))?;
    Ok((r.embedding, r.spectrum))
}

pub fn minimal_embedding_with<K: StationaryKernel + ?Sized>(
    kernel: &K,
    grid: GridSpec,
    options: &SearchOptions,
) -> Result<SearchResult> {
    check_dims(kernel, &grid)?;
    let tol = options.tol;
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol = {tol} must be nonnegative"
        )));
    }
    let m_start = options.m_start.unwrap_or(grid.m0);
    if m_start < grid.m0 {
        return Err(Error::InvalidParameter(format!(
            "m_start = {m_start} is below m0 = {}",
            grid.m0
        )));
    }
    if options.m_max < m_start {
        return Err(Error::InvalidParameter(format!(
            "m_max = {} is below the starting m = {m_start}",
            options.m_max
        )));
    }
    let started = Instant::now();
    let mut builder = ColumnBuilder::new(kernel, grid);
    let info = kernel.info();
    let mut steps = 0;
    let mut evaluate = |m: usize| -> Result<Spectrum> {
        steps += 1;
        let embedding = Embedding { grid, m };
        Ok(spectrum(&builder.column(m), &embedding)?.with_kernel(info.clone()))
    };
    let guard = options.roundoff_guard;
    let effective_tol = |sp: &Spectrum| {
        if guard {
            tol.max(sp.roundoff_floor())
        } else {
            tol
        }
    };
    let accept = |sp: &Spectrum| sp.min_value >= -effective_tol(sp);

    let found = match options.schedule {
        SearchSchedule::Increment => {
            let mut last_min = f64::NAN;
            let mut found = None;
            for m in m_start..=options.m_max {
                let sp = evaluate(m)?;
                if accept(&sp) {
                    found = Some(sp);
                    break;
                }
                last_min = sp.min_value;
            }
            found.ok_or(Error::NotPositiveDefinite {
                m_max: options.m_max,
                last_min_eig: last_min,
            })?
        }
        SearchSchedule::DoubleThenBisect => {
            let mut lo = None; // largest m known to fail
            let mut m = m_start;
            let mut hi = loop {
                let sp = evaluate(m)?;
                if accept(&sp) {
                    break sp;
                }
                if m == options.m_max {
                    return Err(Error::NotPositiveDefinite {
                        m_max: options.m_max,
                        last_min_eig: sp.min_value,
                    });
                }
                lo = Some(m);
                m = (2 * m).min(options.m_max);
            };
            if let Some(mut lo) = lo {
                while hi.embedding.m - lo > 1 {
                    let mid = lo + (hi.embedding.m - lo) / 2;
                    let sp = evaluate(mid)?;
                    if accept(&sp) {
                        hi = sp;
                    } else {
                        lo = mid;
                    }
                }
            }
            hi
        }
    };
    let mut spectrum = found;
    let tol = effective_tol(&spectrum);
    spectrum.clamp_within(tol);
    Ok(SearchResult {
        embedding: spectrum.embedding,
        spectrum,
        steps,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// The two terms of the eigenvalue lower bound and their difference.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LowerBound {
    /// `aliased_min - lattice_tail`.
    pub value: f64,
    /// `h0^{-d} min_ζ Σ_{‖r‖∞≤T} ρ̂((ζ+r)/h0)` over the ζ-grid.
    pub aliased_min: f64,
    /// `Σ |ρ(h0 k)|` over lattice points outside `{-m..m-1}^d` with
    /// `‖k‖∞ ≤ tail_radius`.
    pub lattice_tail: f64,
    pub tail_radius: usize,
}

/// Lower bound on the smallest eigenvalue of the extension from the aliased
/// spectral density minus the covariance mass outside the extension.
///
/// The ζ-minimum is taken over a uniform grid of `zeta_grid_n^d` points on
/// `[-1/2, 1/2]^d`, so the result is limited by that resolution.
pub fn eigen_lower_bound_diagnostic<K: StationaryKernel + ?Sized>(
    kernel: &K,
    embedding: &Embedding,
    zeta_grid_n: usize,
    trunc_radius: usize,
) -> Result<LowerBound> {
    let grid = embedding.grid;
    check_dims(kernel, &grid)?;
    let d = grid.d;
    let h0 = grid.h0();
    kernel.spectral_density(&vec![0.0; d])?;
    if zeta_grid_n == 0 {
        return Err(Error::InvalidParameter(
            "zeta_grid_n must be at least 1".into(),
        ));
    }

    let zeta_axis: Vec<f64> = if zeta_grid_n == 1 {
        vec![0.0]
    } else {
        (0..zeta_grid_n)
            .map(|i| -0.5 + i as f64 / (zeta_grid_n - 1) as f64)
            .collect()
    };
    let t = trunc_radius as i64;
    let width = 2 * trunc_radius + 1;
    let shifts = width.pow(d as u32);
    let zeta_count = zeta_grid_n.pow(d as u32);
    let sums: Vec<f64> = (0..zeta_count)
        .into_par_iter()
        .map(|z| -> Result<f64> {
            let zeta: Vec<f64> = multi_index(z, zeta_grid_n, d)
                .into_iter()
                .map(|i| zeta_axis[i])
                .collect();
            let mut xi = vec![0.0; d];
            let mut acc = 0.0;
            for r in 0..shifts {
                for (a, ri) in multi_index(r, width, d).into_iter().enumerate() {
                    xi[a] = (zeta[a] + (ri as i64 - t) as f64) / h0;
                }
                acc += kernel.spectral_density(&xi)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let aliased_min = sums.into_iter().fold(f64::INFINITY, f64::min) / h0.powi(d as i32);

    let m = embedding.m;
    let mut k_max = m.max(1);
    loop {
        let bound = kernel
            .lattice_tail_bound(h0, k_max + 1)
            .ok_or(Error::CapabilityMissing("lattice tail bound"))?;
        if bound < LOWER_BOUND_REMAINDER {
            break;
        }
        if k_max > 1 << 20 {
            return Err(Error::Quadrature {
                error: bound,
                tol: LOWER_BOUND_REMAINDER,
            });
        }
        k_max += (k_max / 8).max(1);
    }
    let lattice_tail = outside_lattice_sum(kernel, grid, m, k_max);
    Ok(LowerBound {
        value: aliased_min - lattice_tail,
        aliased_min,
        lattice_tail,
        tail_radius: k_max,
    })
}

/// `Σ |ρ(h0 k)|` over `‖k‖∞ ≤ k_max`, `k ∉ {-m..m-1}^d`.
fn outside_lattice_sum<K: StationaryKernel + ?Sized>(
    kernel: &K,
    grid: GridSpec,
    m: usize,
    k_max: usize,
) -> f64 {
    let d = grid.d;
    let width = 2 * k_max + 1;
    let total = width.pow(d as u32);
    let outer = width.pow(d as u32 - 1);
    // Sum over rows of the last axis; each row is summed in a fixed order.
    let rows: Vec<f64> = (0..outer)
        .into_par_iter()
        .map(|row| {
            let mut x = vec![0.0; d];
            let prefix: Vec<i64> = multi_index(row, width, d - 1)
                .into_iter()
                .map(|v| v as i64 - k_max as i64)
                .collect();
            let inside_prefix = prefix.iter().all(|&v| v >= -(m as i64) && v < m as i64);
            for (a, &v) in prefix.iter().enumerate() {
                x[a] = grid.coord(v);
            }
            let mut acc = 0.0;
            for j in 0..width {
                let k = j as i64 - k_max as i64;
                if inside_prefix && k >= -(m as i64) && k < m as i64 {
                    continue;
                }
                x[d - 1] = grid.coord(k);
                acc += kernel.rho(&x).abs();
            }
            acc
        })
        .collect();
    debug_assert_eq!(rows.len() * width, total);
    rows.into_iter().sum()
}

/// The `M × M` covariance matrix `R_{k,k'} = ρ(h0 (k - k'))` of the grid,
/// row-major with lexicographic point order.
pub fn covariance_matrix<K: StationaryKernel + ?Sized>(kernel: &K, grid: GridSpec) -> Vec<f64> {
    let points = grid.points();
    let d = grid.d;
    let idx: Vec<Vec<i64>> = (0..points)
        .map(|p| {
            multi_index(p, grid.m0 + 1, d)
                .into_iter()
                .map(|v| v as i64)
                .collect()
        })
        .collect();
    let mut out = vec![0.0; points * points];
    out.par_chunks_mut(points).enumerate().for_each(|(i, row)| {
        let mut x = vec![0.0; d];
        for (j, slot) in row.iter_mut().enumerate() {
            for a in 0..d {
                x[a] = grid.coord(idx[i][a] - idx[j][a]);
            }
            *slot = kernel.rho(&x);
        }
    });
    out
}
