//! Exact sampling from a nonnegative circulant spectrum.
//!
//! With `Λ` the eigenvalues and `F` the unitary DFT, the extended field is
//! `(Re F + Im F) Λ^{1/2} y` for standard normal `y`. One complex transform
//! per sample suffices. The field on the grid is the restriction to
//! `{0..m0}^d`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::KernelInfo;
use crate::embedding::{grid_positions, Embedding, GridSpec, Spectrum};
use crate::error::{Error, Result};
use crate::fft::{Direction, NdFft};
use crate::specialfn::inv_normal_cdf;

/// Normal input vector of length `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalInput {
    y: Vec<f64>,
    origin: Option<(u64, u64)>,
}

impl NormalInput {
    pub fn new(y: Vec<f64>) -> Self {
        NormalInput { y, origin: None }
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `(seed, stream)` when drawn by [`draw_normal`].
    pub fn origin(&self) -> Option<(u64, u64)> {
        self.origin
    }
}

/// Mean field added to every sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Mean {
    Constant(f64),
    /// One value per grid point, lexicographic.
    Field(Vec<f64>),
}

impl Mean {
    fn at(&self, p: usize) -> f64 {
        match self {
            Mean::Constant(c) => *c,
            Mean::Field(v) => v[p],
        }
    }

    fn check(&self, grid: &GridSpec) -> Result<()> {
        match self {
            Mean::Field(v) if v.len() != grid.points() => Err(Error::InvalidParameter(format!(
                "mean field has {} values, grid has {}",
                v.len(),
                grid.points()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SampleSource {
    Seed { seed: u64, stream: u64 },
    Input,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub source: SampleSource,
    pub kernel: Option<KernelInfo>,
    pub d: usize,
    pub m0: usize,
    pub m: usize,
    pub lognormal: bool,
}

/// Field values at `x_k = h0·k`, `k ∈ {0..m0}^d`, lexicographic.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub meta: SampleMeta,
}

/// `Σ_j u_j (cos + sin)(2π j·k/n) / √s`: the real symmetric orthogonal
/// transform `Re F + Im F`. It is its own inverse.
pub fn hartley(u: &[f64], n: usize, d: usize) -> Vec<f64> {
    let fft = NdFft::new(n, d, Direction::Inverse);
    hartley_with(&fft, u)
}

fn hartley_with(fft: &NdFft, u: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (u.len() as f64).sqrt();
    let mut data: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut data);
    data.into_iter().map(|c| (c.re + c.im) * norm).collect()
}

/// A spectrum prepared for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler {
    sqrt_values: Vec<f64>,
    fft: NdFft,
    positions: Vec<usize>,
    embedding: Embedding,
    kernel: Option<KernelInfo>,
}

impl Sampler {
    /// Fails if any eigenvalue is negative; clamp first.
    pub fn new(spectrum: &Spectrum) -> Result<Self> {
        if let Some((k, v)) = spectrum
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0))
        {
            return Err(Error::ContractViolation(format!(
                "eigenvalue {k} is {v:e}; sampling needs a nonnegative spectrum"
            )));
        }
        let embedding = spectrum.embedding();
        Ok(Sampler {
            sqrt_values: spectrum.values().iter().map(|v| v.sqrt()).collect(),
            fft: NdFft::new(embedding.n(), embedding.grid().d(), Direction::Inverse),
            positions: grid_positions(&embedding),
            embedding,
            kernel: spectrum.kernel().cloned(),
        })
    }

    pub fn embedding(&self) -> Embedding {
        self.embedding
    }

    pub fn s(&self) -> usize {
        self.sqrt_values.len()
    }

    /// The extended field `(Re F + Im F) Λ^{1/2} y` on all of `Z^d_{2m}`.
    pub fn extended(&self, y: &NormalInput) -> Result<Vec<f64>> {
        if y.len() != self.s() {
            return Err(Error::InvalidParameter(format!(
                "normal input has {} values, expected s = {}",
                y.len(),
                self.s()
            )));
        }
        let u: Vec<f64> = self
            .sqrt_values
            .iter()
            .zip(&y.y)
            .map(|(a, b)| a * b)
            .collect();
        Ok(hartley_with(&self.fft, &u))
    }

    pub fn sample(&self, y: &NormalInput, mean: &Mean, lognormal: bool) -> Result<FieldSample> {
        let grid = self.embedding.grid();
        mean.check(&grid)?;
        let v = self.extended(y)?;
        let values = self
            .positions
            .iter()
            .enumerate()
            .map(|(p, &pos)| {
                let z = v[pos] + mean.at(p);
                if lognormal {
                    z.exp()
                } else {
                    z
                }
            })
            .collect();
        let source = match y.origin {
            Some((seed, stream)) => SampleSource::Seed { seed, stream },
            None => SampleSource::Input,
        };
        Ok(FieldSample {
            values,
            meta: SampleMeta {
                source,
                kernel: self.kernel.clone(),
                d: grid.d(),
                m0: grid.m0(),
                m: self.embedding.m(),
                lognormal,
            },
        })
    }
}

/// One field sample driven by `y`.
pub fn sample(
    spectrum: &Spectrum,
    mean: &Mean,
    y: &NormalInput,
    lognormal: bool,
) -> Result<FieldSample> {
    Sampler::new(spectrum)?.sample(y, mean, lognormal)
}

/// `s` standard normal variates from ChaCha20 keyed by `seed` on `stream`.
pub fn draw_normal(s: usize, seed: u64, stream: u64) -> NormalInput {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let y = (0..s).map(|_| rng.sample(StandardNormal)).collect();
    NormalInput {
        y,
        origin: Some((seed, stream)),
    }
}

/// Maps a point of `(0,1)^s` to normal input: `y[ordering[j]] = Φ⁻¹(point[j])`.
pub fn qmc_map(point: &[f64], ordering: &[usize]) -> Result<NormalInput> {
    if point.len() != ordering.len() {
        return Err(Error::InvalidParameter(format!(
            "point has {} coordinates but ordering has {}",
            point.len(),
            ordering.len()
        )));
    }
    let mut seen = vec![false; ordering.len()];
    for &i in ordering {
        if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidParameter(
                "ordering is not a permutation".into(),
            ));
        }
    }
    let mut y = vec![0.0; point.len()];
    for (&p, &i) in point.iter().zip(ordering) {
        y[i] = inv_normal_cdf(p)?;
    }
    Ok(NormalInput::new(y))
}

/// Eigenvalue indices by decreasing value; equal values keep lexicographic
/// index order.
pub fn importance_ordering(spectrum: &Spectrum) -> Vec<usize> {
    let values = spectrum.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// `n` samples; sample `i` uses stream `i` of `seed`.
pub fn batch_sample(
    spectrum: &Spectrum,
    mean: &Mean,
    n: usize,
    seed: u64,
    lognormal: bool,
) -> Result<Vec<FieldSample>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let sampler = Sampler::new(spectrum)?;
    mean.check(&spectrum.embedding().grid())?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(&draw_normal(sampler.s(), seed, i), mean, lognormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::MaternKernel;
    use crate::embedding::{self, compute_spectrum};

    fn tiny_spectrum(values: &[f64], d: usize, m: usize) -> Spectrum {
        // Build a spectrum with prescribed values by transforming back.
        let grid = GridSpec::new(d, m).unwrap();
        let emb = Embedding::new(grid, m).unwrap();
        let s = emb.s() as f64;
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        NdFft::new(emb.n(), d, Direction::Inverse).process(&mut data);
        let column: Vec<f64> = data.iter().map(|c| c.re / s).collect();
        embedding::spectrum(&column, &emb).unwrap()
    }

    #[test]
    fn two_point_by_hand() {
        let sp = tiny_spectrum(&[2.0, 0.0], 1, 1);
        let out = sample(
            &sp,
            &Mean::Constant(0.0),
            &NormalInput::new(vec![1.0, 0.0]),
            false,
        )
        .unwrap();
        assert!((out.values[0] - 1.0).abs() < 1e-15);
        assert!((out.values[1] - 1.0).abs() < 1e-15);
        assert_eq!(out.meta.source, SampleSource::Input);
    }

    #[test]
    fn zero_input_returns_mean() {
        let k = MaternKernel::exponential(1.0, 1.0, 2).unwrap();
        let (emb, sp) =
            embedding::minimal_embedding(&k, GridSpec::new(2, 3).unwrap(), 0.0, 50).unwrap();
        let mean: Vec<f64> = (0..16).map(|i| i as f64 * 0.25 - 1.0).collect();
        let y = NormalInput::new(vec![0.0; emb.s()]);
        let out = sample(&sp, &Mean::Field(mean.clone()), &y, false).unwrap();
        assert_eq!(out.values, mean);
    }

    #[test]
    fn negative_spectrum_rejected() {
        let sp = tiny_spectrum(&[2.0, -0.5], 1, 1);
        assert!(matches!(
            Sampler::new(&sp),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn draw_normal_deterministic() {
        assert_eq!(draw_normal(100, 7, 3), draw_normal(100, 7, 3));
        assert_ne!(
            draw_normal(100, 7, 3).values(),
            draw_normal(100, 7, 4).values()
        );
    }

    #[test]
    fn qmc_map_examples() {
        let y = qmc_map(&[0.5, 0.5, 0.5], &[0, 1, 2]).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0, 0.0]);
        let y = qmc_map(&[0.975, 0.5], &[0, 1]).unwrap();
        assert!((y.values()[0] - 1.959963984540054).abs() < 1e-13);
        assert_eq!(y.values()[1], 0.0);
        let r = qmc_map(&[0.975, 0.5], &[1, 0]).unwrap();
        assert_eq!(r.values(), &[0.0, y.values()[0]]);
        assert!(qmc_map(&[0.0, 0.5], &[0, 1]).is_err());
        assert!(qmc_map(&[1.0, 0.5], &[0, 1]).is_err());
        assert!(qmc_map(&[0.3, 0.5], &[0, 0]).is_err());
    }

    #[test]
    fn ordering_ties_are_lexicographic() {
        let sp = tiny_spectrum(&[1.0; 4], 1, 2);
        assert_eq!(importance_ordering(&sp), vec![0, 1, 2, 3]);
        let sp = tiny_spectrum(&[1.0, 3.0, 2.0, 3.0], 1, 2);
        assert_eq!(importance_ordering(&sp), vec![1, 3, 2, 0]);
    }

    #[test]
    fn batch_of_one_matches_stream_zero() {
        let k = MaternKernel::exponential(1.0, 0.5, 1).unwrap();
        let emb = Embedding::new(GridSpec::new(1, 8).unwrap(), 8).unwrap();
        let sp = compute_spectrum(&k, &emb).unwrap();
        let batch = batch_sample(&sp, &Mean::Constant(0.3), 1, 11, false).unwrap();
        let one = sample(&sp, &Mean::Constant(0.3), &draw_normal(16, 11, 0), false).unwrap();
        assert_eq!(batch[0], one);
        assert_eq!(
            one.meta.source,
            SampleSource::Seed {
                seed: 11,
                stream: 0
            }
        );
    }

    #[test]
    fn lognormal_is_exp_of_gaussian() {
        let k = MaternKernel::exponential(1.0, 0.5, 1).unwrap();
        let emb = Embedding::new(GridSpec::new(1, 8).unwrap(), 8).unwrap();
        let sp = compute_spectrum(&k, &emb).unwrap();
        let y = draw_normal(16, 5, 2);
        let g = sample(&sp, &Mean::Constant(0.1), &y, false).unwrap();
        let l = sample(&sp, &Mean::Constant(0.1), &y, true).unwrap();
        for (a, b) in g.values.iter().zip(&l.values) {
            assert_eq!(a.exp(), *b);
        }
    }

    #[test]
    fn wrong_lengths_rejected() {
        let sp = tiny_spectrum(&[2.0, 1.0], 1, 1);
        assert!(sample(
            &sp,
            &Mean::Constant(0.0),
            &NormalInput::new(vec![1.0]),
            false
        )
        .is_err());
        assert!(sample(
            &sp,
            &Mean::Field(vec![0.0]),
            &NormalInput::new(vec![1.0, 0.0]),
            false
        )
        .is_err());
    }
}
