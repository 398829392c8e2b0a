//! Command-line flags. Every field is optional so that a JSON config file
//! can fill whatever the command line leaves out.

use std::path::PathBuf;

use circembed::covariance::Smoothness;
use circembed::embedding::SearchSchedule;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "circembed",
    version,
    about = "Circulant-embedding sampling of stationary Gaussian random fields"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GlobalArgs {
    /// JSON file whose keys mirror the long flag names; flags win.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest extension whose circulant matrix is positive (semi)definite.
    MinEll(MinEllArgs),
    /// Minimal extension lengths over a grid of parameters.
    Sweep(SweepArgs),
    /// Log-log decay of the sorted eigenvalues of the minimal extension.
    EigDecay(EigDecayArgs),
    /// Draw field samples to CSV or binary files.
    Sample(SampleArgs),
    /// Compare the mean and covariance of stored samples with the kernel.
    Validate(ValidateArgs),
    /// Eigenvalues of an extension as CSV plus a JSON sidecar.
    Spectrum(SpectrumArgs),
    /// Diagnostics from the analysis of the method.
    #[command(subcommand)]
    Theory(TheoryCommand),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MinEll(_) => "min-ell",
            Command::Sweep(_) => "sweep",
            Command::EigDecay(_) => "eig-decay",
            Command::Sample(_) => "sample",
            Command::Validate(_) => "validate",
            Command::Spectrum(_) => "spectrum",
            Command::Theory(t) => match t {
                TheoryCommand::PdCriterion(_) => "theory-pd-criterion",
                TheoryCommand::Bounds(_) => "theory-bounds",
                TheoryCommand::ContinuousEigs(_) => "theory-continuous-eigs",
                TheoryCommand::SamplingTheorem(_) => "theory-sampling-theorem",
                TheoryCommand::QmcSum(_) => "theory-qmc-sum",
            },
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// Sufficient positivity criterion for a Matérn extension.
    PdCriterion(PdCriterionArgs),
    /// Extension lengths guaranteed by the growth bounds.
    Bounds(BoundsArgs),
    /// Eigenvalues of the periodized covariance operator.
    ContinuousEigs(ContinuousEigsArgs),
    /// Lattice sum against aliased spectral sum.
    SamplingTheorem(SamplingTheoremArgs),
    /// `Σ (Λ_k/s)^{p/2}` for the minimal extension.
    QmcSum(QmcSumArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct KernelArgs {
    /// Spatial dimension, 1 to 3.
    #[arg(long)]
    pub d: Option<usize>,
    /// Smoothness, a number or `inf` for the Gaussian kernel.
    #[arg(long)]
    pub nu: Option<Smoothness>,
    /// Correlation length.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Variance (default 1).
    #[arg(long)]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    Increment,
    DoubleThenBisect,
}

impl From<ScheduleArg> for SearchSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Increment => SearchSchedule::Increment,
            ScheduleArg::DoubleThenBisect => SearchSchedule::DoubleThenBisect,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SearchArgs {
    /// Grid intervals per axis on the unit cube.
    #[arg(long)]
    pub m0: Option<usize>,
    /// Eigenvalues in [-tol, 0) count as zero (default 0, or 1e-13 for nu = inf).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest m to try.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Order in which m is tried (default increment).
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Raise tol to the estimated FFT rounding floor when that is larger.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub roundoff_guard: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MinEllArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Smoothness values, comma separated; `inf` allowed.
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<Smoothness>>,
    /// Correlation lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Grid sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub m0: Option<Vec<usize>>,
    /// Pair each lambda with m0 = product / lambda instead of taking --m0.
    #[arg(long)]
    pub lambda_m0_product: Option<f64>,
    /// Variance (default 1).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Eigenvalues in [-tol, 0) count as zero (default 0, or 1e-13 for nu = inf).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest m to try for every point.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Order in which m is tried (default increment).
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Raise tol to the estimated FFT rounding floor when that is larger.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub roundoff_guard: Option<bool>,
    /// Also fit the growth-bound constants to the sweep.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub calibrate: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EigDecayArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// First sorted index of the fit (default ⌈s^0.1⌉).
    #[arg(long)]
    pub fit_lo: Option<usize>,
    /// Last sorted index of the fit (default ⌊s^0.6⌋).
    #[arg(long)]
    pub fit_hi: Option<usize>,
    /// Allowed relative deviation of the slope (default 0.15).
    #[arg(long)]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// Number of samples (default 1).
    #[arg(long)]
    pub n: Option<usize>,
    /// Random seed (default 0). Sample i uses stream i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `const:<v>` or `file:<path>` with a field CSV (default const:0).
    #[arg(long)]
    pub mean: Option<String>,
    /// Write exp of the Gaussian field.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lognormal: Option<bool>,
    /// One CSV per sample or a single binary file (default csv).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    /// A binary sample file, a CSV file, or a directory of CSV files.
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Mean the samples were drawn with, as for `sample` (default const:0).
    #[arg(long)]
    pub mean: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SpectrumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// Use this m instead of searching for the minimal one.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PdCriterionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// Extension length to test; without it (and --m) the smallest m that
    /// satisfies the criterion is reported.
    #[arg(long)]
    pub ell: Option<f64>,
    /// Extension size; tests ell = m / m0.
    #[arg(long)]
    pub m: Option<usize>,
    /// Also compute the spectrum and report its minimum.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub verify: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoundsArgs {
    /// Smoothness, a number or `inf` for the Gaussian bound.
    #[arg(long)]
    pub nu: Option<Smoothness>,
    /// Correlation length.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Grid intervals per axis; h0 = 1/m0.
    #[arg(long)]
    pub m0: Option<usize>,
    /// Offset constant of the Matérn bound.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Growth constant of the Matérn bound, at least 2√2.
    #[arg(long)]
    pub c2: Option<f64>,
    /// Constant of the Gaussian bound.
    #[arg(long)]
    pub b: Option<f64>,
    /// calibration.json written by `sweep --calibrate`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ContinuousEigsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    /// Half-width of the periodization domain [-ell, ell]^d.
    #[arg(long)]
    pub ell: Option<f64>,
    /// Multi-index, comma separated; repeat for several (default 0).
    #[arg(long)]
    pub k: Option<Vec<String>>,
    /// Starting rectangle-rule points per axis (default 64).
    #[arg(long)]
    pub quad_n: Option<usize>,
    /// Grid sizes whose matrix eigenvalues are compared, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub compare_m0: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SamplingTheoremArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    /// Lattice spacing.
    #[arg(long)]
    pub h: Option<f64>,
    /// Frequency, comma separated with d components.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Option<Vec<f64>>,
    /// Lattice sum over ‖k‖∞ ≤ k_trunc (default 60).
    #[arg(long)]
    pub k_trunc: Option<usize>,
    /// Aliased sum over ‖r‖∞ ≤ r_trunc (default 4).
    #[arg(long)]
    pub r_trunc: Option<usize>,
    /// Accuracy the tail bounds should certify (default 1e-12).
    #[arg(long)]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct QmcSumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    /// Exponent in (0, 1).
    #[arg(long)]
    pub p: Option<f64>,
}

/// Overlays the flags that were given on top of `config`.
pub fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    config: &Map<String, Value>,
) -> Result<T, CliError> {
    let Value::Object(given) =
        serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))?
    else {
        unreachable!("argument structs serialize to objects");
    };
    let mut merged = config.clone();
    for (k, v) in given {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config: {e}")))
}
