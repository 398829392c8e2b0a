use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The kernel does not provide a capability an operation needs
    /// (for example a spectral density).
    #[error("kernel capability missing: {0}")]
    CapabilityMissing(&'static str),

    #[error(
        "not positive definite within m_max = {m_max} (last minimum eigenvalue {last_min_eig:e})"
    )]
    NotPositiveDefinite { m_max: usize, last_min_eig: f64 },

    /// The DFT of the first column came back with a non-negligible imaginary
    /// part, which means the column was not even-symmetric.
    #[error("spectrum has imaginary residue {residue:e} (max |value| {scale:e})")]
    ImaginaryResidue { residue: f64, scale: f64 },

    #[error("quadrature did not converge: estimated error {error:e} exceeds tolerance {tol:e}")]
    Quadrature { error: f64, tol: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("infeasible calibration: {0}")]
    Infeasible(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// Failures of the numerics rather than of the inputs or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ImaginaryResidue { .. }
                | Error::Quadrature { .. }
                | Error::DegenerateFit(_)
                | Error::Infeasible(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_) | Error::Format(_))
    }
}
