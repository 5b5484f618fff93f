use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate site index {0}")]
    DuplicateSite(usize),

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("Hilbert-space dimension {dim} exceeds the configured cap {cap}")]
    DimensionOverflow { dim: u128, cap: usize },

    #[error("operator is not Hermitian (max |A - A^dagger| = {0:e})")]
    NonHermitian(f64),

    #[error("operator is not diagonal in the computational basis")]
    NotDiagonal,

    #[error("rotation axis is not a unit vector (|n| = {0})")]
    NonUnitAxis(f64),

    #[error("operator norm {norm} exceeds the declared bound {bound}")]
    NormBound { norm: f64, bound: f64 },

    #[error("expectation has imaginary residue {residue:e} (tolerance {tolerance:e})")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("sample has {got} values but the catalog has {expected} terms")]
    SampleMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample {sample} at N = {n_sites} failed: {source}")]
    SampleFailed {
        n_sites: usize,
        sample: u64,
        #[source]
        source: Box<LabError>,
    },

    #[error("too many failed samples at N = {n_sites}: {failed} of {total}")]
    TooManyFailures {
        n_sites: usize,
        failed: usize,
        total: usize,
    },

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, LabError>;
