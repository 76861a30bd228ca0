use thiserror::Error;

/// Broad failure category, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("negative probability {value} at p_xy[{x}][{y}]")]
    NegativeProbability { x: usize, y: usize, value: f64 },

    #[error("joint pmf sums to {sum}, expected 1 within 1e-12")]
    PmfNotNormalized { sum: f64 },

    #[error("row x={x} of the joint pmf has zero mass; every source symbol needs p(x) > 0")]
    ZeroMarginalRow { x: usize },

    #[error("{what}[{row}][{col}] = {index} is out of range for an alphabet of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        row: usize,
        col: usize,
        index: usize,
        size: usize,
    },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid alphabet {name}: {reason}")]
    InvalidAlphabet { name: &'static str, reason: String },

    #[error("invalid distortion entry d[{z}][{zhat}] = {value}; entries must be finite and >= 0")]
    InvalidDistortion { z: usize, zhat: usize, value: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("source alphabet has {size} symbols; subset enumeration is capped at {cap}")]
    AlphabetTooLarge { size: usize, cap: usize },

    #[error("candidate recovery space has {size} tuples; cap is {cap}")]
    RecoverySpaceTooLarge { size: u128, cap: usize },

    #[error("all auxiliary weights vanished for source symbol x={x}")]
    NumericalUnderflow { x: usize },

    #[error(
        "solver did not reach distortion {target} (best achieved {achieved}) within the multiplier cap {lambda_max}"
    )]
    NotConverged {
        target: f64,
        achieved: f64,
        lambda_max: f64,
    },

    #[error("no zero-distortion reconstruction exists for source symbol x={x}")]
    Infeasible { x: usize },

    #[error("pruned channel has no mass left for source symbol x={x}")]
    EmptySupport { x: usize },

    #[error("subset {members:?} is not in the zero-distortion family (no zero ball at y={y})")]
    NotInGammaD { members: Vec<usize>, y: usize },

    #[error("instance too large for brute force: {product} exceeds cap {cap}")]
    InstanceTooLarge { product: usize, cap: usize },

    #[error("channel atom {atom} carries no {needed} annotation")]
    UnannotatedChannel { atom: usize, needed: &'static str },

    #[error("sample {sample}: source symbol x={x} is not a member of atom {atom}")]
    MembershipViolation { sample: usize, x: usize, atom: usize },
}

impl Error {
    /// Stable machine-readable name for the error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NegativeProbability { .. } => "NegativeProbability",
            Error::PmfNotNormalized { .. } => "PMFNotNormalized",
            Error::ZeroMarginalRow { .. } => "ZeroMarginalRow",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidAlphabet { .. } => "InvalidAlphabet",
            Error::InvalidDistortion { .. } => "InvalidDistortion",
            Error::Domain(_) => "DomainError",
            Error::InvalidChannel(_) => "InvalidChannel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::AlphabetTooLarge { .. } => "AlphabetTooLarge",
            Error::RecoverySpaceTooLarge { .. } => "RecoverySpaceTooLarge",
            Error::NumericalUnderflow { .. } => "NumericalUnderflow",
            Error::NotConverged { .. } => "NotConverged",
            Error::Infeasible { .. } => "Infeasible",
            Error::EmptySupport { .. } => "EmptySupport",
            Error::NotInGammaD { .. } => "NotInGammaD",
            Error::InstanceTooLarge { .. } => "InstanceTooLarge",
            Error::UnannotatedChannel { .. } => "UnannotatedChannel",
            Error::MembershipViolation { .. } => "MembershipViolation",
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NumericalUnderflow { .. }
            | Error::NotConverged { .. }
            | Error::Infeasible { .. }
            | Error::EmptySupport { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
