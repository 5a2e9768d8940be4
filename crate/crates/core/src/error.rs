use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid comb size {0}: must be one of 2, 4, 6, 12")]
    InvalidCombSize(usize),

    #[error("invalid PRS config: {0}")]
    InvalidPrsConfig(String),

    #[error("allocation out of bounds: {0}")]
    AllocationOutOfBounds(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("reflection center is co-located with the base station")]
    ColocatedTarget,

    #[error("transmit symbol at (n={n}, m={m}) is zero inside the PRS allocation")]
    ZeroPilot { n: usize, m: usize },

    #[error("probability {0} outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("range-Doppler map has no positive entry")]
    EmptyMap,

    #[error("bin ({range}, {doppler}) out of bounds for {n}x{m} map")]
    BinOutOfBounds {
        range: usize,
        doppler: usize,
        n: usize,
        m: usize,
    },

    #[error("CFAR window {window:?} does not fit a {n}x{m} map")]
    DegenerateWindow {
        window: (usize, usize),
        n: usize,
        m: usize,
    },

    #[error("non-finite value in CAMP iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: &'static str },

    #[error("malformed {format} input: {reason}")]
    Parse { format: &'static str, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
