use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("Nfft = {nfft} is not a multiple of Ndata = {ndata}")]
    NotDivisible { nfft: usize, ndata: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("channel tap delay of {delay} samples is not covered by a cyclic prefix of {ncp} samples")]
    DelayExceedsCp { delay: usize, ncp: usize },

    #[error("window coefficient {index} is not strictly positive")]
    NonPositiveCoefficient { index: usize },

    #[error("odd SE size Ne = {0} has no centred in-band window for the basic receiver")]
    OddExtension(usize),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
