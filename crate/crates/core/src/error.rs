use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} = {value} outside validity range [{min}, {max}] of {material}")]
    OutOfRange {
        material: String,
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("signal and idler free spectral ranges coincide; no cluster structure")]
    DegenerateFsrs,
    #[error("signal and idler group indices coincide")]
    DegenerateBirefringence,
    #[error("tuning crystal does not compensate the SPDC crystal birefringence")]
    NotCompensating,
    #[error("round-trip power factor {0} gives no finite finesse")]
    LossyCavity(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("time tags are not sorted (first violation at record {0})")]
    UnsortedInput(usize),
    #[error("channel {0} has no tags")]
    EmptyChannel(u8),
    #[error("channel {0} is not declared in the stream")]
    UnknownChannel(u8),
    #[error("accidental floor exceeds every histogram bin")]
    NegativeBaseline,
    #[error("far-delay baseline is not positive")]
    NonPositiveBaseline,
    #[error("fit did not converge: {0}")]
    FitDiverged(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{0} is outside the domain of the estimator")]
    OutOfDomain(f64),
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
