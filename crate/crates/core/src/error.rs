use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("base point not in set (distance {distance:e})")]
    BasePointNotInSet { distance: f64 },

    #[error("non-finite value at {location:?}: {what}")]
    NonFinite { what: String, location: Vec<f64> },

    #[error("field evaluation failed at {location:?}: {message}")]
    FieldEvaluation { message: String, location: Vec<f64> },

    #[error("expression error in `{source_text}`: {message}")]
    Expression { source_text: String, message: String },

    #[error("unknown builtin system `{0}`")]
    UnknownSystem(String),

    #[error("incompatible selector: {0}")]
    IncompatibleSelector(String),

    #[error("integration failed after t = {t}: non-finite state (last valid {last_valid:?})")]
    Integration { t: f64, last_valid: Vec<f64> },

    #[error("rescale through zero set at t = {t}")]
    RescaleThroughZero { t: f64 },

    #[error("trajectory left the Lipschitz box at {location:?}; enlarge box")]
    EnlargeBox { location: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("set intersects zero locus at {location:?} (h = {value:e})")]
    ZeroLocus { location: Vec<f64>, value: f64 },

    #[error("subdivision cap exceeded on unit interval k = {k}")]
    SubdivisionCap { k: usize },

    #[error("sandwich violated at t = {t}, x = {x:?}: h = {h:e}, g = {g:e}")]
    Sandwich { t: f64, x: Vec<f64>, h: f64, g: f64 },

    #[error("not nonincreasing in t at t = {t}, x = {x:?} (increase {increase:e})")]
    NotMonotone { t: f64, x: Vec<f64>, increase: f64 },

    #[error("uncovered shells: {0:?}")]
    UncoveredShells(Vec<i32>),

    #[error("evaluation outside horizon: t = {t} > {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("cache format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn non_finite(what: impl Into<String>, x: &crate::StateVector) -> Self {
        Error::NonFinite {
            what: what.into(),
            location: x.iter().copied().collect(),
        }
    }
}
