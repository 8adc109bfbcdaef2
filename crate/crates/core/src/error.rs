use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structural problem in a skeletal model; the message names the entity.
    #[error("invalid model: {0}")]
    Model(String),

    #[error("non-unit axis for {context}: norm {norm}")]
    NonUnitAxis { context: String, norm: f64 },

    #[error("bound violation: dof `{dof}` = {value_deg}° outside [{min_deg}°, {max_deg}°]")]
    BoundViolation {
        dof: String,
        value_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },

    #[error("improper rotation: determinant {det}")]
    ImproperRotation { det: f64 },

    #[error("pelvis rotation is not orthonormal: max |RR^T - I| = {deviation}")]
    NonOrthonormal { deviation: f64 },

    #[error("nonpositive scale for body `{body}`: {value}")]
    NonPositiveScale { body: String, value: f64 },

    #[error("state shape mismatch: {0}")]
    StateShape(String),

    #[error("missing marker `{0}`")]
    MissingMarker(String),

    #[error("zero model distance for scaling pair {marker_a}-{marker_b} on `{body}`")]
    DegeneratePair {
        body: String,
        marker_a: String,
        marker_b: String,
    },

    #[error("insufficient markers: {0}")]
    InsufficientMarkers(String),

    #[error("solver diverged: damping {damping:e} exceeded ceiling")]
    Divergence { damping: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero variance: correlation undefined")]
    ZeroVariance,

    #[error("at index {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(index: usize, source: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(source),
        }
    }

    /// Process exit code: 1 for IO and parse failures, 2 for validation and domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } => 1,
            Error::AtIndex { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
