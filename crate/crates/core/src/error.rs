use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension: m = {0} (supported 2..=6)")]
    UnsupportedDimension(usize),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("off-sphere value at node {node}: |f| = {norm}")]
    OffSphere { node: usize, norm: f64 },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("derivative order {0} outside 1..=4")]
    InvalidOrder(usize),

    #[error("evaluation on the singular locus at {0:?}")]
    SingularLocus(Vec<f64>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite energy at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("candidate set saturates the sample ({candidates} of {samples}); field is not in the isolated-singularity regime")]
    Saturated { candidates: usize, samples: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
