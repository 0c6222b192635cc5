use thiserror::Error;

use crate::mesh::BoundaryLabel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),

    #[error("simplex {index} has non-positive signed volume {volume:e}")]
    InvertedSimplex { index: usize, volume: f64 },

    #[error("interface is not closed: {0}")]
    OpenInterface(String),

    #[error("no boundary condition given for boundary label `{0}`")]
    MissingBoundaryCondition(BoundaryLabel),

    #[error("boundary facet {facet} labelled `{label}` is not aligned with a coordinate plane")]
    NotAxisAligned { facet: usize, label: BoundaryLabel },

    #[error("dof {dof} receives conflicting prescribed values {first} and {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("coarse-level factorization failed: {0}")]
    SingularCoarse(String),

    #[error("conjugate gradient breakdown at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String },

    #[error(
        "solver did not converge within {iterations} iterations (relative residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("time step {step}: {source}")]
    TimeStep { step: usize, source: Box<Error> },

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("mesh-validity failure: {0}")]
    MeshValidity(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
