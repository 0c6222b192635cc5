//! State and adjoint solves of the two model problems.
//!
//! Elasticity is stationary with a clamped bottom and a traction on top; its
//! adjoint for the compliance shares the operator, so `w = -nu1 u`. Diffusion
//! is marched with backward Euler and its adjoint is the exact transpose of the
//! discrete march.

mod diffusion;
mod elastic;

pub use diffusion::{
    diffusion_bcs, march_diffusion_adjoint, march_diffusion_state, step_count, DiffusionProblem,
    MeasurementMode, TransientTrajectory,
};
pub use elastic::{
    elastic_bcs, solve_elastic_adjoint, solve_elastic_state, ElasticPair, ElasticProblem,
};
