//! Finite-element shape optimization on nested simplicial mesh hierarchies.
//!
//! The crate covers the whole loop of a multigrid shape optimization:
//!
//! * [`mesh`]: hierarchical simplicial meshes with subdomain and interface
//!   labels, uniform refinement, deformation of all levels and discrete mean
//!   curvature of the interface.
//! * [`fem`]: P1 assembly of elasticity and diffusion operators with
//!   piecewise constant (jumping) coefficients and strongly imposed constraints.
//! * [`multigrid`]: geometric V-cycle preconditioner and PCG.
//! * [`physics`]: stationary elasticity state/adjoint and backward Euler
//!   diffusion state/adjoint marches.
//! * [`shape_calculus`]: objective evaluation, volume and surface forms of the
//!   shape derivatives and the finite-difference oracle used to validate them.
//! * [`steklov`]: the deformation equation which yields the gradient
//!   representation and the mesh update at once.
//! * [`optimizer`]: gradient descent and limited-memory BFGS in the
//!   Steklov-Poincaré metric.
//! * [`measurements`]: Gaussian RBF representation of measurement data.
//! * [`scenario`]: configuration files and builders for the canned scenarios.

pub mod error;
pub mod fem;
pub mod measurements;
pub mod mesh;
pub mod multigrid;
pub mod optimizer;
pub mod physics;
pub mod scenario;
pub mod shape_calculus;
pub mod steklov;

pub use error::{Error, Result};
