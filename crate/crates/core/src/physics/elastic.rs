//! Stationary linear elasticity: clamped bottom, traction on top, free sides.

use crate::error::Result;
use crate::fem::{
    box_labels, elasticity_stiffness, BoundaryCondition, BoundaryConditionSet, DofMap,
    MaterialCoefficients, SparseOperator,
};
use crate::mesh::{BoundaryLabel, MeshLevel, SimplicialMeshHierarchy};
use crate::multigrid::{MgSolver, SolverOptions};

/// Boundary conditions with the given top traction.
pub fn elastic_bcs(dim: usize, traction: [f64; 3]) -> BoundaryConditionSet {
    let mut bcs = BoundaryConditionSet::new();
    for label in box_labels(dim) {
        let bc = match label {
            BoundaryLabel::Bottom => BoundaryCondition::Dirichlet([0.0; 3]),
            BoundaryLabel::Top => BoundaryCondition::Neumann(traction),
            _ => BoundaryCondition::Neumann([0.0; 3]),
        };
        bcs = bcs.with(label, bc);
    }
    bcs
}

/// State displacement and adjoint displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticPair {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

/// Elasticity operator of one geometry, shared by state and adjoint solves.
#[derive(Debug, Clone)]
pub struct ElasticProblem {
    stiffness: SparseOperator,
    dofs: DofMap,
    solver: MgSolver,
    level: MeshLevel,
}

impl ElasticProblem {
    pub fn new(
        mesh: &SimplicialMeshHierarchy,
        coeffs: &MaterialCoefficients,
        options: &SolverOptions,
    ) -> Result<Self> {
        let dim = mesh.dim();
        coeffs.validate(dim)?;
        let bcs = elastic_bcs(dim, [0.0; 3]);
        let stiffness = elasticity_stiffness(mesh.finest(), coeffs);
        let (solver, dofs) = MgSolver::for_hierarchy(mesh, &stiffness, &bcs, dim, options)?;
        Ok(ElasticProblem {
            stiffness,
            dofs,
            solver,
            level: mesh.finest().clone(),
        })
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Consistent nodal load of a top traction.
    pub fn traction_load(&self, traction: [f64; 3]) -> Result<Vec<f64>> {
        let dim = self.level.dim();
        elastic_bcs(dim, traction).neumann_load(&self.level, dim)
    }

    /// Displacement for a given nodal load (bottom clamped).
    pub fn solve_load(&self, load: &[f64]) -> Result<Vec<f64>> {
        let rhs = self.dofs.restrict(load);
        let res = self.solver.solve(&rhs)?;
        Ok(self.dofs.expand(&res.solution))
    }

    pub fn state(&self, traction: [f64; 3]) -> Result<Vec<f64>> {
        self.solve_load(&self.traction_load(traction)?)
    }

    /// Adjoint of the compliance `nu1 ∫ σ(u):ε(u)`: same operator, traction `-nu1 f`.
    pub fn adjoint(&self, traction: [f64; 3], nu1: f64) -> Result<Vec<f64>> {
        self.state(traction.map(|t| -nu1 * t))
    }

    pub fn pair(&self, traction: [f64; 3], nu1: f64) -> Result<ElasticPair> {
        Ok(ElasticPair {
            u: self.state(traction)?,
            w: self.adjoint(traction, nu1)?,
        })
    }
}

/// State displacement for top traction `traction`.
pub fn solve_elastic_state(
    mesh: &SimplicialMeshHierarchy,
    coeffs: &MaterialCoefficients,
    traction: [f64; 3],
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    ElasticProblem::new(mesh, coeffs, options)?.state(traction)
}

/// Adjoint displacement for weight `nu1`.
pub fn solve_elastic_adjoint(
    mesh: &SimplicialMeshHierarchy,
    coeffs: &MaterialCoefficients,
    traction: [f64; 3],
    nu1: f64,
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    ElasticProblem::new(mesh, coeffs, options)?.adjoint(traction, nu1)
}
