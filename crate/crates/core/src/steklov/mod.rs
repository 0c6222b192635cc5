//! Gradient representation in the Steklov-Poincaré metric.
//!
//! The metric is the elasticity form `a(U, V)` with fixed Lamé parameters and
//! sliding conditions on every face of the box. Solving `a(U, V) = b(V)` for a
//! shape derivative load `b` gives the gradient `U`, which is also the mesh
//! update direction.

use crate::error::Result;
use crate::fem::{
    elasticity_stiffness, BoundaryCondition, BoundaryConditionSet, DofMap, MaterialCoefficients,
    SparseOperator,
};
use crate::mesh::SimplicialMeshHierarchy;
use crate::multigrid::{MgSolver, SolverOptions};
use crate::shape_calculus::ShapeDerivativeLoad;

/// Lamé parameters of the metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParameters {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for MetricParameters {
    fn default() -> Self {
        MetricParameters {
            lambda: 0.01,
            mu: 0.1,
        }
    }
}

/// Solution `U` of the deformation equation.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    /// Nodal displacement, layout `v * dim + c`; zero in constrained components.
    pub values: Vec<f64>,
    /// Right-hand side with constrained components removed.
    pub load: Vec<f64>,
    /// `a(U, U)`.
    pub energy: f64,
}

impl DeformationField {
    pub fn zero(len: usize) -> Self {
        DeformationField {
            values: vec![0.0; len],
            load: vec![0.0; len],
            energy: 0.0,
        }
    }

    /// Largest vertex displacement.
    pub fn max_displacement(&self, dim: usize) -> f64 {
        self.values
            .chunks(dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// `sqrt(a(U, U))`.
pub fn gs_norm(field: &DeformationField) -> f64 {
    field.energy.max(0.0).sqrt()
}

/// Deformation equation of one geometry.
#[derive(Debug, Clone)]
pub struct DeformationSolver {
    stiffness: SparseOperator,
    dofs: DofMap,
    solver: MgSolver,
}

impl DeformationSolver {
    pub fn new(
        mesh: &SimplicialMeshHierarchy,
        metric: MetricParameters,
        options: &SolverOptions,
    ) -> Result<Self> {
        let dim = mesh.dim();
        let coeffs = MaterialCoefficients::uniform_lame(metric.lambda, metric.mu);
        coeffs.validate(dim)?;
        let stiffness = elasticity_stiffness(mesh.finest(), &coeffs);
        let bcs = BoundaryConditionSet::uniform(dim, BoundaryCondition::SlidingNormal);
        let (solver, dofs) = MgSolver::for_hierarchy(mesh, &stiffness, &bcs, dim, options)?;
        Ok(DeformationSolver {
            stiffness,
            dofs,
            solver,
        })
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    /// Solve `a(U, V) = sum of the loads (V)` on the free dofs.
    pub fn solve(&self, loads: &[&ShapeDerivativeLoad]) -> Result<DeformationField> {
        let n = self.dofs.num_dofs();
        let mut load = vec![0.0; n];
        for l in loads {
            for (a, b) in load.iter_mut().zip(&l.values) {
                *a += b;
            }
        }
        self.dofs.zero_constrained(&mut load);
        if load.iter().all(|&v| v == 0.0) {
            return Ok(DeformationField::zero(n));
        }
        let res = self.solver.solve(&self.dofs.restrict(&load))?;
        let values = self.dofs.expand_homogeneous(&res.solution);
        let energy = self.stiffness.bilinear(&values, &values);
        Ok(DeformationField {
            values,
            load,
            energy,
        })
    }

    /// `a(U1, U2)`.
    pub fn gs_inner(&self, first: &[f64], second: &[f64]) -> f64 {
        self.stiffness.bilinear(first, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use crate::shape_calculus::{assemble_dj3, assemble_dj4_volume};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh() -> SimplicialMeshHierarchy {
        InclusionMeshSpec::unit_box(
            InclusionShape::Polygon {
                radius: 0.25,
                sides: 10,
                phase: 0.0,
            },
            20,
        )
        .hierarchy(3)
        .unwrap()
    }

    fn opts() -> SolverOptions {
        SolverOptions {
            rtol: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn zero_load_gives_zero_field() {
        let m = mesh();
        let s = DeformationSolver::new(&m, MetricParameters::default(), &opts()).unwrap();
        let z = crate::shape_calculus::ShapeDerivativeLoad::zero(2, m.finest().num_vertices());
        let u = s.solve(&[&z]).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
        assert_eq!(gs_norm(&u), 0.0);
    }

    #[test]
    fn linear_and_energy_identity() {
        let m = mesh();
        let s = DeformationSolver::new(&m, MetricParameters::default(), &opts()).unwrap();
        let b = assemble_dj3(m.finest(), 1.0);
        let u1 = s.solve(&[&b]).unwrap();
        let u2 = s.solve(&[&b, &b]).unwrap();
        let diff: f64 = u1
            .values
            .iter()
            .zip(&u2.values)
            .map(|(a, c)| (2.0 * a - c).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-9 * u2.max_displacement(2));
        let work = b.apply(&u1.values);
        assert!((u1.energy - work).abs() <= 1e-8 * work);
        assert!((gs_norm(&u2) - 2.0 * gs_norm(&u1)).abs() <= 1e-8 * gs_norm(&u2));
    }

    #[test]
    fn constrained_components_vanish() {
        let m = mesh();
        let s = DeformationSolver::new(&m, MetricParameters::default(), &opts()).unwrap();
        let u = s.solve(&[&assemble_dj4_volume(m.finest(), 1.0)]).unwrap();
        for d in s.dofs().constrained() {
            assert_eq!(u.values[d], 0.0);
        }
    }

    #[test]
    fn inner_product_properties() {
        let m = mesh();
        let s = DeformationSolver::new(&m, MetricParameters::default(), &opts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = s.dofs().num_dofs();
        for _ in 0..5 {
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.dofs().zero_constrained(&mut a);
            s.dofs().zero_constrained(&mut b);
            let ab = s.gs_inner(&a, &b);
            assert!((ab - s.gs_inner(&b, &a)).abs() <= 1e-12 * ab.abs().max(1.0));
            assert!(ab.abs() <= (s.gs_inner(&a, &a) * s.gs_inner(&b, &b)).sqrt());
        }
    }

    #[test]
    fn solution_map_is_self_adjoint() {
        let m = mesh();
        let s = DeformationSolver::new(&m, MetricParameters::default(), &opts()).unwrap();
        let b1 = assemble_dj3(m.finest(), 1.0);
        let b2 = assemble_dj4_volume(m.finest(), 1.0);
        let u1 = s.solve(&[&b1]).unwrap();
        let u2 = s.solve(&[&b2]).unwrap();
        let lhs = s.gs_inner(&u1.values, &u2.values);
        assert!((lhs - b1.apply(&u2.values)).abs() <= 1e-10 * lhs.abs());
        assert!((lhs - b2.apply(&u1.values)).abs() <= 1e-10 * lhs.abs());
    }

    #[test]
    fn metric_is_coercive_on_tiny_mesh() {
        let coarse = generate::structured_box_2d([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let h = SimplicialMeshHierarchy::new(coarse, 2, None).unwrap();
        let s = DeformationSolver::new(&h, MetricParameters::default(), &opts()).unwrap();
        let free = s.dofs().free().to_vec();
        let a = s.stiffness().submatrix(&free, &free).to_dense();
        let min = SymmetricEigen::new(a).eigenvalues.min();
        assert!(min > 1e-6, "smallest eigenvalue {min}");
    }
}
