//! Geometric multigrid V-cycle and preconditioned conjugate gradients.
//!
//! Operators live on the free dofs of every level. Coarse operators are
//! Galerkin products `P^T A P` of the prolongation built from the refinement
//! maps; restriction is the transpose of prolongation.

use nalgebra::{Cholesky, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::{BoundaryConditionSet, DofMap, SparseOperator};
use crate::mesh::{RefinementMap, SimplicialMeshHierarchy, VertexOrigin};

/// Anything that maps a residual to a correction.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// `z = r`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling.
#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &SparseOperator) -> Self {
        JacobiPreconditioner {
            inv_diag: a.diagonal().iter().map(|d| 1.0 / d).collect(),
        }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

/// Smoothing sweeps per level; each sweep is forward then backward Gauss-Seidel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmootherSettings {
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for SmootherSettings {
    fn default() -> Self {
        SmootherSettings {
            pre_sweeps: 2,
            post_sweeps: 2,
        }
    }
}

/// Interpolation from the free dofs of a coarse level to the free dofs of the next finer one.
///
/// Fine copies of coarse vertices take weight one, edge midpoints the average
/// of the two endpoints; prescribed coarse dofs carry no correction.
pub fn prolongation(
    map: &RefinementMap,
    coarse: &DofMap,
    fine: &DofMap,
    components: usize,
) -> SparseOperator {
    let mut trip = Vec::new();
    for (v, origin) in map.origins.iter().enumerate() {
        for c in 0..components {
            let Some(row) = fine.free_index(v * components + c) else {
                continue;
            };
            let parents: &[(usize, f64)] = &match *origin {
                VertexOrigin::Coarse(i) => vec![(i, 1.0)],
                VertexOrigin::Midpoint(a, b) => vec![(a, 0.5), (b, 0.5)],
            };
            for &(p, w) in parents {
                if let Some(col) = coarse.free_index(p * components + c) {
                    trip.push((row, col, w));
                }
            }
        }
    }
    SparseOperator::from_triplets((fine.num_free(), coarse.num_free()), trip)
}

fn symmetrize(a: &SparseOperator) -> SparseOperator {
    a.add_scaled(1.0, &a.transpose()).scaled(0.5)
}

/// Level operators, transfer operators and the coarse factorization of a V-cycle.
#[derive(Debug, Clone)]
pub struct MgHierarchy {
    /// Coarse to fine.
    operators: Vec<SparseOperator>,
    /// `prolongations[l]` maps level `l` to level `l + 1`.
    prolongations: Vec<SparseOperator>,
    restrictions: Vec<SparseOperator>,
    diagonals: Vec<Vec<f64>>,
    coarse: Cholesky<f64, Dyn>,
    settings: SmootherSettings,
}

impl MgHierarchy {
    /// Build from the finest operator and the prolongations (coarse to fine).
    pub fn new(
        fine: SparseOperator,
        prolongations: Vec<SparseOperator>,
        settings: SmootherSettings,
    ) -> Result<Self> {
        let mut operators = vec![fine];
        for p in prolongations.iter().rev() {
            let finer = operators.last().unwrap();
            if p.nrows() != finer.nrows() {
                return Err(Error::invalid("prolongation does not match level operator"));
            }
            operators.push(symmetrize(&finer.galerkin(p)));
        }
        operators.reverse();
        let dense = operators[0].to_dense();
        let coarse = Cholesky::new(dense.clone()).ok_or_else(|| {
            let eig = SymmetricEigen::new(dense).eigenvalues;
            let nonpositive = eig.iter().filter(|&&l| l <= 0.0).count();
            Error::SingularCoarse(format!(
                "coarsest operator ({n} dofs) is not positive definite: smallest eigenvalue {:e}, \
                 {nonpositive} non-positive eigenvalues (unconstrained rigid modes?)",
                eig.min(),
                n = eig.len()
            ))
        })?;
        let diagonals = operators.iter().map(|a| a.diagonal()).collect();
        let restrictions = prolongations.iter().map(|p| p.transpose()).collect();
        Ok(MgHierarchy {
            operators,
            prolongations,
            restrictions,
            diagonals,
            coarse,
            settings,
        })
    }

    /// Hierarchy for a problem assembled on the finest mesh level with dof maps on every level.
    pub fn from_refinement(
        fine: SparseOperator,
        maps: &[RefinementMap],
        dofs: &[DofMap],
        components: usize,
        settings: SmootherSettings,
    ) -> Result<Self> {
        if dofs.len() != maps.len() + 1 {
            return Err(Error::invalid("need one dof map per level"));
        }
        let prolongations = maps
            .iter()
            .enumerate()
            .map(|(l, m)| prolongation(m, &dofs[l], &dofs[l + 1], components))
            .collect();
        Self::new(fine, prolongations, settings)
    }

    pub fn num_levels(&self) -> usize {
        self.operators.len()
    }

    pub fn operator(&self, l: usize) -> &SparseOperator {
        &self.operators[l]
    }

    pub fn finest_operator(&self) -> &SparseOperator {
        self.operators.last().unwrap()
    }

    pub fn prolongation(&self, l: usize) -> &SparseOperator {
        &self.prolongations[l]
    }

    pub fn settings(&self) -> SmootherSettings {
        self.settings
    }

    fn gauss_seidel(&self, l: usize, b: &[f64], x: &mut [f64], forward: bool) {
        let a = &self.operators[l];
        let diag = &self.diagonals[l];
        let n = x.len();
        let mut relax = |i: usize| {
            let (cols, vals) = a.row(i);
            let mut s = b[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j != i {
                    s -= v * x[j];
                }
            }
            x[i] = s / diag[i];
        };
        if forward {
            (0..n).for_each(&mut relax);
        } else {
            (0..n).rev().for_each(&mut relax);
        }
    }

    fn smooth(&self, l: usize, b: &[f64], x: &mut [f64], sweeps: usize) {
        for _ in 0..sweeps {
            self.gauss_seidel(l, b, x, true);
            self.gauss_seidel(l, b, x, false);
        }
    }

    fn cycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        if l == 0 {
            return self
                .coarse
                .solve(&DVector::from_column_slice(b))
                .as_slice()
                .to_vec();
        }
        let mut x = vec![0.0; b.len()];
        self.smooth(l, b, &mut x, self.settings.pre_sweeps);
        let ax = self.operators[l].matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rc = self.restrictions[l - 1].matvec(&r);
        let ec = self.cycle(l - 1, &rc);
        for (xi, ci) in x.iter_mut().zip(self.prolongations[l - 1].matvec(&ec)) {
            *xi += ci;
        }
        self.smooth(l, b, &mut x, self.settings.post_sweeps);
        x
    }

    /// One V-cycle with zero initial guess on the finest level.
    pub fn v_cycle(&self, rhs: &[f64]) -> Vec<f64> {
        self.cycle(self.operators.len() - 1, rhs)
    }
}

impl Preconditioner for MgHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.v_cycle(r));
    }
}

/// Outcome of a PCG run.
#[derive(Debug, Clone, PartialEq)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final relative preconditioned residual `sqrt(r·z / r0·z0)`.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(
    a: &SparseOperator,
    b: &[f64],
    precond: &dyn Preconditioner,
    rtol: f64,
    max_iter: usize,
) -> Result<PcgResult> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::invalid("operator and right-hand side sizes differ"));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut rz = dot(&r, &z);
    if rz < 0.0 {
        return Err(Error::Breakdown {
            iteration: 0,
            reason: "preconditioner is not positive".into(),
        });
    }
    if rz == 0.0 {
        return Ok(PcgResult {
            solution: x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let rz0 = rz;
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Breakdown {
                iteration: it,
                reason: format!("non-positive curvature p·Ap = {pap:e}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let rel = (rz_new.max(0.0) / rz0).sqrt();
        if rel <= rtol {
            return Ok(PcgResult {
                solution: x,
                iterations: it,
                residual: rel,
                converged: true,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it == max_iter {
            return Ok(PcgResult {
                solution: x,
                iterations: it,
                residual: rel,
                converged: false,
            });
        }
    }
    Ok(PcgResult {
        solution: x,
        iterations: 0,
        residual: 1.0,
        converged: false,
    })
}

/// Tolerances and smoothing of a multigrid-preconditioned solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub max_iter: usize,
    pub smoother: SmootherSettings,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            rtol: 1e-10,
            max_iter: 200,
            smoother: SmootherSettings::default(),
        }
    }
}

/// PCG with a multigrid preconditioner and fixed tolerances.
#[derive(Debug, Clone)]
pub struct MgSolver {
    pub hierarchy: MgHierarchy,
    pub rtol: f64,
    pub max_iter: usize,
}

impl MgSolver {
    /// Restrict a finest-level operator to its free dofs and build the V-cycle
    /// from the mesh hierarchy. Returns the solver and the finest dof map.
    pub fn for_hierarchy(
        mesh: &SimplicialMeshHierarchy,
        full_operator: &SparseOperator,
        bcs: &BoundaryConditionSet,
        components: usize,
        options: &SolverOptions,
    ) -> Result<(Self, DofMap)> {
        let dofs: Vec<DofMap> = mesh
            .levels()
            .iter()
            .map(|l| DofMap::build(l, bcs, components))
            .collect::<Result<_>>()?;
        let fine = dofs.last().unwrap().clone();
        let a = full_operator.submatrix(fine.free(), fine.free());
        let hierarchy =
            MgHierarchy::from_refinement(a, mesh.maps(), &dofs, components, options.smoother)?;
        Ok((
            MgSolver {
                hierarchy,
                rtol: options.rtol,
                max_iter: options.max_iter,
            },
            fine,
        ))
    }

    /// Solve with the finest operator; failure to converge is an error.
    pub fn solve(&self, b: &[f64]) -> Result<PcgResult> {
        let res = pcg(
            self.hierarchy.finest_operator(),
            b,
            &self.hierarchy,
            self.rtol,
            self.max_iter,
        )?;
        if !res.converged {
            return Err(Error::NotConverged {
                iterations: res.iterations,
                residual: res.residual,
            });
        }
        Ok(res)
    }
}
