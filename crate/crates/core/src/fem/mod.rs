//! P1 finite-element assembly with piecewise constant coefficients.
//!
//! Vector-valued fields use the interleaved layout `vertex * dim + component`.
//! Constraints are imposed strongly: operators are assembled on all dofs and
//! then restricted to the free ones by [`ConstrainedSystem`].

mod bc;
mod sparse;

pub use bc::{box_labels, BoundaryCondition, BoundaryConditionSet, ConstrainedSystem, DofMap};
pub use sparse::SparseOperator;

use crate::error::{Error, Result};
use crate::mesh::{MeshLevel, Subdomain};

/// Jumping material parameters of matrix (`out`) and inclusions (`int`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialCoefficients {
    /// Diffusivity of the matrix.
    pub k_out: f64,
    /// Diffusivity of the inclusions.
    pub k_int: f64,
    pub lambda_out: f64,
    pub lambda_int: f64,
    pub mu_out: f64,
    pub mu_int: f64,
}

impl MaterialCoefficients {
    /// Same Lamé pair everywhere; diffusivities set to one.
    pub fn uniform_lame(lambda: f64, mu: f64) -> Self {
        MaterialCoefficients {
            k_out: 1.0,
            k_int: 1.0,
            lambda_out: lambda,
            lambda_int: lambda,
            mu_out: mu,
            mu_int: mu,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = self.k_out > 0.0
            && self.k_int > 0.0
            && self.mu_out > 0.0
            && self.mu_int > 0.0
            && self.lambda_out + 2.0 * self.mu_out / dim as f64 > 0.0
            && self.lambda_int + 2.0 * self.mu_int / dim as f64 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "material coefficients are not elliptic: {self:?}"
            )))
        }
    }

    pub fn diffusivity(&self, sub: Subdomain) -> f64 {
        match sub {
            Subdomain::Out => self.k_out,
            Subdomain::Int(_) => self.k_int,
        }
    }

    /// `(lambda, mu)` of a subdomain.
    pub fn lame(&self, sub: Subdomain) -> (f64, f64) {
        match sub {
            Subdomain::Out => (self.lambda_out, self.mu_out),
            Subdomain::Int(_) => (self.lambda_int, self.mu_int),
        }
    }
}

/// Element stiffness of linear elasticity, `(d+1)d x (d+1)d`, row-major.
pub fn elasticity_element(
    grads: &[[f64; 3]],
    volume: f64,
    lambda: f64,
    mu: f64,
    dim: usize,
) -> Vec<f64> {
    let n = (dim + 1) * dim;
    let mut k = vec![0.0; n * n];
    for a in 0..=dim {
        for b in 0..=dim {
            let gg: f64 = (0..dim).map(|c| grads[a][c] * grads[b][c]).sum();
            for i in 0..dim {
                for j in 0..dim {
                    let mut v =
                        lambda * (grads[a][i] * grads[b][j]) + mu * (grads[a][j] * grads[b][i]);
                    if i == j {
                        v += mu * gg;
                    }
                    k[(a * dim + i) * n + b * dim + j] = volume * v;
                }
            }
        }
    }
    k
}

/// Stiffness of `∫ σ(u):ε(v)` on all dofs.
pub fn elasticity_stiffness(level: &MeshLevel, coeffs: &MaterialCoefficients) -> SparseOperator {
    let dim = level.dim();
    let n = (dim + 1) * dim;
    let mut trip = Vec::with_capacity(level.num_simplices() * n * n);
    for e in 0..level.num_simplices() {
        let g = level.element_geometry(e);
        let (lambda, mu) = coeffs.lame(level.subdomain(e));
        let k = elasticity_element(&g.grads[..=dim], g.volume, lambda, mu, dim);
        let s = level.simplex(e);
        for a in 0..=dim {
            for i in 0..dim {
                let r = s[a] * dim + i;
                for b in 0..=dim {
                    for j in 0..dim {
                        trip.push((r, s[b] * dim + j, k[(a * dim + i) * n + b * dim + j]));
                    }
                }
            }
        }
    }
    let nd = level.num_vertices() * dim;
    SparseOperator::from_triplets((nd, nd), trip)
}

/// Stiffness of `∫ k ∇y·∇z` with the jumping diffusivity.
pub fn diffusion_stiffness(level: &MeshLevel, coeffs: &MaterialCoefficients) -> SparseOperator {
    let dim = level.dim();
    let mut trip = Vec::with_capacity(level.num_simplices() * (dim + 1) * (dim + 1));
    for e in 0..level.num_simplices() {
        let g = level.element_geometry(e);
        let k = coeffs.diffusivity(level.subdomain(e));
        let s = level.simplex(e);
        for a in 0..=dim {
            for b in 0..=dim {
                let gg: f64 = (0..dim).map(|c| g.grads[a][c] * g.grads[b][c]).sum();
                trip.push((s[a], s[b], g.volume * k * gg));
            }
        }
    }
    let n = level.num_vertices();
    SparseOperator::from_triplets((n, n), trip)
}

/// Consistent P1 mass matrix.
pub fn mass_matrix(level: &MeshLevel) -> SparseOperator {
    let dim = level.dim();
    let denom = ((dim + 1) * (dim + 2)) as f64;
    let mut trip = Vec::with_capacity(level.num_simplices() * (dim + 1) * (dim + 1));
    for e in 0..level.num_simplices() {
        let vol = level.volume(e);
        let s = level.simplex(e);
        for a in 0..=dim {
            for b in 0..=dim {
                let w = if a == b { 2.0 } else { 1.0 };
                trip.push((s[a], s[b], vol * w / denom));
            }
        }
    }
    let n = level.num_vertices();
    SparseOperator::from_triplets((n, n), trip)
}

/// Elasticity operator, Neumann load and dof split of one level.
#[derive(Debug, Clone)]
pub struct ElasticitySystem {
    pub stiffness: SparseOperator,
    pub load: Vec<f64>,
    pub dofs: DofMap,
}

impl ElasticitySystem {
    pub fn constrained(&self) -> ConstrainedSystem {
        ConstrainedSystem::new(&self.stiffness, &self.load, self.dofs.clone())
    }
}

pub fn assemble_elasticity(
    level: &MeshLevel,
    coeffs: &MaterialCoefficients,
    bcs: &BoundaryConditionSet,
) -> Result<ElasticitySystem> {
    coeffs.validate(level.dim())?;
    let dofs = DofMap::build(level, bcs, level.dim())?;
    let load = bcs.neumann_load(level, level.dim())?;
    Ok(ElasticitySystem {
        stiffness: elasticity_stiffness(level, coeffs),
        load,
        dofs,
    })
}

/// Diffusion stiffness, mass, Neumann load and dof split of one level.
#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    pub stiffness: SparseOperator,
    pub mass: SparseOperator,
    pub load: Vec<f64>,
    pub dofs: DofMap,
}

pub fn assemble_diffusion(
    level: &MeshLevel,
    coeffs: &MaterialCoefficients,
    bcs: &BoundaryConditionSet,
) -> Result<DiffusionSystem> {
    coeffs.validate(level.dim())?;
    let dofs = DofMap::build(level, bcs, 1)?;
    let load = bcs.neumann_load(level, 1)?;
    Ok(DiffusionSystem {
        stiffness: diffusion_stiffness(level, coeffs),
        mass: mass_matrix(level),
        load,
        dofs,
    })
}
