//! Boundary conditions, dof bookkeeping and strong constraint elimination.

use std::collections::BTreeMap;

use super::SparseOperator;
use crate::error::{Error, Result};
use crate::mesh::geometry::facet_normal;
use crate::mesh::{BoundaryLabel, MeshLevel};

/// Condition on one labelled part of the box boundary.
///
/// Scalar problems use only the first entry of the value arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// Prescribed value on every component.
    Dirichlet([f64; 3]),
    /// Prescribed flux or traction density.
    Neumann([f64; 3]),
    /// Normal displacement component fixed to zero, tangential components free.
    SlidingNormal,
}

/// One condition per boundary label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditionSet {
    conditions: BTreeMap<BoundaryLabel, BoundaryCondition>,
}

impl BoundaryConditionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: BoundaryLabel, bc: BoundaryCondition) -> Self {
        self.conditions.insert(label, bc);
        self
    }

    /// Apply `bc` to every label of the box in dimension `dim`.
    pub fn uniform(dim: usize, bc: BoundaryCondition) -> Self {
        let mut s = Self::new();
        for label in box_labels(dim) {
            s.conditions.insert(label, bc);
        }
        s
    }

    pub fn get(&self, label: BoundaryLabel) -> Option<BoundaryCondition> {
        self.conditions.get(&label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BoundaryLabel, BoundaryCondition)> + '_ {
        self.conditions.iter().map(|(&l, &c)| (l, c))
    }

    /// Facet-integrated Neumann data: each facet vertex receives `g |F| / d`.
    pub fn neumann_load(&self, level: &MeshLevel, components: usize) -> Result<Vec<f64>> {
        let dim = level.dim();
        let mut load = vec![0.0; level.num_vertices() * components];
        for (f, label) in level.boundary_facets() {
            let bc = self
                .get(label)
                .ok_or(Error::MissingBoundaryCondition(label))?;
            if let BoundaryCondition::Neumann(g) = bc {
                let (measure, _) = facet_normal(&level.facet_points(f), dim);
                for &v in f {
                    for c in 0..components {
                        load[v * components + c] += g[c] * measure / dim as f64;
                    }
                }
            }
        }
        Ok(load)
    }
}

/// Labels of the box faces in dimension `dim`.
pub fn box_labels(dim: usize) -> Vec<BoundaryLabel> {
    (0..dim)
        .flat_map(|axis| [false, true].map(|upper| BoundaryLabel::for_axis(dim, axis, upper)))
        .collect()
}

/// Split of the dofs of a level into free and prescribed ones.
///
/// Dofs are numbered `vertex * components + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    components: usize,
    prescribed: Vec<Option<f64>>,
    free: Vec<usize>,
    free_index: Vec<usize>,
}

impl DofMap {
    pub fn build(level: &MeshLevel, bcs: &BoundaryConditionSet, components: usize) -> Result<Self> {
        let dim = level.dim();
        let n = level.num_vertices() * components;
        let mut prescribed: Vec<Option<f64>> = vec![None; n];
        let (lo, hi) = level.bounding_box();
        let scale = (0..dim).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let mut set = |dof: usize, value: f64| -> Result<()> {
            match prescribed[dof] {
                Some(old) if old != value => Err(Error::ConflictingConstraint {
                    dof,
                    first: old,
                    second: value,
                }),
                _ => {
                    prescribed[dof] = Some(value);
                    Ok(())
                }
            }
        };
        for (fi, (f, label)) in level.boundary_facets().enumerate() {
            match bcs
                .get(label)
                .ok_or(Error::MissingBoundaryCondition(label))?
            {
                BoundaryCondition::Neumann(_) => {}
                BoundaryCondition::Dirichlet(value) => {
                    for &v in f {
                        for c in 0..components {
                            set(v * components + c, value[c])?;
                        }
                    }
                }
                BoundaryCondition::SlidingNormal => {
                    if components != dim {
                        return Err(Error::invalid(format!(
                            "sliding condition on `{label}` needs a vector-valued problem"
                        )));
                    }
                    let axis = label.normal_axis(dim);
                    let x0 = level.coords()[f[0]][axis];
                    if f.iter()
                        .any(|&v| (level.coords()[v][axis] - x0).abs() > 1e-12 * scale)
                    {
                        return Err(Error::NotAxisAligned { facet: fi, label });
                    }
                    for &v in f {
                        set(v * components + axis, 0.0)?;
                    }
                }
            }
        }
        Ok(Self::from_prescribed(prescribed, components))
    }

    pub fn unconstrained(num_vertices: usize, components: usize) -> Self {
        Self::from_prescribed(vec![None; num_vertices * components], components)
    }

    fn from_prescribed(prescribed: Vec<Option<f64>>, components: usize) -> Self {
        let mut free = Vec::new();
        let mut free_index = vec![usize::MAX; prescribed.len()];
        for (d, p) in prescribed.iter().enumerate() {
            if p.is_none() {
                free_index[d] = free.len();
                free.push(d);
            }
        }
        DofMap {
            components,
            prescribed,
            free,
            free_index,
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_dofs(&self) -> usize {
        self.prescribed.len()
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.prescribed[dof].is_none()
    }

    /// Position of `dof` in the free numbering.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        let i = self.free_index[dof];
        (i != usize::MAX).then_some(i)
    }

    pub fn prescribed(&self, dof: usize) -> Option<f64> {
        self.prescribed[dof]
    }

    pub fn constrained(&self) -> Vec<usize> {
        (0..self.num_dofs()).filter(|&d| !self.is_free(d)).collect()
    }

    /// Full vector from free values plus prescribed values.
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        self.prescribed
            .iter()
            .enumerate()
            .map(|(d, p)| p.unwrap_or_else(|| free_values[self.free_index[d]]))
            .collect()
    }

    /// Full vector from free values with zeros at constrained dofs.
    pub fn expand_homogeneous(&self, free_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs()];
        for (k, &d) in self.free.iter().enumerate() {
            out[d] = free_values[k];
        }
        out
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn zero_constrained(&self, full: &mut [f64]) {
        for (d, p) in self.prescribed.iter().enumerate() {
            if p.is_some() {
                full[d] = 0.0;
            }
        }
    }
}

/// Linear system restricted to the free dofs with prescribed values moved to the right-hand side.
#[derive(Debug, Clone)]
pub struct ConstrainedSystem {
    pub matrix: SparseOperator,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
}

impl ConstrainedSystem {
    pub fn new(full: &SparseOperator, load: &[f64], dofs: DofMap) -> Self {
        let constrained = dofs.constrained();
        let matrix = full.submatrix(dofs.free(), dofs.free());
        let mut rhs = dofs.restrict(load);
        if !constrained.is_empty() {
            let coupling = full.submatrix(dofs.free(), &constrained);
            let values: Vec<f64> = constrained
                .iter()
                .map(|&d| dofs.prescribed(d).unwrap())
                .collect();
            for (r, v) in rhs.iter_mut().zip(coupling.matvec(&values)) {
                *r -= v;
            }
        }
        ConstrainedSystem { matrix, rhs, dofs }
    }

    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        self.dofs.expand(free_values)
    }
}
