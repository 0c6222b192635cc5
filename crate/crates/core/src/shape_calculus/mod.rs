//! Objective evaluation and shape derivatives.
//!
//! The objective is
//! `J = nu1 ∫ σ(u):ε(u) + tracking(y) + nu3 |Ω_out| + nu4 |Γ_int|`.
//! Its derivatives along a nodal deformation field are assembled as nodal
//! loads ([`ShapeDerivativeLoad`]) in the interleaved layout `v * dim + c`.
//! Every load is restricted to the dofs whose support touches the interface.

mod fd;
mod loads;
mod problem;

pub use fd::{fd_directional_derivative, random_interface_field, taylor_check, TaylorReport};
pub use loads::{
    assemble_dj1, assemble_dj2, assemble_dj3, assemble_dj4_surface, assemble_dj4_volume,
    interface_support,
};
pub use problem::{eval_objective, ShapeProblem, StateSolution};

use crate::error::{Error, Result};
use crate::measurements::MeasurementSet;
use crate::mesh::MeshLevel;
use crate::physics::{step_count, MeasurementMode, TransientTrajectory};

/// Which discretization of the perimeter derivative enters the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerimeterForm {
    /// Mean curvature times normal velocity on the interface.
    #[default]
    Surface,
    /// Tangential divergence of the velocity on the interface.
    Volume,
}

/// Reference data `ȳ` of the tracking term.
#[derive(Debug, Clone, PartialEq)]
pub enum TrackingTarget {
    /// Nodal values attached to the vertices; they move with the mesh.
    Nodal(TransientTrajectory),
    /// Fields fixed in space, evaluated at the current vertex positions.
    Measured(MeasurementSet),
}

impl TrackingTarget {
    /// Nodal values on `level` at every step; fields at steps with zero
    /// weight may be empty.
    pub fn sample(&self, level: &MeshLevel, weights: &[f64]) -> Result<TransientTrajectory> {
        let steps = weights.len() - 1;
        let nv = level.num_vertices();
        match self {
            TrackingTarget::Nodal(t) => {
                if t.fields.len() != steps + 1 {
                    return Err(Error::TrajectoryMismatch(format!(
                        "target has {} fields, expected {}",
                        t.fields.len(),
                        steps + 1
                    )));
                }
                if let Some(n) = (1..=steps).find(|&n| weights[n] != 0.0 && t.fields[n].len() != nv)
                {
                    return Err(Error::TrajectoryMismatch(format!(
                        "target field {n} does not match the mesh"
                    )));
                }
                Ok(t.clone())
            }
            TrackingTarget::Measured(m) => {
                if m.steps != steps {
                    return Err(Error::TrajectoryMismatch(format!(
                        "measurements cover {} steps, the march has {steps}",
                        m.steps
                    )));
                }
                let mut fields = vec![Vec::new(); steps + 1];
                for n in (1..=steps).filter(|&n| weights[n] != 0.0) {
                    let f = m.field_at(n).ok_or_else(|| {
                        Error::TrajectoryMismatch(format!("no measurement at step {n}"))
                    })?;
                    fields[n] = f.eval_many(level.coords());
                }
                Ok(TransientTrajectory { dt: m.dt, fields })
            }
        }
    }
}

/// Weights, loads and time discretization of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// Compliance weight.
    pub nu1: f64,
    /// Tracking weight.
    pub nu2: f64,
    /// Weight of the matrix volume.
    pub nu3: f64,
    /// Perimeter weight.
    pub nu4: f64,
    /// Traction on the top face.
    pub traction: [f64; 3],
    pub dt: f64,
    pub horizon: f64,
    pub mode: MeasurementMode,
    pub target: Option<TrackingTarget>,
    pub perimeter_form: PerimeterForm,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            nu1: 0.15,
            nu2: 0.1,
            nu3: 16.0,
            nu4: 0.01,
            traction: [0.0, -1.0, 0.0],
            dt: 1.5,
            horizon: 15.0,
            mode: MeasurementMode::Instants(vec![7.5, 15.0]),
            target: None,
            perimeter_form: PerimeterForm::Surface,
        }
    }
}

impl ObjectiveSpec {
    /// Spec with every weight zero.
    pub fn zero() -> Self {
        ObjectiveSpec {
            nu1: 0.0,
            nu2: 0.0,
            nu3: 0.0,
            nu4: 0.0,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.nu1, self.nu2, self.nu3, self.nu4]
    }

    /// Copy keeping only weight `term` (0-based).
    pub fn only(&self, term: usize) -> Self {
        let mut s = self.clone();
        for (k, nu) in [&mut s.nu1, &mut s.nu2, &mut s.nu3, &mut s.nu4]
            .into_iter()
            .enumerate()
        {
            if k != term {
                *nu = 0.0;
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (k, nu) in self.weights().iter().enumerate() {
            if !(*nu >= 0.0) || !nu.is_finite() {
                return Err(Error::invalid(format!(
                    "weight nu{} = {nu} must be finite and non-negative",
                    k + 1
                )));
            }
        }
        if self.nu2 > 0.0 {
            let steps = step_count(self.dt, self.horizon)?;
            self.mode.weights(self.dt, steps)?;
            if self.target.is_none() {
                return Err(Error::invalid("tracking weight nu2 > 0 needs target data"));
            }
        }
        Ok(())
    }
}

/// The four objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveValues {
    pub terms: [f64; 4],
}

impl ObjectiveValues {
    pub fn total(&self) -> f64 {
        self.terms.iter().sum()
    }

    pub fn j1(&self) -> f64 {
        self.terms[0]
    }

    pub fn j2(&self) -> f64 {
        self.terms[1]
    }

    pub fn j3(&self) -> f64 {
        self.terms[2]
    }

    pub fn j4(&self) -> f64 {
        self.terms[3]
    }
}

/// Objective term a load belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveTerm {
    Compliance,
    Tracking,
    Volume,
    Perimeter,
}

/// Whether a load integrates over elements or over interface facets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralForm {
    Volume,
    Surface,
}

/// Nodal representation of a shape derivative: `dJ[V] = values · V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDerivativeLoad {
    pub dim: usize,
    pub values: Vec<f64>,
    /// Terms and forms summed into `values`.
    pub parts: Vec<(ObjectiveTerm, IntegralForm)>,
}

impl ShapeDerivativeLoad {
    pub fn zero(dim: usize, num_vertices: usize) -> Self {
        ShapeDerivativeLoad {
            dim,
            values: vec![0.0; dim * num_vertices],
            parts: Vec::new(),
        }
    }

    /// `b(V)`.
    pub fn apply(&self, field: &[f64]) -> f64 {
        self.values.iter().zip(field).map(|(a, b)| a * b).sum()
    }

    pub fn add(&mut self, other: &ShapeDerivativeLoad) {
        assert_eq!(self.values.len(), other.values.len(), "load size mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.parts.extend(other.parts.iter().copied());
    }

    pub fn sum(loads: &[ShapeDerivativeLoad]) -> Self {
        let mut out = ShapeDerivativeLoad {
            dim: loads[0].dim,
            values: vec![0.0; loads[0].values.len()],
            parts: Vec::new(),
        };
        for l in loads {
            out.add(l);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}
