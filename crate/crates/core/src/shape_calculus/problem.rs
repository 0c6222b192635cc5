//! State solves, objective values and the combined derivative load.

use super::loads::{elastic_energy, element_mass_product};
use super::{
    assemble_dj1, assemble_dj2, assemble_dj3, assemble_dj4_surface, assemble_dj4_volume,
    ObjectiveSpec, ObjectiveValues, PerimeterForm, ShapeDerivativeLoad, TrackingTarget,
};
use crate::error::{Error, Result};
use crate::fem::MaterialCoefficients;
use crate::mesh::{discrete_mean_curvature, MeshLevel, SimplicialMeshHierarchy};
use crate::multigrid::SolverOptions;
use crate::physics::{DiffusionProblem, ElasticPair, ElasticProblem, TransientTrajectory};

/// Objective terms from given states.
///
/// `displacement` is required when `nu1 > 0`; `state`, `target` and
/// `weights` when `nu2 > 0`.
pub fn eval_objective(
    level: &MeshLevel,
    coeffs: &MaterialCoefficients,
    spec: &ObjectiveSpec,
    displacement: Option<&[f64]>,
    tracking: Option<(&TransientTrajectory, &TransientTrajectory, &[f64])>,
) -> Result<ObjectiveValues> {
    let mut terms = [0.0; 4];
    if spec.nu1 != 0.0 {
        let u = displacement
            .ok_or_else(|| Error::invalid("compliance weight set but no displacement given"))?;
        terms[0] = spec.nu1 * elastic_energy(level, coeffs, u);
    }
    if spec.nu2 != 0.0 {
        let (state, target, weights) = tracking
            .ok_or_else(|| Error::invalid("tracking weight set but no trajectory given"))?;
        for n in (1..weights.len()).filter(|&n| weights[n] != 0.0) {
            let misfit: Vec<f64> = state.fields[n]
                .iter()
                .zip(&target.fields[n])
                .map(|(y, t)| y - t)
                .collect();
            let m: f64 = (0..level.num_simplices())
                .map(|e| element_mass_product(level, e, level.volume(e), &misfit, &misfit))
                .sum();
            terms[1] += weights[n] * 0.5 * spec.nu2 * m;
        }
    }
    terms[2] = spec.nu3 * level.outer_volume();
    terms[3] = spec.nu4 * level.interface_measure();
    Ok(ObjectiveValues { terms })
}

/// States and adjoints of one geometry.
#[derive(Debug, Clone, Default)]
pub struct StateSolution {
    pub elastic: Option<ElasticPair>,
    pub state: Option<TransientTrajectory>,
    pub adjoint: Option<TransientTrajectory>,
    /// Reference values sampled on the current vertices.
    pub target: Option<TransientTrajectory>,
    /// Tracking weight per time step.
    pub weights: Vec<f64>,
}

/// Material, objective and solver settings of a shape optimization problem.
#[derive(Debug, Clone)]
pub struct ShapeProblem {
    pub coeffs: MaterialCoefficients,
    pub spec: ObjectiveSpec,
    pub solver: SolverOptions,
}

impl ShapeProblem {
    pub fn new(
        coeffs: MaterialCoefficients,
        spec: ObjectiveSpec,
        solver: SolverOptions,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(ShapeProblem {
            coeffs,
            spec,
            solver,
        })
    }

    /// Copy with a different objective.
    pub fn with_spec(&self, spec: ObjectiveSpec) -> Self {
        ShapeProblem {
            spec,
            ..self.clone()
        }
    }

    /// Solve the states needed by the active terms, and their adjoints if asked.
    pub fn solve_states(
        &self,
        mesh: &SimplicialMeshHierarchy,
        adjoints: bool,
    ) -> Result<StateSolution> {
        let mut out = StateSolution::default();
        let spec = &self.spec;
        if spec.nu1 != 0.0 {
            let p = ElasticProblem::new(mesh, &self.coeffs, &self.solver)?;
            let u = p.state(spec.traction)?;
            let w = if adjoints {
                p.adjoint(spec.traction, spec.nu1)?
            } else {
                Vec::new()
            };
            out.elastic = Some(ElasticPair { u, w });
        }
        if spec.nu2 != 0.0 {
            let p = DiffusionProblem::new(mesh, &self.coeffs, spec.dt, spec.horizon, &self.solver)?;
            out.weights = spec.mode.weights(spec.dt, p.steps())?;
            let target = spec
                .target
                .as_ref()
                .ok_or_else(|| Error::invalid("tracking weight set but no target data"))?
                .sample(mesh.finest(), &out.weights)?;
            let y = p.march()?;
            if adjoints {
                out.adjoint = Some(p.adjoint(&y, &target, spec.nu2, &out.weights)?);
            }
            out.state = Some(y);
            out.target = Some(target);
        }
        Ok(out)
    }

    pub fn values(
        &self,
        mesh: &SimplicialMeshHierarchy,
        states: &StateSolution,
    ) -> Result<ObjectiveValues> {
        eval_objective(
            mesh.finest(),
            &self.coeffs,
            &self.spec,
            states.elastic.as_ref().map(|p| p.u.as_slice()),
            states
                .state
                .as_ref()
                .zip(states.target.as_ref())
                .map(|(y, t)| (y, t, states.weights.as_slice())),
        )
    }

    pub fn objective(&self, mesh: &SimplicialMeshHierarchy) -> Result<ObjectiveValues> {
        let states = self.solve_states(mesh, false)?;
        self.values(mesh, &states)
    }

    /// Objective and one load per active term, in the order j1..j4.
    pub fn component_loads(
        &self,
        mesh: &SimplicialMeshHierarchy,
    ) -> Result<(ObjectiveValues, Vec<ShapeDerivativeLoad>)> {
        let states = self.solve_states(mesh, true)?;
        let values = self.values(mesh, &states)?;
        let level = mesh.finest();
        let spec = &self.spec;
        let mut loads = Vec::new();
        if let Some(pair) = &states.elastic {
            loads.push(assemble_dj1(level, &self.coeffs, &pair.u, &pair.w)?);
        }
        if let (Some(y), Some(z), Some(t)) = (&states.state, &states.adjoint, &states.target) {
            let measured = match &spec.target {
                Some(TrackingTarget::Measured(m)) => Some(m),
                _ => None,
            };
            loads.push(assemble_dj2(
                level,
                &self.coeffs,
                y,
                z,
                t,
                measured,
                spec.nu2,
                &states.weights,
            )?);
        }
        if spec.nu3 != 0.0 {
            loads.push(assemble_dj3(level, spec.nu3));
        }
        if spec.nu4 != 0.0 {
            loads.push(match spec.perimeter_form {
                PerimeterForm::Surface => {
                    assemble_dj4_surface(level, &discrete_mean_curvature(level)?, spec.nu4)
                }
                PerimeterForm::Volume => assemble_dj4_volume(level, spec.nu4),
            });
        }
        Ok((values, loads))
    }

    /// Objective and the summed derivative load.
    pub fn gradient(
        &self,
        mesh: &SimplicialMeshHierarchy,
    ) -> Result<(ObjectiveValues, ShapeDerivativeLoad)> {
        let (values, loads) = self.component_loads(mesh)?;
        let load = if loads.is_empty() {
            ShapeDerivativeLoad::zero(mesh.dim(), mesh.finest().num_vertices())
        } else {
            ShapeDerivativeLoad::sum(&loads)
        };
        Ok((values, load))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use crate::physics::MeasurementMode;
    use std::f64::consts::PI;

    fn polygon_mesh(sides: u32) -> SimplicialMeshHierarchy {
        let spec = InclusionMeshSpec::unit_box(
            InclusionShape::Polygon {
                radius: 0.25,
                sides,
                phase: 0.0,
            },
            sides as usize,
        );
        SimplicialMeshHierarchy::new(generate::inclusion_mesh_2d(&spec).unwrap(), 2, None).unwrap()
    }

    fn material() -> MaterialCoefficients {
        MaterialCoefficients {
            k_out: 1.0,
            k_int: 0.001,
            ..MaterialCoefficients::uniform_lame(0.01, 0.1)
        }
    }

    #[test]
    fn volume_and_perimeter_terms() {
        let mesh = polygon_mesh(16);
        let spec = ObjectiveSpec {
            nu3: 1.0,
            nu4: 1.0,
            ..ObjectiveSpec::zero()
        };
        let p = ShapeProblem::new(material(), spec, SolverOptions::default()).unwrap();
        let v = p.objective(&mesh).unwrap();
        let r: f64 = 0.25;
        let n = 16.0;
        let area = 0.5 * n * r * r * (2.0 * PI / n).sin();
        assert!((v.j3() - (1.0 - area)).abs() < 1e-12);
        assert!((v.j4() - n * 2.0 * r * (PI / n).sin()).abs() < 1e-12);
        assert_eq!(v.j1(), 0.0);
        assert_eq!(v.total(), v.j3() + v.j4());
    }

    #[test]
    fn compliance_equals_work() {
        let mesh = polygon_mesh(8);
        let spec = ObjectiveSpec {
            nu1: 0.15,
            ..ObjectiveSpec::zero()
        };
        let p = ShapeProblem::new(
            material(),
            spec,
            SolverOptions {
                rtol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        let states = p.solve_states(&mesh, true).unwrap();
        let u = &states.elastic.as_ref().unwrap().u;
        let ep = ElasticProblem::new(&mesh, &material(), &p.solver).unwrap();
        let work: f64 = ep
            .traction_load([0.0, -1.0, 0.0])
            .unwrap()
            .iter()
            .zip(u)
            .map(|(a, b)| a * b)
            .sum();
        let j1 = p.values(&mesh, &states).unwrap().j1();
        assert!((j1 - 0.15 * work).abs() <= 1e-8 * j1.abs());
    }

    #[test]
    fn missing_state_rejected() {
        let mesh = polygon_mesh(8);
        let spec = ObjectiveSpec {
            nu1: 1.0,
            ..ObjectiveSpec::zero()
        };
        assert!(eval_objective(mesh.finest(), &material(), &spec, None, None).is_err());
    }

    #[test]
    fn tracking_without_target_rejected() {
        let spec = ObjectiveSpec {
            nu2: 0.1,
            ..ObjectiveSpec::zero()
        };
        assert!(ShapeProblem::new(material(), spec, SolverOptions::default()).is_err());
    }

    #[test]
    fn consistent_target_gives_zero_tracking_load() {
        let mesh = polygon_mesh(8);
        let y = DiffusionProblem::new(&mesh, &material(), 1.5, 15.0, &SolverOptions::default())
            .unwrap()
            .march()
            .unwrap();
        let spec = ObjectiveSpec {
            nu2: 0.1,
            mode: MeasurementMode::Integral,
            target: Some(TrackingTarget::Nodal(y)),
            ..ObjectiveSpec::zero()
        };
        let p = ShapeProblem::new(material(), spec, SolverOptions::default()).unwrap();
        let (v, load) = p.gradient(&mesh).unwrap();
        assert_eq!(v.j2(), 0.0);
        assert!(load.is_zero());
    }

    #[test]
    fn all_weights_zero_gives_zero_load() {
        let mesh = polygon_mesh(8);
        let p =
            ShapeProblem::new(material(), ObjectiveSpec::zero(), SolverOptions::default()).unwrap();
        let (v, load) = p.gradient(&mesh).unwrap();
        assert_eq!(v.total(), 0.0);
        assert!(load.is_zero());
    }
}
