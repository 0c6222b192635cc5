//! Backward Euler diffusion with `y = 1` on the top face and its discrete adjoint.

use crate::error::{Error, Result};
use crate::fem::{
    box_labels, diffusion_stiffness, mass_matrix, BoundaryCondition, BoundaryConditionSet, DofMap,
    MaterialCoefficients, SparseOperator,
};
use crate::mesh::{BoundaryLabel, SimplicialMeshHierarchy};
use crate::multigrid::{MgSolver, SolverOptions};

/// Top face held at one, all other faces insulated.
pub fn diffusion_bcs(dim: usize) -> BoundaryConditionSet {
    let mut bcs = BoundaryConditionSet::new();
    for label in box_labels(dim) {
        let bc = if label == BoundaryLabel::Top {
            BoundaryCondition::Dirichlet([1.0; 3])
        } else {
            BoundaryCondition::Neumann([0.0; 3])
        };
        bcs = bcs.with(label, bc);
    }
    bcs
}

/// Number of steps of size `dt` covering `[0, horizon]`; `dt` must divide `horizon`.
pub fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::invalid(format!(
            "time step {dt} and horizon {horizon} must be positive"
        )));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::invalid(format!(
            "time step {dt} does not divide horizon {horizon}"
        )));
    }
    Ok(n as usize)
}

/// How the tracking term weighs the time steps.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementMode {
    /// Right-endpoint rectangle rule for the time integral.
    Integral,
    /// Point evaluations at the given times, each a multiple of the step.
    Instants(Vec<f64>),
}

impl MeasurementMode {
    /// Weight of each step `0..=steps`; step 0 always has weight zero.
    pub fn weights(&self, dt: f64, steps: usize) -> Result<Vec<f64>> {
        let mut w = vec![0.0; steps + 1];
        match self {
            MeasurementMode::Integral => w[1..].iter_mut().for_each(|x| *x = dt),
            MeasurementMode::Instants(times) => {
                for &t in times {
                    let n = (t / dt).round();
                    if n < 1.0 || n as usize > steps || (n * dt - t).abs() > 1e-9 * t.abs().max(1.0)
                    {
                        return Err(Error::invalid(format!(
                            "measurement time {t} is not a step of size {dt} in (0, {}]",
                            dt * steps as f64
                        )));
                    }
                    w[n as usize] += 1.0;
                }
            }
        }
        Ok(w)
    }

    /// Steps carrying a nonzero weight.
    pub fn active_steps(&self, dt: f64, steps: usize) -> Result<Vec<usize>> {
        Ok(self
            .weights(dt, steps)?
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(n, _)| n)
            .collect())
    }
}

/// Nodal fields at `t_n = n * dt`, `n = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrajectory {
    pub dt: f64,
    pub fields: Vec<Vec<f64>>,
}

impl TransientTrajectory {
    pub fn steps(&self) -> usize {
        self.fields.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.dt * n as f64
    }
}

/// Operators of one geometry for the forward and backward marches.
#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    stiffness: SparseOperator,
    mass: SparseOperator,
    system: SparseOperator,
    dofs: DofMap,
    solver: MgSolver,
    dt: f64,
    steps: usize,
}

impl DiffusionProblem {
    pub fn new(
        mesh: &SimplicialMeshHierarchy,
        coeffs: &MaterialCoefficients,
        dt: f64,
        horizon: f64,
        options: &SolverOptions,
    ) -> Result<Self> {
        let steps = step_count(dt, horizon)?;
        coeffs.validate(mesh.dim())?;
        let stiffness = diffusion_stiffness(mesh.finest(), coeffs);
        let mass = mass_matrix(mesh.finest());
        let system = mass.add_scaled(dt, &stiffness);
        let (solver, dofs) =
            MgSolver::for_hierarchy(mesh, &system, &diffusion_bcs(mesh.dim()), 1, options)?;
        Ok(DiffusionProblem {
            stiffness,
            mass,
            system,
            dofs,
            solver,
            dt,
            steps,
        })
    }

    pub fn stiffness(&self) -> &SparseOperator {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseOperator {
        &self.mass
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn march(&self) -> Result<TransientTrajectory> {
        self.march_with_sources(None)
    }

    /// Forward march with an optional nodal source added to each step's
    /// right-hand side (`sources[n]` for step `n >= 1`).
    pub fn march_with_sources(&self, sources: Option<&[Vec<f64>]>) -> Result<TransientTrajectory> {
        let nv = self.dofs.num_dofs();
        if let Some(s) = sources {
            if s.len() != self.steps + 1 || s.iter().any(|f| f.len() != nv) {
                return Err(Error::TrajectoryMismatch(format!(
                    "sources need {} fields of length {nv}",
                    self.steps + 1
                )));
            }
        }
        let lift = self.dofs.expand(&vec![0.0; self.dofs.num_free()]);
        let lift_action = self.system.matvec(&lift);
        let mut fields = vec![vec![0.0; nv]];
        for n in 1..=self.steps {
            let mut rhs = self.mass.matvec(&fields[n - 1]);
            for (r, a) in rhs.iter_mut().zip(&lift_action) {
                *r -= a;
            }
            if let Some(s) = sources {
                for (r, d) in rhs.iter_mut().zip(&s[n]) {
                    *r += d;
                }
            }
            let res =
                self.solver
                    .solve(&self.dofs.restrict(&rhs))
                    .map_err(|e| Error::TimeStep {
                        step: n,
                        source: Box::new(e),
                    })?;
            fields.push(self.dofs.expand(&res.solution));
        }
        Ok(TransientTrajectory {
            dt: self.dt,
            fields,
        })
    }

    /// Backward adjoint march for the tracking term
    /// `sum_n weights[n] * nu2/2 * (y_n - target_n)^T M (y_n - target_n)`.
    ///
    /// Target fields at zero-weight steps are ignored and may be empty.
    pub fn adjoint(
        &self,
        state: &TransientTrajectory,
        target: &TransientTrajectory,
        nu2: f64,
        weights: &[f64],
    ) -> Result<TransientTrajectory> {
        let nv = self.dofs.num_dofs();
        let n_steps = self.steps;
        if state.fields.len() != n_steps + 1 || weights.len() != n_steps + 1 {
            return Err(Error::TrajectoryMismatch(format!(
                "state has {} fields and {} weights, expected {}",
                state.fields.len(),
                weights.len(),
                n_steps + 1
            )));
        }
        if target.fields.len() != n_steps + 1 {
            return Err(Error::TrajectoryMismatch(format!(
                "target has {} fields, expected {}",
                target.fields.len(),
                n_steps + 1
            )));
        }
        let mut fields = vec![vec![0.0; nv]; n_steps + 1];
        let mut next = vec![0.0; nv];
        for n in (1..=n_steps).rev() {
            let mut rhs = self.mass.matvec(&next);
            if weights[n] != 0.0 && nu2 != 0.0 {
                if target.fields[n].len() != nv {
                    return Err(Error::TrajectoryMismatch(format!(
                        "target field {n} has wrong length"
                    )));
                }
                let misfit: Vec<f64> = state.fields[n]
                    .iter()
                    .zip(&target.fields[n])
                    .map(|(y, t)| y - t)
                    .collect();
                for (r, m) in rhs.iter_mut().zip(self.mass.matvec(&misfit)) {
                    *r -= weights[n] * nu2 * m;
                }
            }
            let res =
                self.solver
                    .solve(&self.dofs.restrict(&rhs))
                    .map_err(|e| Error::TimeStep {
                        step: n,
                        source: Box::new(e),
                    })?;
            next = self.dofs.expand_homogeneous(&res.solution);
            fields[n] = next.clone();
        }
        Ok(TransientTrajectory {
            dt: self.dt,
            fields,
        })
    }

    /// Value of the tracking term.
    pub fn tracking(
        &self,
        state: &TransientTrajectory,
        target: &TransientTrajectory,
        nu2: f64,
        weights: &[f64],
    ) -> f64 {
        (1..=self.steps)
            .filter(|&n| weights[n] != 0.0)
            .map(|n| {
                let misfit: Vec<f64> = state.fields[n]
                    .iter()
                    .zip(&target.fields[n])
                    .map(|(y, t)| y - t)
                    .collect();
                weights[n] * 0.5 * nu2 * self.mass.bilinear(&misfit, &misfit)
            })
            .sum()
    }
}

/// Forward march of the state.
pub fn march_diffusion_state(
    mesh: &SimplicialMeshHierarchy,
    coeffs: &MaterialCoefficients,
    dt: f64,
    horizon: f64,
    options: &SolverOptions,
) -> Result<TransientTrajectory> {
    DiffusionProblem::new(mesh, coeffs, dt, horizon, options)?.march()
}

/// Backward march of the adjoint with the rectangle-rule weights.
#[allow(clippy::too_many_arguments)]
pub fn march_diffusion_adjoint(
    mesh: &SimplicialMeshHierarchy,
    coeffs: &MaterialCoefficients,
    dt: f64,
    horizon: f64,
    state: &TransientTrajectory,
    target: &TransientTrajectory,
    nu2: f64,
    options: &SolverOptions,
) -> Result<TransientTrajectory> {
    let p = DiffusionProblem::new(mesh, coeffs, dt, horizon, options)?;
    let w = MeasurementMode::Integral.weights(dt, p.steps())?;
    p.adjoint(state, target, nu2, &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coeffs(k_out: f64, k_int: f64) -> MaterialCoefficients {
        MaterialCoefficients {
            k_out,
            k_int,
            ..MaterialCoefficients::uniform_lame(0.01, 0.1)
        }
    }

    fn opts() -> SolverOptions {
        SolverOptions {
            rtol: 1e-12,
            ..Default::default()
        }
    }

    fn box_mesh() -> SimplicialMeshHierarchy {
        let coarse = generate::structured_box_2d([0.0, 0.0], [1.0, 1.0], 4).unwrap();
        SimplicialMeshHierarchy::new(coarse, 3, None).unwrap()
    }

    fn inclusion_mesh() -> SimplicialMeshHierarchy {
        let spec = InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: 0.25 }, 16);
        SimplicialMeshHierarchy::new(generate::inclusion_mesh_2d(&spec).unwrap(), 2, None).unwrap()
    }

    #[test]
    fn step_count_requires_divisor() {
        assert_eq!(step_count(1.5, 15.0).unwrap(), 10);
        assert!(step_count(1.4, 15.0).is_err());
        assert!(step_count(0.0, 15.0).is_err());
    }

    #[test]
    fn instants_map_to_steps() {
        let w = MeasurementMode::Instants(vec![7.5, 15.0])
            .weights(1.5, 10)
            .unwrap();
        let active: Vec<usize> = (0..=10).filter(|&n| w[n] != 0.0).collect();
        assert_eq!(active, vec![5, 10]);
        assert!(MeasurementMode::Instants(vec![7.0])
            .weights(1.5, 10)
            .is_err());
        let wi = MeasurementMode::Integral.weights(1.5, 10).unwrap();
        assert_eq!(wi[0], 0.0);
        assert!((wi.iter().sum::<f64>() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn maximum_principle_holds() {
        let h = box_mesh();
        let traj = march_diffusion_state(&h, &coeffs(1.0, 1.0), 1.5, 15.0, &opts()).unwrap();
        assert_eq!(traj.steps(), 10);
        for f in &traj.fields {
            for &v in f {
                assert!(
                    (-1e-10..=1.0 + 1e-10).contains(&v),
                    "value {v} out of range"
                );
            }
        }
        assert!(traj.fields[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_transport_limit() {
        let h = box_mesh();
        let p = DiffusionProblem::new(&h, &coeffs(1e-12, 1e-12), 1.5, 15.0, &opts()).unwrap();
        let traj = p.march().unwrap();
        let level = h.finest();
        // With k = 0 the consistent mass only smears the lifted top values once.
        let dofs = p.dofs();
        let constrained = dofs.constrained();
        let m_ff = p.mass().submatrix(dofs.free(), dofs.free()).to_dense();
        let m_fc = p.mass().submatrix(dofs.free(), &constrained);
        let rhs =
            nalgebra::DVector::from_vec(m_fc.matvec(&vec![1.0; constrained.len()])).map(|v| -v);
        let frozen = dofs.expand(m_ff.cholesky().unwrap().solve(&rhs).as_slice());
        for field in &traj.fields[1..] {
            for (a, b) in field.iter().zip(&frozen) {
                assert!((a - b).abs() < 1e-6, "{a} {b}");
            }
        }
        for (v, x) in level.coords().iter().enumerate() {
            if x[1] < 0.5 {
                assert!(frozen[v].abs() < 1e-4, "vertex {v}: {}", frozen[v]);
            }
        }
    }

    #[test]
    fn steady_limit_is_one() {
        let h = box_mesh();
        let traj = march_diffusion_state(&h, &coeffs(1.0, 1.0), 10.0, 400.0, &opts()).unwrap();
        let last = traj.fields.last().unwrap();
        assert!(last.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn matching_target_gives_zero_adjoint() {
        let h = inclusion_mesh();
        let p = DiffusionProblem::new(&h, &coeffs(1.0, 0.001), 1.5, 15.0, &opts()).unwrap();
        let y = p.march().unwrap();
        let w = MeasurementMode::Integral.weights(1.5, 10).unwrap();
        let z = p.adjoint(&y, &y, 0.1, &w).unwrap();
        assert!(z.fields.iter().flatten().all(|&v| v == 0.0));
        let mut shifted = y.clone();
        shifted.fields[3][0] += 1.0;
        let z0 = p.adjoint(&y, &shifted, 0.0, &w).unwrap();
        assert!(z0.fields.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_mismatch_rejected() {
        let h = inclusion_mesh();
        let p = DiffusionProblem::new(&h, &coeffs(1.0, 0.001), 1.5, 15.0, &opts()).unwrap();
        let y = p.march().unwrap();
        let mut short = y.clone();
        short.fields.pop();
        let w = MeasurementMode::Integral.weights(1.5, 10).unwrap();
        assert!(matches!(
            p.adjoint(&short, &y, 0.1, &w),
            Err(Error::TrajectoryMismatch(_))
        ));
    }

    #[test]
    fn adjoint_identity_with_sources() {
        let h = inclusion_mesh();
        let p = DiffusionProblem::new(&h, &coeffs(1.0, 0.001), 1.5, 15.0, &opts()).unwrap();
        let nv = p.dofs().num_dofs();
        let y = p.march().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut target = y.clone();
        for f in target.fields.iter_mut() {
            f.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        let nu2 = 0.1;
        for mode in [
            MeasurementMode::Integral,
            MeasurementMode::Instants(vec![7.5, 15.0]),
        ] {
            let w = mode.weights(1.5, 10).unwrap();
            let z = p.adjoint(&y, &target, nu2, &w).unwrap();
            let delta: Vec<Vec<f64>> = (0..=10)
                .map(|_| (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            // The tracking term is quadratic, so the central difference is exact.
            let eps = 1e-3;
            let plus: Vec<Vec<f64>> = delta
                .iter()
                .map(|d| d.iter().map(|v| eps * v).collect())
                .collect();
            let minus: Vec<Vec<f64>> = delta
                .iter()
                .map(|d| d.iter().map(|v| -eps * v).collect())
                .collect();
            let jp = p.tracking(
                &p.march_with_sources(Some(&plus)).unwrap(),
                &target,
                nu2,
                &w,
            );
            let jm = p.tracking(
                &p.march_with_sources(Some(&minus)).unwrap(),
                &target,
                nu2,
                &w,
            );
            let fd = (jp - jm) / (2.0 * eps);
            let predicted: f64 = -(1..=10)
                .map(|n| {
                    delta[n]
                        .iter()
                        .zip(&z.fields[n])
                        .enumerate()
                        .filter(|(i, _)| p.dofs().is_free(*i))
                        .map(|(_, (d, zz))| d * zz)
                        .sum::<f64>()
                })
                .sum::<f64>();
            assert!(
                (fd - predicted).abs() <= 1e-8 * fd.abs().max(predicted.abs()),
                "fd {fd} adjoint {predicted}"
            );
        }
    }
}
