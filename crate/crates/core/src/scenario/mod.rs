//! Scenario configuration files and the experiment drivers built on them.
//!
//! A scenario is a TOML document with the sections `[geometry]`,
//! `[material]`, `[objective]`, `[measurements]`, `[optimizer]`, `[solver]`,
//! `[output]`, `[check]` and `[bench]`. Every key has a default, so an empty
//! file is a valid (if uninteresting) scenario. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fem::{
    diffusion_stiffness, elasticity_stiffness, mass_matrix, BoundaryCondition,
    BoundaryConditionSet, MaterialCoefficients,
};
use crate::measurements::{synthesize_measurements, MeasurementSet, RbfField, RbfSettings};
use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
use crate::mesh::io::read_mesh;
use crate::mesh::{discrete_mean_curvature, Point, SimplicialMeshHierarchy};
use crate::multigrid::{MgSolver, SmootherSettings, SolverOptions};
use crate::optimizer::{
    Optimizer, OptimizerSettings, RegularizationSchedule, RunResult, SafeguardSettings, StepMode,
    StepObserver,
};
use crate::physics::{diffusion_bcs, step_count, MeasurementMode};
use crate::shape_calculus::{
    assemble_dj3, random_interface_field, taylor_check, ObjectiveSpec, PerimeterForm, ShapeProblem,
    TaylorReport, TrackingTarget,
};
use crate::steklov::MetricParameters;

/// Inclusion boundary curve.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Circle {
        radius: f64,
    },
    Star {
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
    Square {
        half_side: f64,
    },
    Polygon {
        radius: f64,
        sides: u32,
        #[serde(default)]
        phase: f64,
    },
}

impl ShapeConfig {
    pub fn shape(&self) -> InclusionShape {
        match *self {
            ShapeConfig::Circle { radius } => InclusionShape::Circle { radius },
            ShapeConfig::Star {
                radius,
                amplitude,
                lobes,
            } => InclusionShape::Star {
                radius,
                amplitude,
                lobes,
            },
            ShapeConfig::Square { half_side } => InclusionShape::Square { half_side },
            ShapeConfig::Polygon {
                radius,
                sides,
                phase,
            } => InclusionShape::Polygon {
                radius,
                sides,
                phase,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Lower corner of one cell.
    pub lower: [f64; 2],
    /// Upper corner of one cell.
    pub upper: [f64; 2],
    pub inclusion: ShapeConfig,
    /// Interface vertices per inclusion on the coarse mesh.
    pub boundary_vertices: usize,
    /// Cells in x and y; each holds one inclusion.
    pub lattice: [usize; 2],
    /// Number of hierarchy levels, coarse mesh included.
    pub levels: usize,
    /// Project refined interface vertices of smooth shapes onto the curve.
    pub snap: bool,
    /// Coarse mesh file used instead of the generator.
    pub mesh_file: Option<PathBuf>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            inclusion: ShapeConfig::Circle { radius: 0.25 },
            boundary_vertices: 32,
            lattice: [1, 1],
            levels: 2,
            snap: true,
            mesh_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    pub k_out: f64,
    pub k_int: f64,
    pub lambda_out: f64,
    pub lambda_int: f64,
    pub mu_out: f64,
    pub mu_int: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            k_out: 1.0,
            k_int: 0.001,
            lambda_out: 1.0,
            lambda_int: 0.5,
            mu_out: 1.0,
            mu_int: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    Integral,
    #[default]
    Instants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterFormConfig {
    #[default]
    Surface,
    Volume,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
    /// Traction on the top face, one entry per coordinate.
    pub traction: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub mode: ModeConfig,
    /// Measurement times for `mode = "instants"`.
    pub instants: Vec<f64>,
    pub perimeter_form: PerimeterFormConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let s = ObjectiveSpec::default();
        ObjectiveConfig {
            nu1: s.nu1,
            nu2: s.nu2,
            nu3: s.nu3,
            nu4: s.nu4,
            traction: vec![0.0, -1.0],
            dt: s.dt,
            horizon: s.horizon,
            mode: ModeConfig::Instants,
            instants: vec![7.5, 15.0],
            perimeter_form: PerimeterFormConfig::Surface,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementsConfig {
    /// Geometry generating synthetic data; `None` uses the initial geometry.
    pub target: Option<ShapeConfig>,
    /// RBF field files, one per measured step in increasing order; overrides `target`.
    pub files: Vec<PathBuf>,
    pub centers_per_axis: usize,
    /// Gaussian shape parameter; default from the center spacing.
    pub epsilon: Option<f64>,
    pub ridge: f64,
}

impl Default for MeasurementsConfig {
    fn default() -> Self {
        let r = RbfSettings::default();
        MeasurementsConfig {
            target: None,
            files: Vec::new(),
            centers_per_axis: r.centers_per_axis,
            epsilon: r.epsilon,
            ridge: r.ridge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepModeConfig {
    #[default]
    GradientDescent,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub mode: StepModeConfig,
    pub memory: usize,
    pub max_iterations: usize,
    /// Relative stopping tolerance on the gradient norm.
    pub gs_tolerance: f64,
    pub gs_absolute: f64,
    /// Armijo constant; zero accepts every valid step.
    pub armijo: f64,
    pub max_scale: f64,
    pub gamma: f64,
    pub beta: f64,
    pub max_backtracks: usize,
    /// Last iteration using `nu4`; afterwards `nu4_after` applies.
    pub nu4_switch_iteration: Option<usize>,
    pub nu4_after: f64,
    pub curvature_adaptive: bool,
    pub reference_width: Option<f64>,
    /// Lamé parameters of the deformation metric.
    pub metric_lambda: f64,
    pub metric_mu: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizerSettings::default();
        OptimizerConfig {
            mode: StepModeConfig::GradientDescent,
            memory: o.memory,
            max_iterations: o.max_iterations,
            gs_tolerance: o.gs_tolerance,
            gs_absolute: o.gs_absolute,
            armijo: o.armijo.unwrap_or(0.0),
            max_scale: o.max_scale,
            gamma: o.safeguard.gamma,
            beta: o.safeguard.beta,
            max_backtracks: o.safeguard.max_backtracks,
            nu4_switch_iteration: None,
            nu4_after: 0.0,
            curvature_adaptive: false,
            reference_width: None,
            metric_lambda: o.metric.lambda,
            metric_mu: o.metric.mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub max_iter: usize,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        SolverConfig {
            rtol: s.rtol,
            max_iter: s.max_iter,
            pre_sweeps: s.smoother.pre_sweeps,
            post_sweeps: s.smoother.post_sweeps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Write a VTK file after every accepted step.
    pub vtk_every_iteration: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub seed: u64,
    /// Random directions per objective term.
    pub directions: usize,
    /// Decreasing perturbation sizes.
    pub steps: Vec<f64>,
    pub min_order: f64,
    /// Largest vertex move at the first step, relative to the shortest edge.
    pub amplitude: f64,
    /// Factor applied to every assembled load; anything but one corrupts it.
    pub corrupt: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 1,
            directions: 5,
            steps: vec![1e-2, 1e-3, 1e-4],
            min_order: 0.9,
            amplitude: 0.2,
            corrupt: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BenchProblem {
    #[default]
    Poisson,
    Diffusion,
    Elasticity,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub problem: BenchProblem,
    pub min_level: usize,
    pub max_level: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            problem: BenchProblem::Poisson,
            min_level: 3,
            max_level: 6,
        }
    }
}

/// A complete scenario.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub objective: ObjectiveConfig,
    pub measurements: MeasurementsConfig,
    pub optimizer: OptimizerConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    pub check: CheckConfig,
    pub bench: BenchConfig,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must be positive")))
    }
}

impl ScenarioConfig {
    /// Parse and validate a TOML document. Relative file paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Some(p) = cfg.geometry.mesh_file.as_mut() {
                resolve(p);
            }
            cfg.measurements.files.iter_mut().for_each(resolve);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent())
    }

    /// Check ranges, consistency and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.levels == 0 {
            return Err(Error::Config("geometry.levels must be at least 1".into()));
        }
        if !(g.lower[0] < g.upper[0] && g.lower[1] < g.upper[1]) {
            return Err(Error::Config(
                "geometry.lower must lie below geometry.upper".into(),
            ));
        }
        if g.lattice.contains(&0) {
            return Err(Error::Config(
                "geometry.lattice needs at least one cell per direction".into(),
            ));
        }
        if g.boundary_vertices < 8 || !g.boundary_vertices.is_multiple_of(4) {
            return Err(Error::Config(
                "geometry.boundary_vertices must be a multiple of 4, at least 8".into(),
            ));
        }
        for file in g.mesh_file.iter().chain(&self.measurements.files) {
            if !file.is_file() {
                return Err(Error::Config(format!(
                    "referenced file {} does not exist",
                    file.display()
                )));
            }
        }
        let m = &self.material;
        for (name, v) in [
            ("k_out", m.k_out),
            ("k_int", m.k_int),
            ("mu_out", m.mu_out),
            ("mu_int", m.mu_int),
        ] {
            positive(&format!("material.{name}"), v)?;
        }
        if m.lambda_out < 0.0 || m.lambda_int < 0.0 {
            return Err(Error::Config("material lambda must be non-negative".into()));
        }
        let o = &self.objective;
        if o.traction.len() != 2 {
            return Err(Error::Config("objective.traction needs two entries".into()));
        }
        positive("objective.dt", o.dt)?;
        positive("objective.horizon", o.horizon)?;
        step_count(o.dt, o.horizon).map_err(|e| Error::Config(e.to_string()))?;
        let mut spec = self.objective_spec_without_target();
        if spec.nu2 > 0.0 {
            spec.target = Some(TrackingTarget::Nodal(crate::physics::TransientTrajectory {
                dt: o.dt,
                fields: Vec::new(),
            }));
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        let ms = &self.measurements;
        if ms.centers_per_axis < 2 {
            return Err(Error::Config(
                "measurements.centers_per_axis must be at least 2".into(),
            ));
        }
        if ms.ridge < 0.0 {
            return Err(Error::Config(
                "measurements.ridge must be non-negative".into(),
            ));
        }
        if let Some(e) = ms.epsilon {
            positive("measurements.epsilon", e)?;
        }
        let op = &self.optimizer;
        if op.mode == StepModeConfig::Lbfgs && op.memory == 0 {
            return Err(Error::Config(
                "optimizer.memory must be at least 1 for L-BFGS".into(),
            ));
        }
        positive("optimizer.gamma", op.gamma)?;
        positive("optimizer.max_scale", op.max_scale)?;
        positive("optimizer.metric_lambda", op.metric_lambda + op.metric_mu)?;
        positive("optimizer.metric_mu", op.metric_mu)?;
        if !(op.beta > 0.0 && op.beta < 1.0) {
            return Err(Error::Config("optimizer.beta must lie in (0, 1)".into()));
        }
        if op.armijo < 0.0 || op.armijo >= 1.0 || op.gs_tolerance < 0.0 || op.gs_absolute < 0.0 {
            return Err(Error::Config(
                "optimizer tolerances must be non-negative and armijo below one".into(),
            ));
        }
        if op.nu4_after < 0.0 {
            return Err(Error::Config(
                "optimizer.nu4_after must be non-negative".into(),
            ));
        }
        positive("solver.rtol", self.solver.rtol)?;
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        let c = &self.check;
        if c.steps.is_empty()
            || c.steps.windows(2).any(|w| w[1] >= w[0])
            || c.steps.iter().any(|&t| t <= 0.0)
        {
            return Err(Error::Config(
                "check.steps must be positive and strictly decreasing".into(),
            ));
        }
        positive("check.amplitude", c.amplitude)?;
        let b = &self.bench;
        if b.min_level == 0 || b.min_level > b.max_level {
            return Err(Error::Config(
                "bench levels must satisfy 1 <= min_level <= max_level".into(),
            ));
        }
        Ok(())
    }

    /// Levels of at least two are needed to optimize or check gradients.
    pub fn require_hierarchy(&self) -> Result<()> {
        if self.geometry.levels < 2 {
            return Err(Error::Config("geometry.levels must be at least 2".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> MaterialCoefficients {
        let m = self.material;
        MaterialCoefficients {
            k_out: m.k_out,
            k_int: m.k_int,
            lambda_out: m.lambda_out,
            lambda_int: m.lambda_int,
            mu_out: m.mu_out,
            mu_int: m.mu_int,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = self.solver;
        SolverOptions {
            rtol: s.rtol,
            max_iter: s.max_iter,
            smoother: SmootherSettings {
                pre_sweeps: s.pre_sweeps,
                post_sweeps: s.post_sweeps,
            },
        }
    }

    pub fn measurement_mode(&self) -> MeasurementMode {
        match self.objective.mode {
            ModeConfig::Integral => MeasurementMode::Integral,
            ModeConfig::Instants => MeasurementMode::Instants(self.objective.instants.clone()),
        }
    }

    fn mesh_spec(&self, shape: ShapeConfig) -> InclusionMeshSpec {
        let g = &self.geometry;
        InclusionMeshSpec {
            lower: g.lower,
            upper: g.upper,
            center: [
                0.5 * (g.lower[0] + g.upper[0]),
                0.5 * (g.lower[1] + g.upper[1]),
            ],
            shape: shape.shape(),
            boundary_vertices: g.boundary_vertices,
        }
    }

    /// Hierarchy with `levels` levels of the given inclusion shape.
    pub fn build_mesh_with(
        &self,
        shape: ShapeConfig,
        levels: usize,
    ) -> Result<SimplicialMeshHierarchy> {
        let g = &self.geometry;
        if let Some(path) = &g.mesh_file {
            let file = std::fs::File::open(path)?;
            let coarse = read_mesh(std::io::BufReader::new(file))?;
            return SimplicialMeshHierarchy::new(coarse, levels, None);
        }
        let spec = self.mesh_spec(shape);
        if g.lattice == [1, 1] {
            if g.snap {
                return spec.hierarchy(levels);
            }
            return SimplicialMeshHierarchy::new(generate::inclusion_mesh_2d(&spec)?, levels, None);
        }
        let coarse = generate::lattice_2d(&spec, g.lattice[0], g.lattice[1])?;
        if !(g.snap && spec.shape.is_smooth()) {
            return SimplicialMeshHierarchy::new(coarse, levels, None);
        }
        let w = [g.upper[0] - g.lower[0], g.upper[1] - g.lower[1]];
        let shape = spec.shape;
        let snap = move |p: &Point| {
            let i = (((p[0] - g.lower[0]) / w[0]).floor().max(0.0) as usize).min(g.lattice[0] - 1);
            let j = (((p[1] - g.lower[1]) / w[1]).floor().max(0.0) as usize).min(g.lattice[1] - 1);
            let c = [
                spec.center[0] + i as f64 * w[0],
                spec.center[1] + j as f64 * w[1],
                0.0,
            ];
            shape.project(&c, p)
        };
        SimplicialMeshHierarchy::new(coarse, levels, Some(&snap))
    }

    pub fn build_mesh(&self) -> Result<SimplicialMeshHierarchy> {
        self.build_mesh_with(self.geometry.inclusion, self.geometry.levels)
    }

    fn objective_spec_without_target(&self) -> ObjectiveSpec {
        let o = &self.objective;
        ObjectiveSpec {
            nu1: o.nu1,
            nu2: o.nu2,
            nu3: o.nu3,
            nu4: o.nu4,
            traction: [
                o.traction.first().copied().unwrap_or(0.0),
                o.traction.get(1).copied().unwrap_or(0.0),
                0.0,
            ],
            dt: o.dt,
            horizon: o.horizon,
            mode: self.measurement_mode(),
            target: None,
            perimeter_form: match o.perimeter_form {
                PerimeterFormConfig::Surface => PerimeterForm::Surface,
                PerimeterFormConfig::Volume => PerimeterForm::Volume,
            },
        }
    }

    /// Measurement data: read from files or synthesized on the target geometry.
    pub fn measurement_set(&self, initial: &SimplicialMeshHierarchy) -> Result<MeasurementSet> {
        let o = &self.objective;
        let steps = step_count(o.dt, o.horizon)?;
        let mode = self.measurement_mode();
        let ms = &self.measurements;
        if !ms.files.is_empty() {
            let active = mode.active_steps(o.dt, steps)?;
            if active.len() != ms.files.len() {
                return Err(Error::Config(format!(
                    "{} measurement files given for {} measured steps",
                    ms.files.len(),
                    active.len()
                )));
            }
            let mut fields = Vec::new();
            for (step, path) in active.into_iter().zip(&ms.files) {
                let file = std::fs::File::open(path)?;
                fields.push((step, RbfField::read(std::io::BufReader::new(file))?));
            }
            return Ok(MeasurementSet {
                dt: o.dt,
                steps,
                fields,
            });
        }
        let settings = RbfSettings {
            centers_per_axis: ms.centers_per_axis,
            epsilon: ms.epsilon,
            ridge: ms.ridge,
        };
        let target = match ms.target {
            Some(shape) => self.build_mesh_with(shape, self.geometry.levels)?,
            None => initial.clone(),
        };
        synthesize_measurements(
            &target,
            &self.coefficients(),
            o.dt,
            o.horizon,
            &mode,
            &self.solver_options(),
            &settings,
        )
    }

    /// Objective with measurement data attached when tracking is active.
    pub fn objective_spec(&self, initial: &SimplicialMeshHierarchy) -> Result<ObjectiveSpec> {
        let mut spec = self.objective_spec_without_target();
        if spec.nu2 > 0.0 {
            spec.target = Some(TrackingTarget::Measured(self.measurement_set(initial)?));
        }
        Ok(spec)
    }

    pub fn build_problem(&self, initial: &SimplicialMeshHierarchy) -> Result<ShapeProblem> {
        ShapeProblem::new(
            self.coefficients(),
            self.objective_spec(initial)?,
            self.solver_options(),
        )
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        let o = &self.optimizer;
        OptimizerSettings {
            mode: match o.mode {
                StepModeConfig::GradientDescent => StepMode::GradientDescent,
                StepModeConfig::Lbfgs => StepMode::Lbfgs,
            },
            memory: o.memory,
            max_iterations: o.max_iterations,
            gs_tolerance: o.gs_tolerance,
            gs_absolute: o.gs_absolute,
            armijo: (o.armijo > 0.0).then_some(o.armijo),
            max_scale: o.max_scale,
            safeguard: SafeguardSettings {
                gamma: o.gamma,
                beta: o.beta,
                max_backtracks: o.max_backtracks,
            },
            schedule: o
                .nu4_switch_iteration
                .map(|switch_iteration| RegularizationSchedule {
                    nu4_initial: self.objective.nu4,
                    switch_iteration,
                    nu4_after: o.nu4_after,
                }),
            curvature_adaptive: o.curvature_adaptive,
            reference_width: o.reference_width,
            metric: MetricParameters {
                lambda: o.metric_lambda,
                mu: o.metric_mu,
            },
        }
    }
}

/// One Taylor test of one objective term along one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckRow {
    /// 1-based term index.
    pub term: usize,
    pub direction: usize,
    pub report: TaylorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub rows: Vec<GradientCheckRow>,
}

impl GradientCheck {
    /// True when every row passed; vacuously true without active terms.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.report.passed)
    }
}

/// Compare the assembled load of every active term with finite differences.
pub fn check_gradient(cfg: &ScenarioConfig) -> Result<GradientCheck> {
    cfg.require_hierarchy()?;
    let mesh = cfg.build_mesh()?;
    let problem = cfg.build_problem(&mesh)?;
    let c = &cfg.check;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let amplitude = c.amplitude * mesh.finest().min_edge_length() / c.steps[0];
    let mut rows = Vec::new();
    for term in 0..4 {
        if problem.spec.weights()[term] == 0.0 {
            continue;
        }
        let single = problem.with_spec(problem.spec.only(term));
        let (_, mut load) = single.gradient(&mesh)?;
        load.values.iter_mut().for_each(|v| *v *= c.corrupt);
        let evaluate = |m: &SimplicialMeshHierarchy| single.objective(m).map(|v| v.total());
        for direction in 0..c.directions {
            let field = random_interface_field(mesh.finest(), &mut rng, amplitude);
            let report = taylor_check(
                &evaluate,
                &mesh,
                &field,
                load.apply(&field),
                &c.steps,
                c.min_order,
            )?;
            rows.push(GradientCheckRow {
                term: term + 1,
                direction,
                report,
            });
        }
    }
    Ok(GradientCheck { rows })
}

/// Largest curvature per level and the fitted log-log slope against the mesh width.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureStudy {
    /// `(level, mesh width, max |κ|)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub slope: Option<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn curvature_study(cfg: &ScenarioConfig) -> Result<CurvatureStudy> {
    let mesh = cfg.build_mesh()?;
    let mut rows = Vec::new();
    for (l, level) in mesh.levels().iter().enumerate() {
        rows.push((
            l,
            mesh.mesh_width(l),
            discrete_mean_curvature(level)?.max_abs(),
        ));
    }
    let logs =
        |f: fn(&(usize, f64, f64)) -> f64| rows.iter().map(|r| f(r).ln()).collect::<Vec<_>>();
    let slope = fitted_slope(&logs(|r| r.1), &logs(|r| r.2));
    Ok(CurvatureStudy { rows, slope })
}

/// Multigrid-preconditioned CG iterations on one hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    /// Number of levels.
    pub levels: usize,
    pub free_dofs: usize,
    pub iterations: usize,
}

/// Solve the configured model problem for every level count in the bench range.
pub fn mg_bench(cfg: &ScenarioConfig) -> Result<Vec<BenchRow>> {
    let b = cfg.bench;
    let options = cfg.solver_options();
    let mut rows = Vec::new();
    for levels in b.min_level..=b.max_level {
        let mesh = cfg.build_mesh_with(cfg.geometry.inclusion, levels)?;
        let fine = mesh.finest();
        let dim = mesh.dim();
        let (operator, bcs, components, rhs) = match b.problem {
            BenchProblem::Poisson => {
                let k = diffusion_stiffness(fine, &MaterialCoefficients::uniform_lame(1.0, 1.0));
                let rhs = mass_matrix(fine).matvec(&vec![1.0; fine.num_vertices()]);
                (
                    k,
                    BoundaryConditionSet::uniform(dim, BoundaryCondition::Dirichlet([0.0; 3])),
                    1,
                    rhs,
                )
            }
            BenchProblem::Diffusion => {
                let dt = cfg.objective.dt;
                let a = mass_matrix(fine)
                    .add_scaled(dt, &diffusion_stiffness(fine, &cfg.coefficients()));
                let bcs = diffusion_bcs(dim);
                let dofs = crate::fem::DofMap::build(fine, &bcs, 1)?;
                let lift = dofs.expand(&vec![0.0; dofs.num_free()]);
                let rhs: Vec<f64> = a.matvec(&lift).iter().map(|v| -v).collect();
                (a, bcs, 1, rhs)
            }
            BenchProblem::Elasticity => {
                let o = &cfg.optimizer;
                let k = elasticity_stiffness(
                    fine,
                    &MaterialCoefficients::uniform_lame(o.metric_lambda, o.metric_mu),
                );
                let load = assemble_dj3(fine, 1.0);
                (
                    k,
                    BoundaryConditionSet::uniform(dim, BoundaryCondition::SlidingNormal),
                    dim,
                    load.values,
                )
            }
        };
        let (solver, dofs) = MgSolver::for_hierarchy(&mesh, &operator, &bcs, components, &options)?;
        let result = solver.solve(&dofs.restrict(&rhs))?;
        rows.push(BenchRow {
            levels,
            free_dofs: dofs.num_free(),
            iterations: result.iterations,
        });
    }
    Ok(rows)
}

/// Build geometry and problem and run the optimizer, calling `observer` after
/// every accepted step.
pub fn optimize(cfg: &ScenarioConfig, observer: Option<&mut StepObserver>) -> Result<RunResult> {
    cfg.require_hierarchy()?;
    let mesh = cfg.build_mesh()?;
    let problem = cfg.build_problem(&mesh)?;
    let mut opt = Optimizer::new(problem, mesh, cfg.optimizer_settings())?;
    let termination = opt.run(observer)?;
    Ok(RunResult {
        mesh: opt.mesh,
        history: opt.state.history,
        termination,
    })
}
