//! The outer optimization loop.
//!
//! Each iteration solves the states and adjoints, assembles the derivative
//! load, solves the deformation equation for the gradient `U`, builds a search
//! direction (steepest descent `-U` or L-BFGS in the metric `a`) and moves
//! every mesh level along it with a safeguarded, backtracked step.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::SimplicialMeshHierarchy;
use crate::shape_calculus::{ObjectiveValues, ShapeProblem};
use crate::steklov::{gs_norm, DeformationSolver, MetricParameters};

/// Search direction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    GradientDescent,
    Lbfgs,
}

/// Perimeter weight switched to a second value after a number of iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationSchedule {
    pub nu4_initial: f64,
    /// Last iteration (1-based) using `nu4_initial`.
    pub switch_iteration: usize,
    pub nu4_after: f64,
}

impl RegularizationSchedule {
    pub fn nu4_at(&self, iteration: usize) -> f64 {
        if iteration <= self.switch_iteration {
            self.nu4_initial
        } else {
            self.nu4_after
        }
    }
}

/// Step-size safeguard: displacement cap and backtracking factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeguardSettings {
    /// Largest vertex move as a fraction of the shortest incident edge.
    pub gamma: f64,
    /// Backtracking factor.
    pub beta: f64,
    pub max_backtracks: usize,
}

impl Default for SafeguardSettings {
    fn default() -> Self {
        SafeguardSettings {
            gamma: 0.3,
            beta: 0.5,
            max_backtracks: 30,
        }
    }
}

/// Settings of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub mode: StepMode,
    /// Number of stored L-BFGS pairs.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `gs_norm <= gs_tolerance * initial gs_norm`.
    pub gs_tolerance: f64,
    /// Stop when `gs_norm <= gs_absolute`.
    pub gs_absolute: f64,
    /// Armijo constant; `None` accepts any valid step.
    pub armijo: Option<f64>,
    /// Scale tried first before the safeguard caps it.
    pub max_scale: f64,
    pub safeguard: SafeguardSettings,
    pub schedule: Option<RegularizationSchedule>,
    /// Scale the perimeter weight by finest mesh width over `reference_width`.
    pub curvature_adaptive: bool,
    pub reference_width: Option<f64>,
    pub metric: MetricParameters,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            mode: StepMode::GradientDescent,
            memory: 5,
            max_iterations: 50,
            gs_tolerance: 1e-3,
            gs_absolute: 0.0,
            armijo: Some(1e-4),
            max_scale: 1.0,
            safeguard: SafeguardSettings::default(),
            schedule: None,
            curvature_adaptive: false,
            reference_width: None,
            metric: MetricParameters::default(),
        }
    }
}

/// One line of the optimization history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    /// 1-based iteration.
    pub iteration: usize,
    pub values: ObjectiveValues,
    pub gs_norm: f64,
    /// Perimeter weight in effect.
    pub nu4: f64,
    /// Scale of the accepted step, zero if none was taken.
    pub step_scale: f64,
}

pub const HISTORY_HEADER: &str = "iter,J,j1,j2,j3,j4,gs_norm,nu4,step_scale";

/// Write the history as CSV with full precision.
pub fn write_history_csv<W: Write>(rows: &[HistoryRow], mut out: W) -> Result<()> {
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in rows {
        let t = r.values.terms;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.iteration,
            r.values.total(),
            t[0],
            t[1],
            t[2],
            t[3],
            r.gs_norm,
            r.nu4,
            r.step_scale
        )?;
    }
    Ok(())
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No admissible step: every trial inverted an element.
    MeshValidity(String),
    /// No trial step decreased the objective enough.
    LineSearch,
}

/// Largest scale `s0 * beta^k` keeping every vertex move below `gamma` times
/// its shortest incident edge and all simplices positively oriented.
///
/// `s0` moves the largest vertex by `gamma` times the shortest mesh edge; for
/// a zero direction it is one. Returns `None` when no trial is valid.
pub fn safeguard_scale(
    direction: &[f64],
    mesh: &SimplicialMeshHierarchy,
    settings: &SafeguardSettings,
) -> Option<f64> {
    let level = mesh.finest();
    let dim = level.dim();
    let moves: Vec<f64> = direction
        .chunks(dim)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let max_move = moves.iter().copied().fold(0.0, f64::max);
    if max_move == 0.0 {
        return Some(1.0);
    }
    let local = level.vertex_min_edge();
    let mut scale = settings.gamma * level.min_edge_length() / max_move;
    for _ in 0..=settings.max_backtracks {
        let within = moves
            .iter()
            .zip(&local)
            .all(|(m, h)| scale * m <= settings.gamma * h);
        if within && mesh.deform(direction, scale).is_ok() {
            return Some(scale);
        }
        scale *= settings.beta;
    }
    None
}

fn combine(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// L-BFGS memory and history of a run.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub iteration: usize,
    /// Step and gradient-difference pairs, oldest first.
    pub memory: VecDeque<(Vec<f64>, Vec<f64>)>,
    pub history: Vec<HistoryRow>,
    initial_gs: Option<f64>,
    previous: Option<(Vec<f64>, Vec<f64>, f64)>,
}

/// Two-loop recursion applied to `gradient` with inner product `inner`.
///
/// Returns the search direction (already negated).
pub fn lbfgs_direction(
    gradient: &[f64],
    memory: &VecDeque<(Vec<f64>, Vec<f64>)>,
    inner: &dyn Fn(&[f64], &[f64]) -> f64,
) -> Vec<f64> {
    let mut q = gradient.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / inner(s, y);
        let alpha = rho * inner(s, &q);
        q = combine(&q, -alpha, y);
        alphas.push((alpha, rho));
    }
    if let Some((s, y)) = memory.back() {
        let gamma = inner(s, y) / inner(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (alpha, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * inner(y, &q);
        q = combine(&q, alpha - beta, s);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Callback receiving the iteration number and geometry after an accepted step.
pub type StepObserver<'a> = dyn FnMut(usize, &SimplicialMeshHierarchy) + 'a;

/// Result of one loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted,
    Stopped(Termination),
}

/// Optimization driver owning the current geometry.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub problem: ShapeProblem,
    pub settings: OptimizerSettings,
    pub mesh: SimplicialMeshHierarchy,
    pub state: OptimizerState,
    reference_width: f64,
}

impl Optimizer {
    pub fn new(
        problem: ShapeProblem,
        mesh: SimplicialMeshHierarchy,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        if settings.memory == 0 && settings.mode == StepMode::Lbfgs {
            return Err(Error::invalid("L-BFGS needs a memory of at least one pair"));
        }
        let s = &settings.safeguard;
        if !(s.gamma > 0.0 && s.beta > 0.0 && s.beta < 1.0) {
            return Err(Error::invalid("safeguard needs gamma > 0 and 0 < beta < 1"));
        }
        let reference_width = settings
            .reference_width
            .unwrap_or_else(|| mesh.mesh_width(mesh.num_levels() - 1));
        Ok(Optimizer {
            problem,
            settings,
            mesh,
            state: OptimizerState::default(),
            reference_width,
        })
    }

    fn nu4_for(&self, iteration: usize) -> f64 {
        let base = self
            .settings
            .schedule
            .map_or(self.problem.spec.nu4, |s| s.nu4_at(iteration));
        if self.settings.curvature_adaptive {
            base * self.mesh.mesh_width(self.mesh.num_levels() - 1) / self.reference_width
        } else {
            base
        }
    }

    /// One loop iteration.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let iteration = self.state.iteration + 1;
        let nu4 = self.nu4_for(iteration);
        let switched = self.state.history.last().is_some_and(|r| r.nu4 != nu4);
        let mut spec = self.problem.spec.clone();
        spec.nu4 = nu4;
        let problem = self.problem.with_spec(spec);
        let (values, load) = problem.gradient(&self.mesh)?;
        let metric = DeformationSolver::new(&self.mesh, self.settings.metric, &problem.solver)?;
        let field = metric.solve(&[&load])?;
        let gs = gs_norm(&field);
        let initial = *self.state.initial_gs.get_or_insert(gs);
        self.state.iteration = iteration;
        let mut row = HistoryRow {
            iteration,
            values,
            gs_norm: gs,
            nu4,
            step_scale: 0.0,
        };
        if gs <= self.settings.gs_absolute || gs <= self.settings.gs_tolerance * initial {
            self.state.history.push(row);
            return Ok(StepOutcome::Stopped(Termination::Converged));
        }

        let inner = |a: &[f64], b: &[f64]| metric.gs_inner(a, b);
        if let Some((step, grad, _)) = self.state.previous.take() {
            let diff = combine(&field.values, -1.0, &grad);
            if !switched && inner(&step, &diff) > 0.0 {
                self.state.memory.push_back((step, diff));
                while self.state.memory.len() > self.settings.memory {
                    self.state.memory.pop_front();
                }
            }
        }
        let mut direction = match self.settings.mode {
            StepMode::GradientDescent => field.values.iter().map(|v| -v).collect(),
            StepMode::Lbfgs => lbfgs_direction(&field.values, &self.state.memory, &inner),
        };
        let mut slope = inner(&field.values, &direction);
        if slope >= 0.0 {
            self.state.memory.clear();
            direction = field.values.iter().map(|v| -v).collect();
            slope = -field.energy;
        }

        let Some(cap) = safeguard_scale(&direction, &self.mesh, &self.settings.safeguard) else {
            self.state.history.push(row);
            return Ok(StepOutcome::Stopped(Termination::MeshValidity(format!(
                "no valid deformation along the search direction at iteration {iteration}"
            ))));
        };
        let mut scale = cap.min(self.settings.max_scale);
        let current = values.total();
        for _ in 0..=self.settings.safeguard.max_backtracks {
            let trial = match self.mesh.deform(&direction, scale) {
                Ok(m) => m,
                Err(Error::MeshValidity(_)) => {
                    scale *= self.settings.safeguard.beta;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let accept = match self.settings.armijo {
                None => true,
                Some(c) => problem.objective(&trial)?.total() <= current + c * scale * slope,
            };
            if accept {
                row.step_scale = scale;
                self.state.history.push(row);
                let step: Vec<f64> = direction.iter().map(|d| scale * d).collect();
                self.state.previous = Some((step, field.values, gs));
                self.mesh = trial;
                return Ok(StepOutcome::Accepted);
            }
            scale *= self.settings.safeguard.beta;
        }
        self.state.history.push(row);
        Ok(StepOutcome::Stopped(Termination::LineSearch))
    }

    /// Iterate until convergence, a stop condition or the iteration limit.
    ///
    /// `observer` sees the geometry after every accepted step.
    pub fn run(&mut self, mut observer: Option<&mut StepObserver>) -> Result<Termination> {
        while self.state.iteration < self.settings.max_iterations {
            match self.step()? {
                StepOutcome::Accepted => {
                    if let Some(f) = observer.as_mut() {
                        f(self.state.iteration, &self.mesh);
                    }
                }
                StepOutcome::Stopped(t) => return Ok(t),
            }
        }
        Ok(Termination::MaxIterations)
    }
}

/// Final geometry, history and stop reason of a run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub mesh: SimplicialMeshHierarchy,
    pub history: Vec<HistoryRow>,
    pub termination: Termination,
}

/// Run an optimization from `mesh`.
pub fn run(
    problem: ShapeProblem,
    mesh: SimplicialMeshHierarchy,
    settings: OptimizerSettings,
) -> Result<RunResult> {
    let mut opt = Optimizer::new(problem, mesh, settings)?;
    let termination = opt.run(None)?;
    Ok(RunResult {
        mesh: opt.mesh,
        history: opt.state.history,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::MaterialCoefficients;
    use crate::mesh::generate::{InclusionMeshSpec, InclusionShape};
    use crate::multigrid::SolverOptions;
    use crate::shape_calculus::ObjectiveSpec;

    fn mesh() -> SimplicialMeshHierarchy {
        InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: 0.2 }, 24)
            .hierarchy(2)
            .unwrap()
    }

    fn problem(spec: ObjectiveSpec) -> ShapeProblem {
        let c = MaterialCoefficients {
            k_out: 1.0,
            k_int: 0.001,
            ..MaterialCoefficients::uniform_lame(0.01, 0.1)
        };
        ShapeProblem::new(c, spec, SolverOptions::default()).unwrap()
    }

    #[test]
    fn schedule_switches_once() {
        let s = RegularizationSchedule {
            nu4_initial: 0.01,
            switch_iteration: 10,
            nu4_after: 0.0,
        };
        assert_eq!(s.nu4_at(1), 0.01);
        assert_eq!(s.nu4_at(10), 0.01);
        assert_eq!(s.nu4_at(11), 0.0);
        assert_eq!(s.nu4_at(50), 0.0);
    }

    #[test]
    fn zero_direction_keeps_s0() {
        let m = mesh();
        let d = vec![0.0; m.finest().num_vertices() * 2];
        assert_eq!(
            safeguard_scale(&d, &m, &SafeguardSettings::default()),
            Some(1.0)
        );
    }

    #[test]
    fn safeguard_prevents_inversion() {
        let m = mesh();
        let level = m.finest();
        // Push one interior vertex across its neighbors.
        let v = level.interface_vertices()[0];
        let mut d = vec![0.0; level.num_vertices() * 2];
        d[2 * v] = 5.0 * level.max_edge_length();
        assert!(m.deform(&d, 1.0).is_err());
        let s = safeguard_scale(&d, &m, &SafeguardSettings::default()).unwrap();
        assert!(s < 1.0);
        assert!(m.deform(&d, s).is_ok());
    }

    #[test]
    fn safeguard_scales_inversely() {
        let m = mesh();
        let level = m.finest();
        let d: Vec<f64> = level
            .coords()
            .iter()
            .flat_map(|p| [(3.0 * p[1]).sin() * 0.01, (2.0 * p[0]).cos() * 0.01])
            .collect();
        let d2: Vec<f64> = d.iter().map(|x| 2.0 * x).collect();
        let g = SafeguardSettings::default();
        let (s1, s2) = (
            safeguard_scale(&d, &m, &g).unwrap(),
            safeguard_scale(&d2, &m, &g).unwrap(),
        );
        let ratio = s1 / s2;
        assert!((1.0..=4.0 + 1e-12).contains(&ratio), "ratio {ratio}");
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_memory_gives_steepest_descent() {
        let g = vec![1.0, -2.0, 0.5];
        let d = lbfgs_direction(&g, &VecDeque::new(), &|a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| x * y).sum()
        });
        assert_eq!(d, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn lbfgs_recovers_quadratic_newton_step() {
        // Two conjugate pairs of a 2x2 SPD Hessian give the Newton direction.
        let h = [[3.0, 1.0], [1.0, 2.0]];
        let apply = |v: &[f64]| {
            vec![
                h[0][0] * v[0] + h[0][1] * v[1],
                h[1][0] * v[0] + h[1][1] * v[1],
            ]
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut mem = VecDeque::new();
        for s in [vec![1.0, 0.0], vec![1.0, -3.0]] {
            let y = apply(&s);
            mem.push_back((s, y));
        }
        let g = vec![1.0, 1.0];
        let d = lbfgs_direction(&g, &mem, &dot);
        let back = apply(&d);
        assert!((back[0] + 1.0).abs() < 1e-12 && (back[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_converges_immediately() {
        let m = mesh();
        let result = run(
            problem(ObjectiveSpec::zero()),
            m.clone(),
            OptimizerSettings::default(),
        )
        .unwrap();
        assert_eq!(result.termination, Termination::Converged);
        assert_eq!(result.history.len(), 1);
        assert_eq!(result.mesh.finest().coords(), m.finest().coords());
    }

    #[test]
    fn history_csv_layout() {
        let row = HistoryRow {
            iteration: 3,
            values: ObjectiveValues {
                terms: [1.0, 2.0, 0.5, 0.25],
            },
            gs_norm: 0.1,
            nu4: 0.01,
            step_scale: 0.5,
        };
        let mut buf = Vec::new();
        write_history_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HISTORY_HEADER);
        let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields, vec![3.0, 3.75, 1.0, 2.0, 0.5, 0.25, 0.1, 0.01, 0.5]);
    }

    #[test]
    fn geometric_problem_decreases_objective() {
        let m = InclusionMeshSpec::unit_box(
            InclusionShape::Star {
                radius: 0.2,
                amplitude: 0.2,
                lobes: 5,
            },
            24,
        )
        .hierarchy(2)
        .unwrap();
        let spec = ObjectiveSpec {
            nu3: 4.0,
            nu4: 1.0,
            perimeter_form: crate::shape_calculus::PerimeterForm::Volume,
            ..ObjectiveSpec::zero()
        };
        let settings = OptimizerSettings {
            max_iterations: 8,
            ..Default::default()
        };
        let result = run(problem(spec), m, settings).unwrap();
        let j: Vec<f64> = result.history.iter().map(|r| r.values.total()).collect();
        assert!(j.windows(2).all(|w| w[1] < w[0]), "{j:?}");
    }
}
