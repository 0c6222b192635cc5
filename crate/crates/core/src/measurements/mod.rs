//! Gaussian radial basis function fields for measurement data.
//!
//! A field is `x -> sum_j w_j exp(-eps^2 |x - c_j|^2)`. It lives in space,
//! independent of any mesh, so it can be evaluated on a moving geometry.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::MaterialCoefficients;
use crate::mesh::geometry::Point;
use crate::mesh::SimplicialMeshHierarchy;
use crate::multigrid::SolverOptions;
use crate::physics::{DiffusionProblem, MeasurementMode};

/// Condition number above which an unregularized fit is rejected.
const MAX_CONDITION: f64 = 1e14;

/// Sum of Gaussians with a common width.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfField {
    pub dim: usize,
    pub centers: Vec<Point>,
    /// Shape parameter in inverse length units.
    pub epsilon: f64,
    pub weights: Vec<f64>,
    /// RMS misfit at the fitted samples, if the field was fitted.
    pub rms_residual: Option<f64>,
}

fn squared_distance(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

impl RbfField {
    pub fn eval(&self, x: &Point) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * (-e2 * squared_distance(x, c)).exp())
            .sum()
    }

    pub fn eval_many(&self, points: &[Point]) -> Vec<f64> {
        points.iter().map(|p| self.eval(p)).collect()
    }

    pub fn gradient(&self, x: &Point) -> Point {
        let e2 = self.epsilon * self.epsilon;
        let mut g = [0.0; 3];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let s = -2.0 * e2 * w * (-e2 * squared_distance(x, c)).exp();
            for k in 0..self.dim {
                g[k] += s * (x[k] - c[k]);
            }
        }
        g
    }

    /// ASCII form: `n eps`, then one line `c_x c_y [c_z] w` per center.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {:e}", self.centers.len(), self.epsilon)?;
        for (c, w) in self.centers.iter().zip(&self.weights) {
            for x in &c[..self.dim] {
                write!(out, "{x:e} ")?;
            }
            writeln!(out, "{w:e}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let parse = |line: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("bad number `{tok}`: {e}"),
            })
        };
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let header = header?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: hl,
                message: "header must be `n epsilon`".into(),
            });
        }
        let n: usize = tokens[0].parse().map_err(|_| Error::Parse {
            line: hl,
            message: format!("bad center count `{}`", tokens[0]),
        })?;
        let epsilon = parse(hl, tokens[1])?;
        if !(epsilon > 0.0) {
            return Err(Error::Parse {
                line: hl,
                message: "epsilon must be positive".into(),
            });
        }
        let mut centers = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut dim = 0;
        for _ in 0..n {
            let (ln, line) = lines.next().ok_or(Error::Parse {
                line: hl + n,
                message: "too few centers".into(),
            })?;
            let line = line?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| parse(ln, t))
                .collect::<Result<_>>()?;
            let d = vals.len().wrapping_sub(1);
            if !(d == 2 || d == 3) || (dim != 0 && d != dim) {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected 3 or 4 columns, got {}", vals.len()),
                });
            }
            dim = d;
            let mut c = [0.0; 3];
            c[..d].copy_from_slice(&vals[..d]);
            centers.push(c);
            weights.push(vals[d]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln,
                message: "trailing data after the last center".into(),
            });
        }
        Ok(RbfField {
            dim: dim.max(2),
            centers,
            epsilon,
            weights,
            rms_residual: None,
        })
    }
}

/// Regular lattice of `per_axis^dim` centers spanning the box.
pub fn lattice_centers(lower: &Point, upper: &Point, dim: usize, per_axis: usize) -> Vec<Point> {
    let coord = |k: usize, i: usize| {
        if per_axis == 1 {
            0.5 * (lower[k] + upper[k])
        } else {
            lower[k] + (upper[k] - lower[k]) * i as f64 / (per_axis - 1) as f64
        }
    };
    let mut out = Vec::new();
    let nz = if dim == 3 { per_axis } else { 1 };
    for iz in 0..nz {
        for iy in 0..per_axis {
            for ix in 0..per_axis {
                out.push([
                    coord(0, ix),
                    coord(1, iy),
                    if dim == 3 { coord(2, iz) } else { 0.0 },
                ]);
            }
        }
    }
    out
}

/// Width at which neighbors `spacing` apart overlap at half height.
pub fn default_epsilon(spacing: f64) -> f64 {
    std::f64::consts::LN_2.sqrt() / spacing
}

/// Least-squares fit of the weights.
///
/// The normal equations get `ridge * max diag` added to their diagonal. With
/// `ridge = 0` the fit is rejected when the condition number exceeds 1e14.
pub fn fit_rbf(
    dim: usize,
    points: &[Point],
    values: &[f64],
    centers: &[Point],
    epsilon: f64,
    ridge: f64,
) -> Result<RbfField> {
    if points.len() != values.len() {
        return Err(Error::invalid(format!(
            "{} sample points but {} values",
            points.len(),
            values.len()
        )));
    }
    if centers.is_empty() || points.is_empty() {
        return Err(Error::invalid(
            "fit needs at least one center and one sample",
        ));
    }
    if !(epsilon > 0.0) || !(ridge >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon {epsilon} must be positive and ridge {ridge} non-negative"
        )));
    }
    for i in 0..centers.len() {
        for j in 0..i {
            if squared_distance(&centers[i], &centers[j]) == 0.0 {
                return Err(Error::invalid(format!("centers {j} and {i} coincide")));
            }
        }
    }
    let e2 = epsilon * epsilon;
    let phi = DMatrix::from_fn(points.len(), centers.len(), |i, j| {
        (-e2 * squared_distance(&points[i], &centers[j])).exp()
    });
    let mut normal = phi.tr_mul(&phi);
    let rhs = phi.tr_mul(&DVector::from_column_slice(values));
    if ridge == 0.0 {
        let eig = SymmetricEigen::new(normal.clone()).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v.abs()))
        });
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if cond > MAX_CONDITION {
            return Err(Error::IllConditioned(format!(
                "RBF normal equations have condition {cond:.3e}; use a ridge or fewer centers"
            )));
        }
    } else {
        let shift = ridge * normal.diagonal().max();
        for i in 0..normal.nrows() {
            normal[(i, i)] += shift;
        }
    }
    let chol = normal.cholesky().ok_or_else(|| {
        Error::IllConditioned("RBF normal equations are not positive definite".into())
    })?;
    let weights: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    let mut field = RbfField {
        dim,
        centers: centers.to_vec(),
        epsilon,
        weights,
        rms_residual: None,
    };
    field.rms_residual = Some(rms_misfit(&field, points, values));
    Ok(field)
}

/// RMS of `field - values` at `points`.
pub fn rms_misfit(field: &RbfField, points: &[Point], values: &[f64]) -> f64 {
    let sum: f64 = points
        .iter()
        .zip(values)
        .map(|(p, v)| (field.eval(p) - v).powi(2))
        .sum();
    (sum / points.len().max(1) as f64).sqrt()
}

/// Center lattice, width and ridge used for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfSettings {
    pub centers_per_axis: usize,
    /// Width; `None` picks half-height overlap of lattice neighbors.
    pub epsilon: Option<f64>,
    pub ridge: f64,
}

impl Default for RbfSettings {
    fn default() -> Self {
        RbfSettings {
            centers_per_axis: 12,
            epsilon: None,
            ridge: 1e-10,
        }
    }
}

/// Measured fields at the observed time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub dt: f64,
    pub steps: usize,
    /// `(step index, field)` pairs.
    pub fields: Vec<(usize, RbfField)>,
}

impl MeasurementSet {
    pub fn field_at(&self, step: usize) -> Option<&RbfField> {
        self.fields.iter().find(|(n, _)| *n == step).map(|(_, f)| f)
    }
}

/// Simulate the diffusion on `target` and fit one field per observed step.
pub fn synthesize_measurements(
    target: &SimplicialMeshHierarchy,
    coeffs: &MaterialCoefficients,
    dt: f64,
    horizon: f64,
    mode: &MeasurementMode,
    options: &SolverOptions,
    settings: &RbfSettings,
) -> Result<MeasurementSet> {
    let problem = DiffusionProblem::new(target, coeffs, dt, horizon, options)?;
    let trajectory = problem.march()?;
    let level = target.finest();
    let (lower, upper) = level.bounding_box();
    let dim = level.dim();
    let centers = lattice_centers(&lower, &upper, dim, settings.centers_per_axis);
    let spacing = (0..dim)
        .map(|k| (upper[k] - lower[k]) / (settings.centers_per_axis.max(2) - 1) as f64)
        .fold(0.0, f64::max);
    let epsilon = settings.epsilon.unwrap_or_else(|| default_epsilon(spacing));
    let mut fields = Vec::new();
    for step in mode.active_steps(dt, problem.steps())? {
        let f = fit_rbf(
            dim,
            level.coords(),
            &trajectory.fields[step],
            &centers,
            epsilon,
            settings.ridge,
        )?;
        fields.push((step, f));
    }
    Ok(MeasurementSet {
        dt,
        steps: problem.steps(),
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn single_center_reproduces_value() {
        let c = [[0.3, 0.4, 0.0]];
        let f = fit_rbf(2, &c, &[2.5], &c, 3.0, 0.0).unwrap();
        assert!((f.weights[0] - 2.5).abs() < 1e-15);
        assert!((f.eval(&c[0]) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn bump_in_span_is_exact() {
        let c = [0.5, 0.5, 0.0];
        let eps = 4.0;
        let pts = lattice_centers(&[0.0; 3], &[1.0, 1.0, 0.0], 2, 9);
        let vals: Vec<f64> = pts
            .iter()
            .map(|p| 1.7 * (-eps * eps * squared_distance(p, &c)).exp())
            .collect();
        let f = fit_rbf(2, &pts, &vals, &[c], eps, 0.0).unwrap();
        assert!((f.weights[0] - 1.7).abs() < 1e-10);
        assert!(f.rms_residual.unwrap() < 1e-10);
    }

    #[test]
    fn smooth_field_held_out_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = |p: &Point| (PI * p[0]).sin() * (PI * p[1]).sin();
        let pts: Vec<Point> = (0..400)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), 0.0])
            .collect();
        let vals: Vec<f64> = pts.iter().map(g).collect();
        let centers = lattice_centers(&[0.0; 3], &[1.0, 1.0, 0.0], 2, 10);
        // Wider than the half-height default: smooth data favors flat kernels.
        let f = fit_rbf(
            2,
            &pts,
            &vals,
            &centers,
            0.4 * default_epsilon(1.0 / 9.0),
            1e-10,
        )
        .unwrap();
        let held: Vec<Point> = (0..200)
            .map(|_| {
                [
                    0.05 + 0.9 * rng.gen::<f64>(),
                    0.05 + 0.9 * rng.gen::<f64>(),
                    0.0,
                ]
            })
            .collect();
        let rms = rms_misfit(&f, &held, &held.iter().map(g).collect::<Vec<_>>());
        assert!(rms <= 1e-3, "held-out rms {rms}");
    }

    #[test]
    fn recorded_residual_matches_reevaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..50)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), 0.0])
            .collect();
        let vals: Vec<f64> = pts.iter().map(|p| p[0] * p[1]).collect();
        let centers = lattice_centers(&[0.0; 3], &[1.0, 1.0, 0.0], 2, 4);
        let f = fit_rbf(2, &pts, &vals, &centers, 3.0, 1e-10).unwrap();
        assert!((f.rms_residual.unwrap() - rms_misfit(&f, &pts, &vals)).abs() <= 1e-12);
    }

    #[test]
    fn unit_weight_and_far_field() {
        let f = RbfField {
            dim: 2,
            centers: vec![[0.2, 0.2, 0.0]],
            epsilon: 2.0,
            weights: vec![1.0],
            rms_residual: None,
        };
        assert_eq!(f.eval(&[0.2, 0.2, 0.0]), 1.0);
        assert!(f.eval(&[0.2 + 10.0 / 2.0, 0.2, 0.0]).abs() <= 1e-40);
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let f = RbfField {
            dim: 2,
            centers: vec![[0.2, 0.3, 0.0], [0.7, 0.6, 0.0]],
            epsilon: 2.5,
            weights: vec![1.0, -0.4],
            rms_residual: None,
        };
        let x = [0.4, 0.45, 0.0];
        let g = f.gradient(&x);
        for k in 0..2 {
            let h = 1e-6;
            let (mut p, mut m) = (x, x);
            p[k] += h;
            m[k] -= h;
            assert!((g[k] - (f.eval(&p) - f.eval(&m)) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn ill_conditioned_without_ridge_rejected() {
        let centers = lattice_centers(&[0.0; 3], &[1.0, 1.0, 0.0], 2, 10);
        let err = fit_rbf(2, &centers, &vec![1.0; centers.len()], &centers, 0.5, 0.0).unwrap_err();
        assert!(matches!(err, Error::IllConditioned(_)));
        assert!(fit_rbf(2, &centers, &vec![1.0; centers.len()], &centers, 0.5, 1e-10).is_ok());
    }

    #[test]
    fn coincident_centers_rejected() {
        let c = [[0.1, 0.1, 0.0], [0.1, 0.1, 0.0]];
        assert!(fit_rbf(2, &c, &[1.0, 1.0], &c, 1.0, 1e-10).is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [2, 3] {
            let centers: Vec<Point> = (0..7)
                .map(|_| [rng.gen(), rng.gen(), if dim == 3 { rng.gen() } else { 0.0 }])
                .collect();
            let f = RbfField {
                dim,
                centers,
                epsilon: rng.gen::<f64>() * 10.0,
                weights: (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                rms_residual: None,
            };
            let mut buf = Vec::new();
            f.write(&mut buf).unwrap();
            let g = RbfField::read(buf.as_slice()).unwrap();
            assert_eq!(f, g);
        }
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = RbfField::read("2 1.5\n0 0 1\n0 x 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(RbfField::read("3 1.5\n0 0 1\n".as_bytes()).is_err());
    }

    #[test]
    fn instants_sample_expected_steps() {
        let spec = InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: 0.25 }, 16);
        let h = SimplicialMeshHierarchy::new(generate::inclusion_mesh_2d(&spec).unwrap(), 2, None)
            .unwrap();
        let coeffs = MaterialCoefficients {
            k_out: 1.0,
            k_int: 0.001,
            ..MaterialCoefficients::uniform_lame(0.01, 0.1)
        };
        let set = synthesize_measurements(
            &h,
            &coeffs,
            1.5,
            15.0,
            &MeasurementMode::Instants(vec![7.5, 15.0]),
            &SolverOptions::default(),
            &RbfSettings::default(),
        )
        .unwrap();
        assert_eq!(
            set.fields.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            vec![5, 10]
        );
        assert!(set
            .fields
            .iter()
            .all(|(_, f)| f.rms_residual.unwrap() < 0.05));
    }
}
