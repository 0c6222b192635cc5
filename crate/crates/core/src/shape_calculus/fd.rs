//! Finite-difference oracle for shape derivatives.

use rand::Rng;

use super::interface_support;
use crate::error::Result;
use crate::mesh::{MeshLevel, SimplicialMeshHierarchy};

/// Relative size of evaluation noise in the objective.
const NOISE: f64 = 1e-11;

/// `(J(x + tV) - J(x)) / t` with every level moved by `tV`.
///
/// `base` is `J(x)` if already known. An invalid deformed mesh is an error;
/// the caller may retry with a smaller `t`.
pub fn fd_directional_derivative(
    evaluate: &dyn Fn(&SimplicialMeshHierarchy) -> Result<f64>,
    mesh: &SimplicialMeshHierarchy,
    field: &[f64],
    t: f64,
    base: Option<f64>,
) -> Result<f64> {
    let j0 = match base {
        Some(j) => j,
        None => evaluate(mesh)?,
    };
    let moved = mesh.deform(field, t)?;
    Ok((evaluate(&moved)? - j0) / t)
}

/// Random field on the interface support, zero elsewhere, with largest
/// vertex displacement `amplitude`.
pub fn random_interface_field<R: Rng>(level: &MeshLevel, rng: &mut R, amplitude: f64) -> Vec<f64> {
    let dim = level.dim();
    let support = interface_support(level);
    let mut v = vec![0.0f64; level.num_vertices() * dim];
    for (a, keep) in support.iter().enumerate() {
        if *keep {
            for c in 0..dim {
                v[a * dim + c] = rng.gen_range(-1.0..1.0);
            }
        }
    }
    let max = (0..level.num_vertices())
        .map(|a| (0..dim).map(|c| v[a * dim + c].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x *= amplitude / max);
    }
    v
}

/// Finite differences against a predicted directional derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub steps: Vec<f64>,
    pub predicted: f64,
    pub difference_quotients: Vec<f64>,
    /// `|fd(t) - predicted|`.
    pub errors: Vec<f64>,
    /// Error level below which the objective's round-off dominates.
    pub noise: Vec<f64>,
    /// Smallest slope of `log error` against `log t` over consecutive resolved steps.
    pub order: Option<f64>,
    pub passed: bool,
}

/// Compare `predicted` with difference quotients at each step in `steps`
/// (decreasing) and check the observed order is at least `min_order`.
///
/// Errors already at noise level count as agreement.
pub fn taylor_check(
    evaluate: &dyn Fn(&SimplicialMeshHierarchy) -> Result<f64>,
    mesh: &SimplicialMeshHierarchy,
    field: &[f64],
    predicted: f64,
    steps: &[f64],
    min_order: f64,
) -> Result<TaylorReport> {
    let j0 = evaluate(mesh)?;
    let mut fds = Vec::with_capacity(steps.len());
    let mut noise = Vec::with_capacity(steps.len());
    for &t in steps {
        let jt = evaluate(&mesh.deform(field, t)?)?;
        fds.push((jt - j0) / t);
        noise.push(NOISE * (j0.abs() + jt.abs()) / t);
    }
    let errors: Vec<f64> = fds.iter().map(|f| (f - predicted).abs()).collect();
    let mut order: Option<f64> = None;
    let mut passed = true;
    for i in 0..steps.len().saturating_sub(1) {
        let (e0, e1) = (errors[i], errors[i + 1]);
        if e1 <= noise[i + 1] {
            continue;
        }
        if e0 <= noise[i] {
            // Agreement at noise level followed by a resolved error.
            passed = false;
            continue;
        }
        let slope = (e0 / e1).ln() / (steps[i] / steps[i + 1]).ln();
        order = Some(order.map_or(slope, |o: f64| o.min(slope)));
        if slope < min_order {
            passed = false;
        }
    }
    Ok(TaylorReport {
        steps: steps.to_vec(),
        predicted,
        difference_quotients: fds,
        errors,
        noise,
        order,
        passed,
    })
}
