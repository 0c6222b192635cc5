//! Assembly of the shape derivative loads.
//!
//! For a nodal field `V` with `∇V = Σ_a V_a ⊗ ∇φ_a`, an element moves as
//! `d|T| = |T| div V` and `d∇φ_b = -(∇V)^T ∇φ_b`. All volume integrands are
//! element-wise constant, so one-point quadrature is exact.

use super::{IntegralForm, ObjectiveTerm, ShapeDerivativeLoad};
use crate::error::{Error, Result};
use crate::fem::MaterialCoefficients;
use crate::measurements::MeasurementSet;
use crate::mesh::geometry::{facet_normal, facet_surface_gradients, Point};
use crate::mesh::{CurvatureField, MeshLevel};
use crate::physics::TransientTrajectory;

type Matrix3 = [[f64; 3]; 3];

/// Per vertex: does some incident element touch an interface vertex?
pub fn interface_support(level: &MeshLevel) -> Vec<bool> {
    let mut on_interface = vec![false; level.num_vertices()];
    for v in level.interface_vertices() {
        on_interface[v] = true;
    }
    let mut support = vec![false; level.num_vertices()];
    for s in level.simplices() {
        if s.iter().any(|&v| on_interface[v]) {
            s.iter().for_each(|&v| support[v] = true);
        }
    }
    support
}

fn restrict(level: &MeshLevel, values: &mut [f64]) {
    let dim = level.dim();
    for (v, keep) in interface_support(level).into_iter().enumerate() {
        if !keep {
            values[v * dim..(v + 1) * dim]
                .iter_mut()
                .for_each(|x| *x = 0.0);
        }
    }
}

fn load(
    level: &MeshLevel,
    mut values: Vec<f64>,
    term: ObjectiveTerm,
    form: IntegralForm,
) -> ShapeDerivativeLoad {
    restrict(level, &mut values);
    ShapeDerivativeLoad {
        dim: level.dim(),
        values,
        parts: vec![(term, form)],
    }
}

/// `G_ij = ∂_j u_i` on element `e`.
fn displacement_gradient(level: &MeshLevel, e: usize, grads: &[Point; 4], u: &[f64]) -> Matrix3 {
    let dim = level.dim();
    let mut g = [[0.0; 3]; 3];
    for (a, &v) in level.simplex(e).iter().enumerate() {
        for i in 0..dim {
            for j in 0..dim {
                g[i][j] += u[v * dim + i] * grads[a][j];
            }
        }
    }
    g
}

fn stress(g: &Matrix3, lambda: f64, mu: f64, dim: usize) -> Matrix3 {
    let tr: f64 = (0..dim).map(|i| g[i][i]).sum();
    let mut s = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            s[i][j] = mu * (g[i][j] + g[j][i]);
        }
        s[i][i] += lambda * tr;
    }
    s
}

fn contract(a: &Matrix3, b: &Matrix3) -> f64 {
    (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| a[i][j] * b[i][j])
        .sum()
}

fn scalar_gradient(level: &MeshLevel, e: usize, grads: &[Point; 4], y: &[f64]) -> Point {
    let mut g = [0.0; 3];
    for (a, &v) in level.simplex(e).iter().enumerate() {
        for k in 0..3 {
            g[k] += y[v] * grads[a][k];
        }
    }
    g
}

/// `e^T M_T f` for the consistent P1 element mass.
pub(crate) fn element_mass_product(
    level: &MeshLevel,
    e: usize,
    volume: f64,
    x: &[f64],
    y: &[f64],
) -> f64 {
    let n = level.dim() + 1;
    let s = level.simplex(e);
    let (mut diag, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &v in s {
        diag += x[v] * y[v];
        sx += x[v];
        sy += y[v];
    }
    volume * (diag + sx * sy) / (n * (n + 1)) as f64
}

/// Elastic energy `∫ σ(u):ε(u)` evaluated element-wise.
pub(crate) fn elastic_energy(level: &MeshLevel, coeffs: &MaterialCoefficients, u: &[f64]) -> f64 {
    let dim = level.dim();
    (0..level.num_simplices())
        .map(|e| {
            let geo = level.element_geometry(e);
            let (lambda, mu) = coeffs.lame(level.subdomain(e));
            let g = displacement_gradient(level, e, &geo.grads, u);
            geo.volume * contract(&stress(&g, lambda, mu, dim), &g)
        })
        .sum()
}

/// Compliance derivative from the state `u` and adjoint `w`.
///
/// Per element `|T| [σ(u):∇w div V - σ(w):(∇u ∇V) - σ(u):(∇w ∇V)]`.
pub fn assemble_dj1(
    level: &MeshLevel,
    coeffs: &MaterialCoefficients,
    u: &[f64],
    w: &[f64],
) -> Result<ShapeDerivativeLoad> {
    let dim = level.dim();
    let nd = level.num_vertices() * dim;
    if u.len() != nd || w.len() != nd {
        return Err(Error::invalid(format!(
            "displacements must have {nd} entries"
        )));
    }
    let mut b = vec![0.0; nd];
    for e in 0..level.num_simplices() {
        let geo = level.element_geometry(e);
        let (lambda, mu) = coeffs.lame(level.subdomain(e));
        let gu = displacement_gradient(level, e, &geo.grads, u);
        let gw = displacement_gradient(level, e, &geo.grads, w);
        let su = stress(&gu, lambda, mu, dim);
        let sw = stress(&gw, lambda, mu, dim);
        let energy = contract(&su, &gw);
        for (a, &v) in level.simplex(e).iter().enumerate() {
            let ga = &geo.grads[a];
            for c in 0..dim {
                let mut val = energy * ga[c];
                for i in 0..dim {
                    for j in 0..dim {
                        val -= (gw[i][c] * su[i][j] + gu[i][c] * sw[i][j]) * ga[j];
                    }
                }
                b[v * dim + c] += geo.volume * val;
            }
        }
    }
    Ok(load(
        level,
        b,
        ObjectiveTerm::Compliance,
        IntegralForm::Volume,
    ))
}

/// Tracking derivative from the state and adjoint trajectories.
///
/// `weights[n]` and `nu2` are those of the tracking term; `target` holds the
/// sampled reference values. A spatially fixed `measured` field adds the
/// transport of the reference values along `V`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_dj2(
    level: &MeshLevel,
    coeffs: &MaterialCoefficients,
    state: &TransientTrajectory,
    adjoint: &TransientTrajectory,
    target: &TransientTrajectory,
    measured: Option<&MeasurementSet>,
    nu2: f64,
    weights: &[f64],
) -> Result<ShapeDerivativeLoad> {
    let dim = level.dim();
    let nv = level.num_vertices();
    let steps = weights.len() - 1;
    if state.fields.len() != steps + 1
        || adjoint.fields.len() != steps + 1
        || target.fields.len() != steps + 1
    {
        return Err(Error::TrajectoryMismatch(
            "state, adjoint, target and weights differ in length".into(),
        ));
    }
    let dt = state.dt;
    let mut b = vec![0.0; nv * dim];
    let mut misfits: Vec<Option<Vec<f64>>> = vec![None; steps + 1];
    for n in 1..=steps {
        if weights[n] != 0.0 && nu2 != 0.0 {
            misfits[n] = Some(
                state.fields[n]
                    .iter()
                    .zip(&target.fields[n])
                    .map(|(y, t)| y - t)
                    .collect(),
            );
        }
    }
    let mut increments = vec![Vec::new(); steps + 1];
    for n in 1..=steps {
        increments[n] = state.fields[n]
            .iter()
            .zip(&state.fields[n - 1])
            .map(|(a, b)| a - b)
            .collect();
    }
    for e in 0..level.num_simplices() {
        let geo = level.element_geometry(e);
        let k = coeffs.diffusivity(level.subdomain(e));
        let mut divergence_weight = 0.0;
        let mut stiff = [[0.0; 3]; 3];
        for n in 1..=steps {
            let (y, z) = (&state.fields[n], &adjoint.fields[n]);
            divergence_weight += element_mass_product(level, e, geo.volume, &increments[n], z);
            if let Some(m) = &misfits[n] {
                divergence_weight +=
                    weights[n] * 0.5 * nu2 * element_mass_product(level, e, geo.volume, m, m);
            }
            let gy = scalar_gradient(level, e, &geo.grads, y);
            let gz = scalar_gradient(level, e, &geo.grads, z);
            for i in 0..dim {
                for j in 0..dim {
                    stiff[i][j] += dt * k * gy[i] * gz[j];
                }
            }
        }
        // stiff[i][j] = Σ_n Δt k ∂_i y ∂_j z
        let trace: f64 = (0..dim).map(|i| stiff[i][i]).sum();
        for (a, &v) in level.simplex(e).iter().enumerate() {
            let ga = &geo.grads[a];
            for c in 0..dim {
                let mut val = (divergence_weight + geo.volume * trace) * ga[c];
                for j in 0..dim {
                    val -= geo.volume * (stiff[c][j] * ga[j] + stiff[j][c] * ga[j]);
                }
                b[v * dim + c] += val;
            }
        }
    }
    if let Some(m) = measured {
        let mass = crate::fem::mass_matrix(level);
        for n in 1..=steps {
            let Some(misfit) = &misfits[n] else { continue };
            let field = m
                .field_at(n)
                .ok_or_else(|| Error::TrajectoryMismatch(format!("no measurement at step {n}")))?;
            let mm = mass.matvec(misfit);
            for (v, x) in level.coords().iter().enumerate() {
                let g = field.gradient(x);
                for c in 0..dim {
                    b[v * dim + c] -= weights[n] * nu2 * mm[v] * g[c];
                }
            }
        }
    }
    Ok(load(
        level,
        b,
        ObjectiveTerm::Tracking,
        IntegralForm::Volume,
    ))
}

/// `nu3 ∫_{Ω_out} div V`.
pub fn assemble_dj3(level: &MeshLevel, nu3: f64) -> ShapeDerivativeLoad {
    let dim = level.dim();
    let mut b = vec![0.0; level.num_vertices() * dim];
    for e in (0..level.num_simplices()).filter(|&e| !level.subdomain(e).is_inclusion()) {
        let geo = level.element_geometry(e);
        for (a, &v) in level.simplex(e).iter().enumerate() {
            for c in 0..dim {
                b[v * dim + c] += nu3 * geo.volume * geo.grads[a][c];
            }
        }
    }
    load(level, b, ObjectiveTerm::Volume, IntegralForm::Volume)
}

/// `nu4 ∫_Γ κ <V, n>` with the facet average of `κ` and the midpoint value of `V`.
pub fn assemble_dj4_surface(
    level: &MeshLevel,
    curvature: &CurvatureField,
    nu4: f64,
) -> ShapeDerivativeLoad {
    let dim = level.dim();
    let kappa = curvature.to_nodal(level.num_vertices());
    let mut b = vec![0.0; level.num_vertices() * dim];
    for f in level.interface_facets() {
        let (measure, normal) = facet_normal(&level.facet_points(f), dim);
        let mean_kappa = f.iter().map(|&v| kappa[v]).sum::<f64>() / dim as f64;
        for &v in f {
            for c in 0..dim {
                b[v * dim + c] += nu4 * mean_kappa * measure * normal[c] / dim as f64;
            }
        }
    }
    load(level, b, ObjectiveTerm::Perimeter, IntegralForm::Surface)
}

/// `nu4 ∫_Γ div_Γ V`, the exact derivative of the discrete interface measure.
pub fn assemble_dj4_volume(level: &MeshLevel, nu4: f64) -> ShapeDerivativeLoad {
    let dim = level.dim();
    let mut b = vec![0.0; level.num_vertices() * dim];
    for f in level.interface_facets() {
        let p = level.facet_points(f);
        let (measure, _) = facet_normal(&p, dim);
        let grads = facet_surface_gradients(&p, dim);
        for (a, &v) in f.iter().enumerate() {
            for c in 0..dim {
                b[v * dim + c] += nu4 * measure * grads[a][c];
            }
        }
    }
    load(level, b, ObjectiveTerm::Perimeter, IntegralForm::Volume)
}
