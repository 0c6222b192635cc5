//! Discrete mean curvature of the interface.
//!
//! In 2D the curvature at a vertex is the signed turning angle between the
//! incoming and outgoing interface edges divided by half their summed length.
//! In 3D it is the magnitude of the cotangent mean-curvature normal over the
//! mixed Voronoi area, signed by the outward vertex normal. Both are positive
//! on convex inclusions and approximate `div_Γ n` (so `2/r` on a sphere).

use std::collections::HashMap;

use super::geometry::{cross, dot, facet_normal, norm, sub, Point};
use super::MeshLevel;
use crate::error::{Error, Result};

/// Curvature value per interface vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    /// Interface vertex indices, sorted.
    pub vertices: Vec<usize>,
    /// Curvature at the corresponding vertex.
    pub values: Vec<f64>,
}

impl CurvatureField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense per-vertex array with zeros away from the interface.
    pub fn to_nodal(&self, num_vertices: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_vertices];
        for (&v, &k) in self.vertices.iter().zip(&self.values) {
            out[v] = k;
        }
        out
    }
}

/// Curvature of the interface of a mesh level.
pub fn discrete_mean_curvature(level: &MeshLevel) -> Result<CurvatureField> {
    let facets: Vec<usize> = level.raw_interface().to_vec();
    if facets.is_empty() {
        return Ok(CurvatureField {
            vertices: Vec::new(),
            values: Vec::new(),
        });
    }
    match level.dim() {
        2 => polyline_curvature(level.coords(), &facets),
        _ => surface_mean_curvature(level.coords(), &facets),
    }
}

fn polyline_curvature(coords: &[Point], edges: &[usize]) -> Result<CurvatureField> {
    let mut incoming: HashMap<usize, usize> = HashMap::new();
    let mut outgoing: HashMap<usize, usize> = HashMap::new();
    for e in edges.chunks(2) {
        if incoming.insert(e[1], e[0]).is_some() || outgoing.insert(e[0], e[1]).is_some() {
            return Err(Error::OpenInterface(format!(
                "interface vertex {} is shared by more than two edges",
                if incoming.contains_key(&e[1]) {
                    e[1]
                } else {
                    e[0]
                }
            )));
        }
    }
    let mut vertices: Vec<usize> = incoming.keys().chain(outgoing.keys()).copied().collect();
    vertices.sort_unstable();
    vertices.dedup();
    let mut values = Vec::with_capacity(vertices.len());
    for &v in &vertices {
        let (Some(&prev), Some(&next)) = (incoming.get(&v), outgoing.get(&v)) else {
            return Err(Error::OpenInterface(format!(
                "interface polyline ends at vertex {v}"
            )));
        };
        let t_in = sub(&coords[v], &coords[prev]);
        let t_out = sub(&coords[next], &coords[v]);
        let turn = (t_in[0] * t_out[1] - t_in[1] * t_out[0]).atan2(dot(&t_in, &t_out));
        values.push(turn / (0.5 * (norm(&t_in) + norm(&t_out))));
    }
    Ok(CurvatureField { vertices, values })
}

fn cot(a: &Point, b: &Point) -> f64 {
    dot(a, b) / norm(&cross(a, b))
}

/// Signed mean curvature (`div_Γ n`) of a closed oriented triangle surface.
///
/// `triangles` holds three vertex indices per face with normals
/// `(b - a) x (c - a)` pointing outward.
pub fn surface_mean_curvature(coords: &[Point], triangles: &[usize]) -> Result<CurvatureField> {
    let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles.chunks(3) {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if let Some((e, n)) = edge_use.iter().find(|(_, &n)| n != 2) {
        return Err(Error::OpenInterface(format!(
            "surface edge {e:?} used by {n} triangles"
        )));
    }

    let mut operator: HashMap<usize, Point> = HashMap::new();
    let mut area: HashMap<usize, f64> = HashMap::new();
    let mut normal: HashMap<usize, Point> = HashMap::new();
    for t in triangles.chunks(3) {
        let p = [coords[t[0]], coords[t[1]], coords[t[2]]];
        let (tri_area, n) = facet_normal(&p, 3);
        let obtuse = (0..3).find(|&i| {
            let e1 = sub(&p[(i + 1) % 3], &p[i]);
            let e2 = sub(&p[(i + 2) % 3], &p[i]);
            dot(&e1, &e2) < 0.0
        });
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            // angle at k faces edge (i, j); angle at j faces edge (i, k)
            let cot_k = cot(&sub(&p[i], &p[k]), &sub(&p[j], &p[k]));
            let cot_j = cot(&sub(&p[i], &p[j]), &sub(&p[k], &p[j]));
            let dij = sub(&p[i], &p[j]);
            let dik = sub(&p[i], &p[k]);
            let op = operator.entry(t[i]).or_insert([0.0; 3]);
            for c in 0..3 {
                op[c] += cot_k * dij[c] + cot_j * dik[c];
            }
            let a_mixed = match obtuse {
                None => (dot(&dij, &dij) * cot_k + dot(&dik, &dik) * cot_j) / 8.0,
                Some(o) if o == i => tri_area / 2.0,
                Some(_) => tri_area / 4.0,
            };
            *area.entry(t[i]).or_default() += a_mixed;
            let vn = normal.entry(t[i]).or_insert([0.0; 3]);
            for c in 0..3 {
                vn[c] += tri_area * n[c];
            }
        }
    }
    let mut vertices: Vec<usize> = operator.keys().copied().collect();
    vertices.sort_unstable();
    let values = vertices
        .iter()
        .map(|v| {
            let k = operator[v].map(|x| x / (2.0 * area[v]));
            norm(&k) * dot(&k, &normal[v]).signum()
        })
        .collect();
    Ok(CurvatureField { vertices, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use crate::mesh::{refine_uniform, refine_uniform_with};
    use std::f64::consts::PI;

    #[test]
    fn straight_chain_has_zero_curvature() {
        let coords: Vec<Point> = (0..5).map(|i| [i as f64 * 0.3, 0.0, 0.0]).collect();
        // close the chain with a far detour so the polyline is closed
        let mut coords = coords;
        coords.push([0.6, 5.0, 0.0]);
        let edges = vec![0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 0];
        let k = polyline_curvature(&coords, &edges).unwrap();
        for v in 1..4 {
            assert_eq!(k.values[v], 0.0);
        }
    }

    #[test]
    fn open_polyline_rejected() {
        let coords = vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
        let err = polyline_curvature(&coords, &[0, 1, 1, 2]).unwrap_err();
        assert!(matches!(err, Error::OpenInterface(_)));
    }

    #[test]
    fn regular_64_gon_matches_circle() {
        let r = 0.25;
        let spec = InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: r }, 64);
        let m = generate::inclusion_mesh_2d(&spec).unwrap();
        let k = discrete_mean_curvature(&m).unwrap();
        assert_eq!(k.vertices.len(), 64);
        // closed form: (2 pi / n) / (2 r sin(pi / n))
        let closed = (2.0 * PI / 64.0) / (2.0 * r * (PI / 64.0).sin());
        for &v in &k.values {
            assert!((v - closed).abs() < 1e-9);
            assert!((v - 1.0 / r).abs() * r <= 0.01);
        }
    }

    #[test]
    fn square_corner_doubles_under_refinement() {
        let m = generate::square_inclusion_2d(1.0, 0.4, 8).unwrap();
        let (f, _) = refine_uniform(&m).unwrap();
        let k0 = discrete_mean_curvature(&m).unwrap().max_abs();
        let k1 = discrete_mean_curvature(&f).unwrap().max_abs();
        assert!((k1 / k0 - 2.0).abs() < 1e-12);
        // corner: pi/2 over the mean edge length 0.2
        assert!((k0 - (PI / 2.0) / 0.2).abs() < 1e-12);
    }

    #[test]
    fn snapped_circle_stays_bounded() {
        let spec = InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: 0.25 }, 16);
        let m = generate::inclusion_mesh_2d(&spec).unwrap();
        let snap = spec.snap().unwrap();
        let (f, _) = refine_uniform_with(&m, Some(&snap)).unwrap();
        let k = discrete_mean_curvature(&f).unwrap();
        assert_eq!(k.vertices.len(), 32);
        for &v in &k.values {
            assert!((v * 0.25 - 1.0).abs() < 0.01);
        }
    }

    fn icosphere(levels: usize) -> (Vec<Point>, Vec<usize>) {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut pts: Vec<Point> = vec![
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ];
        let mut tris: Vec<usize> = vec![
            0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11, 1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7,
            6, 7, 1, 8, 3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9, 4, 9, 5, 2, 4, 11, 6, 2, 10,
            8, 6, 7, 9, 8, 1,
        ];
        for _ in 0..levels {
            let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
            let mut next = Vec::new();
            for t in tris.chunks(3) {
                let mut m = [0; 3];
                for i in 0..3 {
                    let (a, b) = (t[i], t[(i + 1) % 3]);
                    m[i] = *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                        pts.push(super::super::geometry::midpoint(&pts[a], &pts[b]));
                        pts.len() - 1
                    });
                }
                next.extend_from_slice(&[
                    t[0], m[0], m[2], m[0], t[1], m[1], m[2], m[1], t[2], m[0], m[1], m[2],
                ]);
            }
            tris = next;
        }
        for p in &mut pts {
            let l = norm(p);
            *p = p.map(|x| x / l);
        }
        (pts, tris)
    }

    #[test]
    fn icosphere_curvature_is_two_over_radius() {
        let (pts, tris) = icosphere(3);
        let k = surface_mean_curvature(&pts, &tris).unwrap();
        for &v in &k.values {
            assert!((v - 2.0).abs() < 0.02, "curvature {v}");
        }
    }

    #[test]
    fn open_surface_rejected() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            surface_mean_curvature(&pts, &[0, 1, 2]),
            Err(Error::OpenInterface(_))
        ));
    }

    #[test]
    fn cube_block_interface_is_closed() {
        let m = generate::structured_box_3d([0.0; 3], [1.0; 3], 3, Some(([1, 1, 1], [2, 2, 2])))
            .unwrap();
        let k = discrete_mean_curvature(&m).unwrap();
        assert!(k.values.iter().all(|v| v.is_finite()));
    }
}
