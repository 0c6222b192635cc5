//! Uniform red refinement.

use std::collections::{HashMap, HashSet};

use super::geometry::{midpoint, signed_volume, Point};
use super::MeshLevel;
use crate::error::Result;

/// Where a fine-level vertex came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexOrigin {
    /// Same index on the coarse level.
    Coarse(usize),
    /// Midpoint of the coarse edge `(a, b)`, `a < b`.
    Midpoint(usize, usize),
}

/// Provenance of a refined level relative to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementMap {
    /// One entry per fine vertex; the first `n_coarse` are `Coarse(i)` with `i` the own index.
    pub origins: Vec<VertexOrigin>,
    /// Parent coarse simplex of each fine simplex.
    pub parent: Vec<usize>,
}

impl RefinementMap {
    pub fn num_coarse(&self) -> usize {
        self.origins
            .iter()
            .take_while(|o| matches!(o, VertexOrigin::Coarse(_)))
            .count()
    }

    pub fn num_fine(&self) -> usize {
        self.origins.len()
    }
}

/// Red refinement: every triangle into 4, every tetrahedron into 8.
pub fn refine_uniform(level: &MeshLevel) -> Result<(MeshLevel, RefinementMap)> {
    refine_uniform_with(level, None)
}

/// Red refinement with an optional projection applied to the new midpoints of
/// interface edges, so that a smooth interface stays smooth under refinement.
pub fn refine_uniform_with(
    level: &MeshLevel,
    snap: Option<&dyn Fn(&Point) -> Point>,
) -> Result<(MeshLevel, RefinementMap)> {
    let dim = level.dim();
    let nv = level.num_vertices();
    let mut coords: Vec<Point> = level.coords().to_vec();
    let mut origins: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::Coarse).collect();
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();

    let mut mid = |a: usize, b: usize, coords: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *mids.entry(key).or_insert_with(|| {
            coords.push(midpoint(&coords[key.0], &coords[key.1]));
            origins.push(VertexOrigin::Midpoint(key.0, key.1));
            coords.len() - 1
        })
    };

    let nvs = dim + 1;
    let mut simplices = Vec::with_capacity(level.raw_simplices().len() * (1 << dim));
    let mut subdomains = Vec::new();
    let mut parent = Vec::new();
    for e in 0..level.num_simplices() {
        let s = level.simplex(e);
        let children: Vec<[usize; 4]> = if dim == 2 {
            let (v0, v1, v2) = (s[0], s[1], s[2]);
            let m01 = mid(v0, v1, &mut coords);
            let m02 = mid(v0, v2, &mut coords);
            let m12 = mid(v1, v2, &mut coords);
            vec![
                [v0, m01, m02, 0],
                [m01, v1, m12, 0],
                [m02, m12, v2, 0],
                [m01, m12, m02, 0],
            ]
        } else {
            let (x0, x1, x2, x3) = (s[0], s[1], s[2], s[3]);
            let x01 = mid(x0, x1, &mut coords);
            let x02 = mid(x0, x2, &mut coords);
            let x03 = mid(x0, x3, &mut coords);
            let x12 = mid(x1, x2, &mut coords);
            let x13 = mid(x1, x3, &mut coords);
            let x23 = mid(x2, x3, &mut coords);
            vec![
                [x0, x01, x02, x03],
                [x01, x1, x12, x13],
                [x02, x12, x2, x23],
                [x03, x13, x23, x3],
                [x01, x02, x03, x13],
                [x01, x02, x12, x13],
                [x02, x03, x13, x23],
                [x02, x12, x13, x23],
            ]
        };
        for c in children {
            simplices.extend_from_slice(&c[..nvs]);
            subdomains.push(level.subdomain(e));
            parent.push(e);
        }
    }

    let split = |f: &[usize],
                 coords: &mut Vec<Point>,
                 mid: &mut dyn FnMut(usize, usize, &mut Vec<Point>) -> usize|
     -> Vec<usize> {
        if f.len() == 2 {
            let m = mid(f[0], f[1], coords);
            vec![f[0], m, m, f[1]]
        } else {
            let (a, b, c) = (f[0], f[1], f[2]);
            let mab = mid(a, b, coords);
            let mbc = mid(b, c, coords);
            let mac = mid(a, c, coords);
            vec![a, mab, mac, mab, b, mbc, mac, mbc, c, mab, mbc, mac]
        }
    };

    let (bf, bl) = level.raw_boundary();
    let mut boundary_facets = Vec::with_capacity(bf.len() * dim);
    let mut boundary_labels = Vec::with_capacity(bl.len() * dim);
    for (f, &label) in bf.chunks(dim).zip(bl) {
        boundary_facets.extend(split(f, &mut coords, &mut mid));
        boundary_labels.extend(std::iter::repeat_n(label, if dim == 2 { 2 } else { 4 }));
    }
    let mut interface_facets = Vec::new();
    for f in level.raw_interface().chunks(dim) {
        interface_facets.extend(split(f, &mut coords, &mut mid));
    }

    if let Some(snap) = snap {
        let mut on_interface: HashSet<(usize, usize)> = HashSet::new();
        for f in level.interface_facets() {
            for i in 0..f.len() {
                let (a, b) = (f[i], f[(i + 1) % f.len()]);
                on_interface.insert((a.min(b), a.max(b)));
            }
        }
        for (v, o) in origins.iter().enumerate() {
            if let VertexOrigin::Midpoint(a, b) = *o {
                if on_interface.contains(&(a, b)) {
                    coords[v] = snap(&coords[v]);
                }
            }
        }
    }

    // Bey's interior tetrahedra may come out negatively oriented.
    for c in simplices.chunks_mut(nvs) {
        let pts: Vec<Point> = c.iter().map(|&v| coords[v]).collect();
        if signed_volume(&pts, dim) < 0.0 {
            c.swap(nvs - 2, nvs - 1);
        }
    }

    let fine = MeshLevel::new(
        dim,
        coords,
        simplices,
        subdomains,
        boundary_facets,
        boundary_labels,
        interface_facets,
    )?;
    Ok((fine, RefinementMap { origins, parent }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use crate::mesh::{BoundaryLabel, Subdomain};

    fn reference_triangle() -> MeshLevel {
        MeshLevel::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0, 1, 2],
            vec![Subdomain::Out],
            vec![0, 1, 1, 2, 2, 0],
            vec![
                BoundaryLabel::Bottom,
                BoundaryLabel::Top,
                BoundaryLabel::Left,
            ],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_gives_four_children() {
        let (fine, map) = refine_uniform(&reference_triangle()).unwrap();
        assert_eq!(fine.num_simplices(), 4);
        assert_eq!(fine.num_vertices(), 6);
        assert_eq!(map.num_coarse(), 3);
        assert_eq!(fine.num_boundary_facets(), 6);
    }

    #[test]
    fn two_triangle_square_gives_nine_vertices() {
        let sq = generate::structured_box_2d([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        assert_eq!(sq.num_simplices(), 2);
        let (fine, _) = refine_uniform(&sq).unwrap();
        assert_eq!(fine.num_simplices(), 8);
        assert_eq!(fine.num_vertices(), 9);
    }

    #[test]
    fn coarse_vertices_keep_their_index() {
        let m = generate::square_inclusion_2d(1.0, 0.4, 8).unwrap();
        let (fine, map) = refine_uniform(&m).unwrap();
        for i in 0..m.num_vertices() {
            assert_eq!(fine.coords()[i], m.coords()[i]);
            assert_eq!(map.origins[i], VertexOrigin::Coarse(i));
        }
        assert_eq!(fine.num_interface_facets(), 2 * m.num_interface_facets());
        assert!((fine.total_volume() - m.total_volume()).abs() < 1e-14);
        let rel = (fine.outer_volume() - m.outer_volume()).abs() / m.outer_volume();
        assert!(rel < 1e-14);
    }

    #[test]
    fn tetra_children_positive_and_volume_preserved() {
        let m = generate::structured_box_3d([0.0; 3], [1.0; 3], 2, None).unwrap();
        let (fine, map) = refine_uniform(&m).unwrap();
        assert_eq!(fine.num_simplices(), 8 * m.num_simplices());
        assert_eq!(map.parent.len(), fine.num_simplices());
        assert!((fine.total_volume() - 1.0).abs() < 1e-14);
        // each child lies inside its parent: child volumes sum to parent volume
        let mut sums = vec![0.0; m.num_simplices()];
        for (c, &p) in map.parent.iter().enumerate() {
            sums[p] += fine.volume(c);
        }
        for (p, s) in sums.iter().enumerate() {
            assert!((s - m.volume(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn refinement_is_deterministic() {
        let m = generate::square_inclusion_2d(1.0, 0.4, 8).unwrap();
        let a = refine_uniform(&m).unwrap();
        let b = refine_uniform(&m).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
