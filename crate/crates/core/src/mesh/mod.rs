//! Hierarchical simplicial meshes with subdomain, boundary and interface labels.
//!
//! A [`MeshLevel`] is an immutable, validated snapshot: conforming, positively
//! oriented, with every boundary facet labelled exactly once and the interface
//! between inclusion and matrix stored as oriented facets whose normal points
//! out of the inclusion. A [`SimplicialMeshHierarchy`] stacks red-refined
//! levels so that vertex `i` of level `l` is vertex `i` of every finer level.

mod curvature;
pub mod generate;
pub mod geometry;
mod hierarchy;
pub mod io;
mod quality;
mod refine;

use std::collections::HashMap;
use std::fmt;

pub use curvature::{discrete_mean_curvature, surface_mean_curvature, CurvatureField};
pub use geometry::Point;
pub use hierarchy::SimplicialMeshHierarchy;
pub use quality::{mesh_quality, QualitySummary};
pub use refine::{refine_uniform, refine_uniform_with, RefinementMap, VertexOrigin};

use crate::error::{Error, Result};
use geometry::{element_geometry, facet_normal, signed_volume, sub, ElementGeometry};

/// Material label of a simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    /// The surrounding matrix material.
    Out,
    /// Inclusion number `i`.
    Int(u32),
}

impl Subdomain {
    pub fn is_inclusion(self) -> bool {
        matches!(self, Subdomain::Int(_))
    }

    /// Integer code used by the file formats: 0 for the matrix, `i + 1` for inclusion `i`.
    pub fn code(self) -> u32 {
        match self {
            Subdomain::Out => 0,
            Subdomain::Int(i) => i + 1,
        }
    }

    pub fn from_code(code: u32) -> Self {
        if code == 0 {
            Subdomain::Out
        } else {
            Subdomain::Int(code - 1)
        }
    }
}

/// Faces of the axis-aligned hold-all box.
///
/// The last coordinate axis runs from `Bottom` to `Top`. In 2D `Left`/`Right`
/// are the x faces; in 3D `Front`/`Back` are the x faces and `Left`/`Right`
/// the y faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryLabel {
    Left,
    Right,
    Bottom,
    Top,
    Front,
    Back,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 6] = [
        BoundaryLabel::Left,
        BoundaryLabel::Right,
        BoundaryLabel::Bottom,
        BoundaryLabel::Top,
        BoundaryLabel::Front,
        BoundaryLabel::Back,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryLabel::Left => "left",
            BoundaryLabel::Right => "right",
            BoundaryLabel::Bottom => "bottom",
            BoundaryLabel::Top => "top",
            BoundaryLabel::Front => "front",
            BoundaryLabel::Back => "back",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }

    /// Coordinate axis normal to this face in a box of dimension `dim`.
    pub fn normal_axis(self, dim: usize) -> usize {
        match (dim, self) {
            (2, BoundaryLabel::Left | BoundaryLabel::Right) => 0,
            (2, _) => 1,
            (_, BoundaryLabel::Front | BoundaryLabel::Back) => 0,
            (_, BoundaryLabel::Left | BoundaryLabel::Right) => 1,
            _ => 2,
        }
    }

    /// Label of the face with normal along `axis`, on the upper (`upper = true`) or lower side.
    pub fn for_axis(dim: usize, axis: usize, upper: bool) -> Self {
        match (dim, axis, upper) {
            (2, 0, false) | (3, 1, false) => BoundaryLabel::Left,
            (2, 0, true) | (3, 1, true) => BoundaryLabel::Right,
            (3, 0, false) => BoundaryLabel::Front,
            (3, 0, true) => BoundaryLabel::Back,
            (_, _, false) => BoundaryLabel::Bottom,
            (_, _, true) => BoundaryLabel::Top,
        }
    }
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sorted vertex set of a facet, padded with `usize::MAX` in 2D.
pub(crate) type FacetKey = [usize; 3];

pub(crate) fn facet_key(verts: &[usize]) -> FacetKey {
    let mut k = [usize::MAX; 3];
    k[..verts.len()].copy_from_slice(verts);
    k.sort_unstable();
    k
}

/// Vertices of the facet of a simplex opposite local vertex `i`.
pub(crate) fn local_facet(simplex: &[usize], i: usize) -> ([usize; 3], usize) {
    let n = simplex.len();
    let mut f = [usize::MAX; 3];
    let mut m = 0;
    for j in 1..n {
        f[m] = simplex[(i + j) % n];
        m += 1;
    }
    (f, m)
}

/// One validated level of a simplicial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshLevel {
    dim: usize,
    coords: Vec<Point>,
    /// Flat vertex indices, `dim + 1` per simplex.
    simplices: Vec<usize>,
    subdomains: Vec<Subdomain>,
    /// Flat vertex indices, `dim` per facet.
    boundary_facets: Vec<usize>,
    boundary_labels: Vec<BoundaryLabel>,
    /// Flat vertex indices, `dim` per facet; normal points out of the inclusion.
    interface_facets: Vec<usize>,
}

impl MeshLevel {
    /// Build and validate a mesh level.
    ///
    /// Interface facets are reordered if needed so that their normal points
    /// out of the adjacent inclusion simplex.
    pub fn new(
        dim: usize,
        coords: Vec<Point>,
        simplices: Vec<usize>,
        subdomains: Vec<Subdomain>,
        boundary_facets: Vec<usize>,
        boundary_labels: Vec<BoundaryLabel>,
        interface_facets: Vec<usize>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid(format!("dimension {dim} not supported")));
        }
        let nvs = dim + 1;
        if !simplices.len().is_multiple_of(nvs) || simplices.len() / nvs != subdomains.len() {
            return Err(Error::invalid("simplex and subdomain arrays disagree"));
        }
        if !boundary_facets.len().is_multiple_of(dim)
            || boundary_facets.len() / dim != boundary_labels.len()
        {
            return Err(Error::invalid("boundary facet and label arrays disagree"));
        }
        if !interface_facets.len().is_multiple_of(dim) {
            return Err(Error::invalid("interface facet array has wrong length"));
        }
        let nv = coords.len();
        if let Some(&bad) = simplices
            .iter()
            .chain(&boundary_facets)
            .chain(&interface_facets)
            .find(|&&v| v >= nv)
        {
            return Err(Error::invalid(format!(
                "vertex index {bad} out of range ({nv} vertices)"
            )));
        }
        let mut level = MeshLevel {
            dim,
            coords,
            simplices,
            subdomains,
            boundary_facets,
            boundary_labels,
            interface_facets,
        };
        level.check_orientation()?;
        level.validate_topology()?;
        Ok(level)
    }

    fn validate_topology(&mut self) -> Result<()> {
        let dim = self.dim;
        let mut incidence: HashMap<FacetKey, Vec<usize>> = HashMap::new();
        for e in 0..self.num_simplices() {
            let s = self.simplex(e);
            for i in 0..=dim {
                let (f, m) = local_facet(s, i);
                incidence.entry(facet_key(&f[..m])).or_default().push(e);
            }
        }
        let mut boundary: HashMap<FacetKey, usize> = HashMap::new();
        for (fi, f) in self.boundary_facets.chunks(dim).enumerate() {
            let key = facet_key(f);
            if boundary.insert(key, fi).is_some() {
                return Err(Error::NonConforming(format!(
                    "boundary facet {f:?} labelled twice"
                )));
            }
            match incidence.get(&key) {
                Some(v) if v.len() == 1 => {}
                _ => {
                    return Err(Error::NonConforming(format!(
                        "boundary facet {f:?} is not a facet on the mesh boundary"
                    )))
                }
            }
        }
        let mut interface_count = 0;
        for (key, elems) in &incidence {
            match elems.len() {
                1 => {
                    if !boundary.contains_key(key) {
                        return Err(Error::NonConforming(format!(
                            "facet {:?} of simplex {} has no neighbour and no boundary label",
                            &key[..dim],
                            elems[0]
                        )));
                    }
                }
                2 => {
                    let (a, b) = (self.subdomains[elems[0]], self.subdomains[elems[1]]);
                    if a != b {
                        interface_count += 1;
                    }
                }
                n => {
                    return Err(Error::NonConforming(format!(
                        "facet {:?} shared by {n} simplices",
                        &key[..dim]
                    )))
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        let nif = self.interface_facets.len() / dim;
        for fi in 0..nif {
            let f: Vec<usize> = self.interface_facets[fi * dim..(fi + 1) * dim].to_vec();
            let key = facet_key(&f);
            if !seen.insert(key) {
                return Err(Error::NonConforming(format!(
                    "interface facet {f:?} listed twice"
                )));
            }
            let elems = incidence
                .get(&key)
                .filter(|e| e.len() == 2)
                .ok_or_else(|| {
                    Error::NonConforming(format!("interface facet {f:?} is not an interior facet"))
                })?;
            let (s0, s1) = (self.subdomains[elems[0]], self.subdomains[elems[1]]);
            let inner = match (s0, s1) {
                (Subdomain::Int(_), Subdomain::Out) => elems[0],
                (Subdomain::Out, Subdomain::Int(_)) => elems[1],
                _ => {
                    return Err(Error::NonConforming(format!(
                        "interface facet {f:?} does not separate an inclusion from the matrix"
                    )))
                }
            };
            let pts: Vec<Point> = f.iter().map(|&v| self.coords[v]).collect();
            let (_, n) = facet_normal(&pts, dim);
            let c_in = self.centroid(inner);
            let c_f = centroid_of(&pts);
            if geometry::dot(&n, &sub(&c_in, &c_f)) > 0.0 {
                self.interface_facets.swap(fi * dim, fi * dim + 1);
            }
        }
        if nif != interface_count {
            return Err(Error::NonConforming(format!(
                "{interface_count} facets separate different subdomains but {nif} interface facets were given"
            )));
        }
        Ok(())
    }

    /// Fail if any simplex has non-positive signed volume.
    pub fn check_orientation(&self) -> Result<()> {
        for e in 0..self.num_simplices() {
            let v = self.volume(e);
            if !(v > 0.0) {
                return Err(Error::InvertedSimplex {
                    index: e,
                    volume: v,
                });
            }
        }
        Ok(())
    }

    /// Same connectivity and labels with new vertex positions.
    pub fn with_coords(&self, coords: Vec<Point>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::invalid("coordinate count changed"));
        }
        let out = MeshLevel {
            coords,
            ..self.clone()
        };
        out.check_orientation()?;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.subdomains.len()
    }

    pub fn num_dofs(&self, components: usize) -> usize {
        self.coords.len() * components
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn simplex(&self, e: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.simplices[e * n..(e + 1) * n]
    }

    pub fn simplices(&self) -> impl Iterator<Item = &[usize]> {
        self.simplices.chunks(self.dim + 1)
    }

    pub fn subdomain(&self, e: usize) -> Subdomain {
        self.subdomains[e]
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn simplex_points(&self, e: usize) -> Vec<Point> {
        self.simplex(e).iter().map(|&v| self.coords[v]).collect()
    }

    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        element_geometry(&self.simplex_points(e), self.dim)
    }

    pub fn volume(&self, e: usize) -> f64 {
        signed_volume(&self.simplex_points(e), self.dim)
    }

    pub fn centroid(&self, e: usize) -> Point {
        centroid_of(&self.simplex_points(e))
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_simplices()).map(|e| self.volume(e)).sum()
    }

    pub fn subdomain_volume(&self, which: Subdomain) -> f64 {
        (0..self.num_simplices())
            .filter(|&e| self.subdomains[e] == which)
            .map(|e| self.volume(e))
            .sum()
    }

    /// Volume of all matrix (`Out`) simplices.
    pub fn outer_volume(&self) -> f64 {
        self.subdomain_volume(Subdomain::Out)
    }

    pub fn num_boundary_facets(&self) -> usize {
        self.boundary_labels.len()
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = (&[usize], BoundaryLabel)> {
        self.boundary_facets
            .chunks(self.dim)
            .zip(self.boundary_labels.iter().copied())
    }

    /// Distinct boundary labels present on this level, sorted.
    pub fn boundary_label_set(&self) -> Vec<BoundaryLabel> {
        let mut v = self.boundary_labels.clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn num_interface_facets(&self) -> usize {
        self.interface_facets.len() / self.dim
    }

    pub fn interface_facets(&self) -> impl Iterator<Item = &[usize]> {
        self.interface_facets.chunks(self.dim)
    }

    pub fn facet_points(&self, f: &[usize]) -> Vec<Point> {
        f.iter().map(|&v| self.coords[v]).collect()
    }

    /// Total measure of the interface (perimeter in 2D, area in 3D).
    pub fn interface_measure(&self) -> f64 {
        self.interface_facets()
            .map(|f| facet_normal(&self.facet_points(f), self.dim).0)
            .sum()
    }

    /// Sorted list of vertices lying on the interface.
    pub fn interface_vertices(&self) -> Vec<usize> {
        let mut v = self.interface_facets.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Unique edges as sorted vertex pairs, in order of first appearance.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for s in self.simplices() {
            for i in 0..s.len() {
                for j in i + 1..s.len() {
                    let e = (s[i].min(s[j]), s[i].max(s[j]));
                    if seen.insert(e) {
                        out.push(e);
                    }
                }
            }
        }
        out
    }

    fn edge_length(&self, (a, b): (usize, usize)) -> f64 {
        geometry::distance(&self.coords[a], &self.coords[b])
    }

    pub fn min_edge_length(&self) -> f64 {
        self.edges()
            .into_iter()
            .map(|e| self.edge_length(e))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .into_iter()
            .map(|e| self.edge_length(e))
            .fold(0.0, f64::max)
    }

    /// Shortest incident edge length for every vertex.
    pub fn vertex_min_edge(&self) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.num_vertices()];
        for e in self.edges() {
            let l = self.edge_length(e);
            out[e.0] = out[e.0].min(l);
            out[e.1] = out[e.1].min(l);
        }
        out
    }

    /// Indices of simplices incident to each vertex.
    pub fn vertex_to_simplices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_vertices()];
        for (e, s) in self.simplices().enumerate() {
            for &v in s {
                out[v].push(e);
            }
        }
        out
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.coords {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub(crate) fn raw_simplices(&self) -> &[usize] {
        &self.simplices
    }

    pub(crate) fn raw_boundary(&self) -> (&[usize], &[BoundaryLabel]) {
        (&self.boundary_facets, &self.boundary_labels)
    }

    pub(crate) fn raw_interface(&self) -> &[usize] {
        &self.interface_facets
    }
}

pub(crate) fn centroid_of(pts: &[Point]) -> Point {
    let n = pts.len() as f64;
    let mut c = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> MeshLevel {
        MeshLevel::new(
            2,
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![0, 1, 2, 0, 2, 3],
            vec![Subdomain::Out, Subdomain::Int(0)],
            vec![0, 1, 1, 2, 2, 3, 3, 0],
            vec![
                BoundaryLabel::Bottom,
                BoundaryLabel::Right,
                BoundaryLabel::Top,
                BoundaryLabel::Left,
            ],
            vec![0, 2],
        )
        .unwrap()
    }

    #[test]
    fn interface_is_reoriented_out_of_inclusion() {
        let m = unit_square();
        let f: Vec<_> = m.interface_facets().next().unwrap().to_vec();
        // inclusion is the upper-left triangle, so the normal must point to (1,-1)
        let (_, n) = facet_normal(&m.facet_points(&f), 2);
        assert!(n[0] > 0.0 && n[1] < 0.0);
    }

    #[test]
    fn missing_boundary_label_is_non_conforming() {
        let err = MeshLevel::new(
            2,
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            vec![0, 1, 2, 0, 2, 3],
            vec![Subdomain::Out; 2],
            vec![0, 1, 1, 2, 2, 3],
            vec![
                BoundaryLabel::Bottom,
                BoundaryLabel::Right,
                BoundaryLabel::Top,
            ],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConforming(_)));
    }

    #[test]
    fn hanging_node_is_rejected() {
        // left triangle split at the midpoint of the shared diagonal only
        let coords = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.5, 0.5, 0.0],
        ];
        let err = MeshLevel::new(
            2,
            coords,
            vec![0, 1, 2, 0, 4, 3, 4, 2, 3],
            vec![Subdomain::Out; 3],
            vec![0, 1, 1, 2, 2, 3, 3, 0],
            vec![BoundaryLabel::Bottom; 4],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConforming(_)));
    }

    #[test]
    fn inverted_simplex_is_rejected() {
        let err = MeshLevel::new(
            2,
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0, 2, 1],
            vec![Subdomain::Out],
            vec![0, 1, 1, 2, 2, 0],
            vec![BoundaryLabel::Bottom; 3],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvertedSimplex { index: 0, .. }));
    }

    #[test]
    fn boundary_label_axes() {
        assert_eq!(BoundaryLabel::Top.normal_axis(2), 1);
        assert_eq!(BoundaryLabel::Top.normal_axis(3), 2);
        assert_eq!(BoundaryLabel::Left.normal_axis(3), 1);
        assert_eq!(BoundaryLabel::for_axis(3, 0, true), BoundaryLabel::Back);
        assert_eq!(BoundaryLabel::parse("front"), Some(BoundaryLabel::Front));
    }

    #[test]
    fn volumes_and_edges() {
        let m = unit_square();
        assert_eq!(m.total_volume(), 1.0);
        assert_eq!(m.outer_volume(), 0.5);
        assert_eq!(m.edges().len(), 5);
        assert!((m.interface_measure() - 2f64.sqrt()).abs() < 1e-15);
    }
}
