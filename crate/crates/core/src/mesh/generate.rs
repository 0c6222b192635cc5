//! Built-in mesh generators for the canonical scenarios.
//!
//! The 2D inclusion generator meshes a box containing one star-shaped
//! inclusion (described by a radial function about its centre) with rings of
//! vertices along rays from the centre. Ring vertex counts only ever halve or
//! double between neighbouring rings, which keeps the triangulation
//! conforming without any general-purpose mesher.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::geometry::{distance, signed_volume, Point};
use super::{
    facet_key, local_facet, BoundaryLabel, FacetKey, MeshLevel, SimplicialMeshHierarchy, Subdomain,
};
use crate::error::{Error, Result};

/// Star-shaped inclusion boundary, given as a radius per polar angle.
#[derive(Debug, Clone, PartialEq)]
pub enum InclusionShape {
    Circle {
        radius: f64,
    },
    /// `radius * (1 + amplitude * cos(lobes * theta))`.
    Star {
        radius: f64,
        amplitude: f64,
        lobes: u32,
    },
    /// Axis-aligned square with the given half side length.
    Square {
        half_side: f64,
    },
    /// Regular polygon inscribed in a circle, first vertex at angle `phase`.
    Polygon {
        radius: f64,
        sides: u32,
        phase: f64,
    },
}

impl InclusionShape {
    pub fn radius_at(&self, theta: f64) -> f64 {
        match *self {
            InclusionShape::Circle { radius } => radius,
            InclusionShape::Star {
                radius,
                amplitude,
                lobes,
            } => radius * (1.0 + amplitude * (lobes as f64 * theta).cos()),
            InclusionShape::Square { half_side } => {
                half_side / theta.cos().abs().max(theta.sin().abs())
            }
            InclusionShape::Polygon {
                radius,
                sides,
                phase,
            } => {
                let sector = 2.0 * PI / sides as f64;
                let local = (theta - phase).rem_euclid(sector);
                radius * (PI / sides as f64).cos() / (local - 0.5 * sector).cos()
            }
        }
    }

    /// Mean radius over the full angle range.
    pub fn mean_radius(&self) -> f64 {
        let n = 720;
        (0..n)
            .map(|i| self.radius_at(2.0 * PI * i as f64 / n as f64))
            .sum::<f64>()
            / n as f64
    }

    /// Whether midpoints of refined interface edges should be moved back onto the curve.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self,
            InclusionShape::Circle { .. } | InclusionShape::Star { .. }
        )
    }

    /// Radial projection of `p` onto the boundary curve around `center`.
    pub fn project(&self, center: &Point, p: &Point) -> Point {
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        let theta = dy.atan2(dx);
        let r = self.radius_at(theta);
        [
            center[0] + r * theta.cos(),
            center[1] + r * theta.sin(),
            0.0,
        ]
    }
}

/// Parameters of [`inclusion_mesh_2d`].
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionMeshSpec {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub center: [f64; 2],
    pub shape: InclusionShape,
    /// Number of interface vertices; a multiple of 4, at least 8.
    pub boundary_vertices: usize,
}

impl InclusionMeshSpec {
    /// Unit box with the inclusion in the middle.
    pub fn unit_box(shape: InclusionShape, boundary_vertices: usize) -> Self {
        InclusionMeshSpec {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            center: [0.5, 0.5],
            shape,
            boundary_vertices,
        }
    }

    /// Projection callback for refinement of smooth shapes.
    pub fn snap(&self) -> Option<impl Fn(&Point) -> Point + '_> {
        let c = [self.center[0], self.center[1], 0.0];
        self.shape
            .is_smooth()
            .then_some(move |p: &Point| self.shape.project(&c, p))
    }

    /// Mesh the cell and refine it to `levels` levels, snapping smooth interfaces.
    pub fn hierarchy(&self, levels: usize) -> Result<SimplicialMeshHierarchy> {
        let coarse = inclusion_mesh_2d(self)?;
        let snap = self.snap();
        SimplicialMeshHierarchy::new(
            coarse,
            levels,
            snap.as_ref().map(|f| f as &dyn Fn(&Point) -> Point),
        )
    }
}

struct Rays {
    corners: [f64; 5],
    lower: [f64; 2],
    upper: [f64; 2],
    center: [f64; 2],
}

impl Rays {
    fn new(spec: &InclusionMeshSpec) -> Self {
        let c = spec.center;
        let ang = |x: f64, y: f64| (y - c[1]).atan2(x - c[0]);
        let br = ang(spec.upper[0], spec.lower[1]);
        let mut tr = ang(spec.upper[0], spec.upper[1]);
        let mut tl = ang(spec.lower[0], spec.upper[1]);
        let mut bl = ang(spec.lower[0], spec.lower[1]);
        while tr < br {
            tr += 2.0 * PI;
        }
        while tl < tr {
            tl += 2.0 * PI;
        }
        while bl < tl {
            bl += 2.0 * PI;
        }
        Rays {
            corners: [br, tr, tl, bl, br + 2.0 * PI],
            lower: spec.lower,
            upper: spec.upper,
            center: c,
        }
    }

    /// Angle of vertex `j` on a ring with `m` vertices, and its box side (0 right, 1 top, 2 left, 3 bottom).
    fn angle(&self, m: usize, j: usize) -> (f64, usize) {
        let per = m / 4;
        let q = j / per;
        let t = (j % per) as f64 / per as f64;
        (
            self.corners[q] + t * (self.corners[q + 1] - self.corners[q]),
            q,
        )
    }

    fn box_point(&self, theta: f64, side: usize, at_corner: bool) -> Point {
        let (c, s) = (theta.cos(), theta.sin());
        let (lo, hi, o) = (self.lower, self.upper, self.center);
        if at_corner {
            return match side {
                0 => [hi[0], lo[1], 0.0],
                1 => [hi[0], hi[1], 0.0],
                2 => [lo[0], hi[1], 0.0],
                _ => [lo[0], lo[1], 0.0],
            };
        }
        match side {
            0 => [hi[0], o[1] + (hi[0] - o[0]) * s / c, 0.0],
            1 => [o[0] + (hi[1] - o[1]) * c / s, hi[1], 0.0],
            2 => [lo[0], o[1] + (lo[0] - o[0]) * s / c, 0.0],
            _ => [o[0] + (lo[1] - o[1]) * c / s, lo[1], 0.0],
        }
    }
}

struct Builder {
    coords: Vec<Point>,
    simplices: Vec<usize>,
    subdomains: Vec<Subdomain>,
}

impl Builder {
    fn push(&mut self, p: Point) -> usize {
        self.coords.push(p);
        self.coords.len() - 1
    }

    fn tri(&mut self, a: usize, b: usize, c: usize, sub: Subdomain) {
        let pts = [self.coords[a], self.coords[b], self.coords[c]];
        if signed_volume(&pts, 2) < 0.0 {
            self.simplices.extend_from_slice(&[a, c, b]);
        } else {
            self.simplices.extend_from_slice(&[a, b, c]);
        }
        self.subdomains.push(sub);
    }

    /// Triangulate between ring `inner` and ring `outer` whose count is equal or double.
    fn strip(&mut self, inner: &[usize], outer: &[usize], sub: Subdomain) {
        let m = inner.len();
        if outer.len() == m {
            for i in 0..m {
                let (a, b) = (inner[i], inner[(i + 1) % m]);
                let (c, d) = (outer[(i + 1) % m], outer[i]);
                let ac = distance(&self.coords[a], &self.coords[c]);
                let bd = distance(&self.coords[b], &self.coords[d]);
                if ac <= bd {
                    self.tri(a, b, c, sub);
                    self.tri(a, c, d, sub);
                } else {
                    self.tri(a, b, d, sub);
                    self.tri(b, c, d, sub);
                }
            }
        } else {
            let n = outer.len();
            for i in 0..m {
                let (a, b) = (inner[i], inner[(i + 1) % m]);
                let (o0, o1, o2) = (outer[2 * i], outer[2 * i + 1], outer[(2 * i + 2) % n]);
                self.tri(a, o0, o1, sub);
                self.tri(a, o1, b, sub);
                self.tri(b, o1, o2, sub);
            }
        }
    }
}

/// Mesh a box with one star-shaped inclusion (labelled `Int(0)`).
pub fn inclusion_mesh_2d(spec: &InclusionMeshSpec) -> Result<MeshLevel> {
    let nb = spec.boundary_vertices;
    if nb < 8 || !nb.is_multiple_of(4) {
        return Err(Error::invalid(
            "boundary vertex count must be a multiple of 4 and at least 8",
        ));
    }
    if (0..2).any(|k| !(spec.lower[k] < spec.center[k] && spec.center[k] < spec.upper[k])) {
        return Err(Error::invalid("inclusion centre must lie inside the box"));
    }
    let rays = Rays::new(spec);
    let c3 = [spec.center[0], spec.center[1], 0.0];
    let curve = |theta: f64| {
        let r = spec.shape.radius_at(theta);
        [c3[0] + r * theta.cos(), c3[1] + r * theta.sin(), 0.0]
    };
    // the inclusion must stay clear of the box on every ray
    for j in 0..4 * nb {
        let (th, side) = rays.angle(4 * nb, j);
        let b = rays.box_point(th, side, j % nb == 0);
        if distance(&curve(th), &c3) >= 0.95 * distance(&b, &c3) {
            return Err(Error::invalid("inclusion does not fit into the box"));
        }
    }

    let mut bld = Builder {
        coords: Vec::new(),
        simplices: Vec::new(),
        subdomains: Vec::new(),
    };
    let r_mean = spec.shape.mean_radius();
    let spacing = 2.0 * PI * r_mean / nb as f64;

    let interface: Vec<usize> = (0..nb)
        .map(|j| bld.push(curve(rays.angle(nb, j).0)))
        .collect();

    // interior rings shrink towards the centre
    let layers_in = ((r_mean / spacing).round() as usize).max(1);
    let mut prev = interface.clone();
    for k in 1..layers_in {
        let s = 1.0 - k as f64 / layers_in as f64;
        let m = prev.len();
        let want = 2.0 * PI * r_mean * s / spacing;
        let m_new = if m / 2 >= 4 && (m / 2) as f64 >= want && m.is_multiple_of(8) {
            m / 2
        } else {
            m
        };
        let ring: Vec<usize> = (0..m_new)
            .map(|j| {
                let th = rays.angle(m_new, j).0;
                let r = s * spec.shape.radius_at(th);
                bld.push([c3[0] + r * th.cos(), c3[1] + r * th.sin(), 0.0])
            })
            .collect();
        bld.strip(&ring, &prev, Subdomain::Int(0));
        prev = ring;
    }
    let centre = bld.push(c3);
    for i in 0..prev.len() {
        bld.tri(
            centre,
            prev[i],
            prev[(i + 1) % prev.len()],
            Subdomain::Int(0),
        );
    }

    // exterior rings blend the interface into the box
    let gap: f64 = (0..nb)
        .map(|j| {
            let (th, side) = rays.angle(nb, j);
            distance(&rays.box_point(th, side, j % (nb / 4) == 0), &curve(th))
        })
        .sum::<f64>()
        / nb as f64;
    let layers_out = ((gap / spacing).round() as usize).max(1);
    let step = gap / layers_out as f64;
    let mut prev = interface;
    for k in 1..=layers_out {
        let tau = k as f64 / layers_out as f64;
        let mut m = prev.len();
        let ring_pts = |m: usize| -> Vec<Point> {
            (0..m)
                .map(|j| {
                    let (th, side) = rays.angle(m, j);
                    let b = rays.box_point(th, side, j % (m / 4) == 0);
                    let p = curve(th);
                    [
                        (1.0 - tau) * p[0] + tau * b[0],
                        (1.0 - tau) * p[1] + tau * b[1],
                        0.0,
                    ]
                })
                .collect()
        };
        let pts = ring_pts(m);
        let perimeter: f64 = (0..m).map(|j| distance(&pts[j], &pts[(j + 1) % m])).sum();
        if perimeter / m as f64 > 1.5 * step {
            m *= 2;
        }
        let ring: Vec<usize> = ring_pts(m).into_iter().map(|p| bld.push(p)).collect();
        bld.strip(&prev, &ring, Subdomain::Out);
        prev = ring;
    }

    from_simplices(2, bld.coords, bld.simplices, bld.subdomains)
}

/// Square inclusion centred in the box `[0, size]^2`.
pub fn square_inclusion_2d(size: f64, side: f64, boundary_vertices: usize) -> Result<MeshLevel> {
    inclusion_mesh_2d(&InclusionMeshSpec {
        lower: [0.0, 0.0],
        upper: [size, size],
        center: [0.5 * size, 0.5 * size],
        shape: InclusionShape::Square {
            half_side: 0.5 * side,
        },
        boundary_vertices,
    })
}

/// Periodic arrangement of identical inclusion cells, welded into one mesh.
///
/// Cell `(i, j)` gets inclusion index `j * nx + i`.
pub fn lattice_2d(cell: &InclusionMeshSpec, nx: usize, ny: usize) -> Result<MeshLevel> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(
            "lattice needs at least one cell per direction",
        ));
    }
    let base = inclusion_mesh_2d(cell)?;
    let w = [cell.upper[0] - cell.lower[0], cell.upper[1] - cell.lower[1]];
    let tol = 1e-9 * w[0].max(w[1]);
    let key = |p: &Point| ((p[0] / tol).round() as i64, (p[1] / tol).round() as i64);
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut coords = Vec::new();
    let mut simplices = Vec::new();
    let mut subdomains = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let shift = [i as f64 * w[0], j as f64 * w[1]];
            let map: Vec<usize> = base
                .coords()
                .iter()
                .map(|p| {
                    let q = [p[0] + shift[0], p[1] + shift[1], 0.0];
                    *index.entry(key(&q)).or_insert_with(|| {
                        coords.push(q);
                        coords.len() - 1
                    })
                })
                .collect();
            for (e, s) in base.simplices().enumerate() {
                simplices.extend(s.iter().map(|&v| map[v]));
                subdomains.push(match base.subdomain(e) {
                    Subdomain::Out => Subdomain::Out,
                    Subdomain::Int(_) => Subdomain::Int((j * nx + i) as u32),
                });
            }
        }
    }
    from_simplices(2, coords, simplices, subdomains)
}

/// `n x n` squares, each split along its rising diagonal.
pub fn structured_box_2d(lower: [f64; 2], upper: [f64; 2], n: usize) -> Result<MeshLevel> {
    if n == 0 {
        return Err(Error::invalid("need at least one cell"));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut coords = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = lower[0] + (upper[0] - lower[0]) * i as f64 / n as f64;
            let y = lower[1] + (upper[1] - lower[1]) * j as f64 / n as f64;
            coords.push([x, y, 0.0]);
        }
    }
    let mut simplices = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            simplices.extend_from_slice(&[a, b, c, a, c, d]);
        }
    }
    let subdomains = vec![Subdomain::Out; 2 * n * n];
    from_simplices(2, coords, simplices, subdomains)
}

/// `n^3` cubes split into six Kuhn tetrahedra each.
///
/// Cells with index range `inclusion = (lo, hi)` (inclusive lower, exclusive
/// upper, per axis) are labelled `Int(0)`.
pub fn structured_box_3d(
    lower: [f64; 3],
    upper: [f64; 3],
    n: usize,
    inclusion: Option<([usize; 3], [usize; 3])>,
) -> Result<MeshLevel> {
    if n == 0 {
        return Err(Error::invalid("need at least one cell"));
    }
    let idx = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let mut coords = Vec::new();
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let t = [i, j, k].map(|v| v as f64 / n as f64);
                coords.push([
                    lower[0] + (upper[0] - lower[0]) * t[0],
                    lower[1] + (upper[1] - lower[1]) * t[1],
                    lower[2] + (upper[2] - lower[2]) * t[2],
                ]);
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut simplices = Vec::new();
    let mut subdomains = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let inside = inclusion.is_some_and(|(lo, hi)| {
                    (lo[0]..hi[0]).contains(&i)
                        && (lo[1]..hi[1]).contains(&j)
                        && (lo[2]..hi[2]).contains(&k)
                });
                let sub = if inside {
                    Subdomain::Int(0)
                } else {
                    Subdomain::Out
                };
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [idx(c[0], c[1], c[2]), 0, 0, 0];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = idx(c[0], c[1], c[2]);
                    }
                    let pts: Vec<Point> = tet.iter().map(|&v| coords[v]).collect();
                    if signed_volume(&pts, 3) < 0.0 {
                        tet.swap(2, 3);
                    }
                    simplices.extend_from_slice(&tet);
                    subdomains.push(sub);
                }
            }
        }
    }
    from_simplices(3, coords, simplices, subdomains)
}

/// Build a level from raw simplices inside an axis-aligned box.
///
/// Boundary facets are found topologically and labelled by the box face they
/// lie on; every facet between different subdomains becomes an interface facet.
pub fn from_simplices(
    dim: usize,
    coords: Vec<Point>,
    simplices: Vec<usize>,
    subdomains: Vec<Subdomain>,
) -> Result<MeshLevel> {
    let nvs = dim + 1;
    let mut count: HashMap<FacetKey, (usize, usize)> = HashMap::new();
    for (e, s) in simplices.chunks(nvs).enumerate() {
        for i in 0..nvs {
            let (f, m) = local_facet(s, i);
            let entry = count.entry(facet_key(&f[..m])).or_insert((0, e));
            entry.0 += 1;
        }
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &coords {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let tol = 1e-10 * (0..dim).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);

    let mut boundary_facets = Vec::new();
    let mut boundary_labels = Vec::new();
    let mut interface_facets = Vec::new();
    for (e, s) in simplices.chunks(nvs).enumerate() {
        for i in 0..nvs {
            let (f, m) = local_facet(s, i);
            let f = &f[..m];
            let key = facet_key(f);
            let (n, first) = count[&key];
            if n == 1 {
                let label = (0..dim)
                    .flat_map(|axis| [(axis, false), (axis, true)])
                    .find(|&(axis, upper)| {
                        let target = if upper { hi[axis] } else { lo[axis] };
                        f.iter().all(|&v| (coords[v][axis] - target).abs() <= tol)
                    })
                    .map(|(axis, upper)| BoundaryLabel::for_axis(dim, axis, upper))
                    .ok_or_else(|| {
                        Error::NonConforming(format!(
                            "boundary facet {f:?} does not lie on a face of the bounding box"
                        ))
                    })?;
                boundary_facets.extend_from_slice(f);
                boundary_labels.push(label);
            } else if first != e && subdomains[first] != subdomains[e] {
                // the first visitor is always the lower simplex index; record once
                interface_facets.extend_from_slice(f);
            }
        }
    }
    MeshLevel::new(
        dim,
        coords,
        simplices,
        subdomains,
        boundary_facets,
        boundary_labels,
        interface_facets,
    )
}
