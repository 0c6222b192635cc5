//! Small dense geometry helpers for simplices of dimension 1 to 3.
//!
//! Points are always stored as `[f64; 3]`; in two dimensions the third
//! coordinate is zero and ignored.

pub type Point = [f64; 3];

#[inline]
pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add_scaled(a: &Point, s: f64, b: &Point) -> Point {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn midpoint(a: &Point, b: &Point) -> Point {
    [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ]
}

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    norm(&sub(a, b))
}

/// Signed volume (area in 2D) of a simplex given by `dim + 1` points.
pub fn signed_volume(p: &[Point], dim: usize) -> f64 {
    match dim {
        2 => {
            let a = sub(&p[1], &p[0]);
            let b = sub(&p[2], &p[0]);
            0.5 * (a[0] * b[1] - a[1] * b[0])
        }
        3 => {
            let a = sub(&p[1], &p[0]);
            let b = sub(&p[2], &p[0]);
            let c = sub(&p[3], &p[0]);
            dot(&a, &cross(&b, &c)) / 6.0
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Volume and barycentric-coordinate gradients of a P1 simplex.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub volume: f64,
    /// `grads[i]` is the (constant) gradient of the i-th hat function.
    pub grads: [Point; 4],
}

pub fn element_geometry(p: &[Point], dim: usize) -> ElementGeometry {
    let mut grads = [[0.0; 3]; 4];
    let volume = match dim {
        2 => {
            let e1 = sub(&p[1], &p[0]);
            let e2 = sub(&p[2], &p[0]);
            let det = e1[0] * e2[1] - e2[0] * e1[1];
            grads[1] = [e2[1] / det, -e2[0] / det, 0.0];
            grads[2] = [-e1[1] / det, e1[0] / det, 0.0];
            0.5 * det
        }
        3 => {
            let e1 = sub(&p[1], &p[0]);
            let e2 = sub(&p[2], &p[0]);
            let e3 = sub(&p[3], &p[0]);
            let c23 = cross(&e2, &e3);
            let det = dot(&e1, &c23);
            let c31 = cross(&e3, &e1);
            let c12 = cross(&e1, &e2);
            for k in 0..3 {
                grads[1][k] = c23[k] / det;
                grads[2][k] = c31[k] / det;
                grads[3][k] = c12[k] / det;
            }
            det / 6.0
        }
        _ => panic!("unsupported dimension {dim}"),
    };
    for k in 0..3 {
        grads[0][k] = -(1..=dim).map(|i| grads[i][k]).sum::<f64>();
    }
    ElementGeometry { volume, grads }
}

/// Measure and unit normal of an oriented facet (`dim` points).
///
/// In 2D the facet `(a, b)` has normal `(t_y, -t_x)` with `t = b - a`; in 3D
/// the facet `(a, b, c)` has normal `(b - a) x (c - a)`.
pub fn facet_normal(p: &[Point], dim: usize) -> (f64, Point) {
    match dim {
        2 => {
            let t = sub(&p[1], &p[0]);
            let l = norm(&t);
            (l, [t[1] / l, -t[0] / l, 0.0])
        }
        3 => {
            let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            let l = norm(&n);
            (0.5 * l, [n[0] / l, n[1] / l, n[2] / l])
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Tangential gradients of the facet's own barycentric functions.
///
/// For a P1 field these are exactly the surface gradients on the facet; only
/// the first `dim` entries are meaningful.
pub fn facet_surface_gradients(p: &[Point], dim: usize) -> [Point; 3] {
    let mut g = [[0.0; 3]; 3];
    match dim {
        2 => {
            let t = sub(&p[1], &p[0]);
            let l2 = dot(&t, &t);
            g[0] = [-t[0] / l2, -t[1] / l2, 0.0];
            g[1] = [t[0] / l2, t[1] / l2, 0.0];
        }
        3 => {
            let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            let twice_area = norm(&n);
            let nu = [n[0] / twice_area, n[1] / twice_area, n[2] / twice_area];
            for i in 0..3 {
                let e = sub(&p[(i + 2) % 3], &p[(i + 1) % 3]);
                let c = cross(&nu, &e);
                g[i] = [c[0] / twice_area, c[1] / twice_area, c[2] / twice_area];
            }
        }
        _ => panic!("unsupported dimension {dim}"),
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_triangle_gradients() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let g = element_geometry(&p, 2);
        assert_eq!(g.volume, 0.5);
        assert_eq!(g.grads[0], [-1.0, -1.0, 0.0]);
        assert_eq!(g.grads[1], [1.0, 0.0, 0.0]);
        assert_eq!(g.grads[2], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn tetra_gradients_reproduce_linear_functions() {
        let p = [
            [0.1, 0.0, 0.2],
            [1.0, 0.3, 0.0],
            [0.2, 1.1, 0.1],
            [0.0, 0.2, 0.9],
        ];
        let g = element_geometry(&p, 3);
        assert!(g.volume > 0.0);
        // f(x) = 2x - y + 3z interpolated exactly by P1
        let f = |x: &Point| 2.0 * x[0] - x[1] + 3.0 * x[2];
        let mut grad = [0.0; 3];
        for i in 0..4 {
            for k in 0..3 {
                grad[k] += f(&p[i]) * g.grads[i][k];
            }
        }
        assert!((grad[0] - 2.0).abs() < 1e-12);
        assert!((grad[1] + 1.0).abs() < 1e-12);
        assert!((grad[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn surface_gradients_are_tangential() {
        let p = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]];
        let g = facet_surface_gradients(&p, 3);
        let (_, n) = facet_normal(&p, 3);
        for gi in &g {
            assert!(dot(gi, &n).abs() < 1e-14);
        }
        // lambda_1 restricted to the facet: value 1 at p1, 0 at p0 and p2
        assert!((dot(&g[1], &sub(&p[1], &p[0])) - 1.0).abs() < 1e-12);
        assert!(dot(&g[1], &sub(&p[2], &p[0])).abs() < 1e-12);
    }
}
