//! Simplex aspect ratios.

use super::geometry::{cross, dot, norm, sub, Point};
use super::MeshLevel;

/// Aspect-ratio statistics of one level; `R / (d r)` equals 1 for a regular simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Simplices with (numerically) zero volume; they report infinity.
    pub degenerate: Vec<usize>,
}

pub(crate) fn aspect_ratio(p: &[Point], dim: usize) -> f64 {
    let ratio = if dim == 2 {
        let a = norm(&sub(&p[1], &p[2]));
        let b = norm(&sub(&p[0], &p[2]));
        let c = norm(&sub(&p[0], &p[1]));
        let e1 = sub(&p[1], &p[0]);
        let e2 = sub(&p[2], &p[0]);
        let area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        let s = 0.5 * (a + b + c);
        let circum = a * b * c / (4.0 * area);
        let inr = area / s;
        circum / (2.0 * inr)
    } else {
        let a = sub(&p[1], &p[0]);
        let b = sub(&p[2], &p[0]);
        let c = sub(&p[3], &p[0]);
        let det = dot(&a, &cross(&b, &c));
        let ca = cross(&b, &c);
        let cb = cross(&c, &a);
        let cc = cross(&a, &b);
        let (la, lb, lc) = (dot(&a, &a), dot(&b, &b), dot(&c, &c));
        let off = [
            (la * ca[0] + lb * cb[0] + lc * cc[0]) / (2.0 * det),
            (la * ca[1] + lb * cb[1] + lc * cc[1]) / (2.0 * det),
            (la * ca[2] + lb * cb[2] + lc * cc[2]) / (2.0 * det),
        ];
        let circum = norm(&off);
        let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        let area: f64 = faces
            .iter()
            .map(|f| 0.5 * norm(&cross(&sub(&p[f[1]], &p[f[0]]), &sub(&p[f[2]], &p[f[0]]))))
            .sum();
        let inr = 0.5 * det.abs() / area;
        circum / (3.0 * inr)
    };
    if ratio.is_finite() && ratio < 1e15 {
        ratio
    } else {
        f64::INFINITY
    }
}

/// Aspect-ratio summary over all simplices of a level.
pub fn mesh_quality(level: &MeshLevel) -> QualitySummary {
    let dim = level.dim();
    let mut summary = QualitySummary {
        min: f64::INFINITY,
        max: 0.0,
        mean: 0.0,
        degenerate: Vec::new(),
    };
    let n = level.num_simplices();
    for e in 0..n {
        let q = aspect_ratio(&level.simplex_points(e), dim);
        if q.is_infinite() {
            summary.degenerate.push(e);
        }
        summary.min = summary.min.min(q);
        summary.max = summary.max.max(q);
        summary.mean += q / n as f64;
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilateral_triangle_is_one() {
        let h = 3f64.sqrt() / 2.0;
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]];
        assert!((aspect_ratio(&p, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn right_isoceles_triangle() {
        // R = sqrt(2)/2 (half the hypotenuse), r = (2 - sqrt 2)/2
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let r_circ = 2f64.sqrt() / 2.0;
        let r_in = (2.0 - 2f64.sqrt()) / 2.0;
        let expected = r_circ / (2.0 * r_in);
        assert!((aspect_ratio(&p, 2) - expected).abs() < 1e-14);
        assert!((expected - 1.2071067811865475).abs() < 1e-15);
    }

    #[test]
    fn flat_triangle_is_infinite() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        assert!(aspect_ratio(&p, 2).is_infinite());
    }

    #[test]
    fn regular_tetrahedron_is_one() {
        let p = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ];
        assert!((aspect_ratio(&p, 3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flat_tetrahedron_is_infinite() {
        let p = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        assert!(aspect_ratio(&p, 3).is_infinite());
    }
}
