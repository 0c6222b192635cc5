//! Nested refinement levels and their joint deformation.

use super::geometry::Point;
use super::refine::{refine_uniform_with, RefinementMap};
use super::MeshLevel;
use crate::error::{Error, Result};

/// Coarse-to-fine stack of red-refined levels.
///
/// Vertex `i` of level `l` is vertex `i` of every finer level, with identical
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMeshHierarchy {
    levels: Vec<MeshLevel>,
    /// `maps[l]` links level `l` to level `l + 1`.
    maps: Vec<RefinementMap>,
}

impl SimplicialMeshHierarchy {
    /// Refine `coarse` until there are `num_levels` levels.
    pub fn new(
        coarse: MeshLevel,
        num_levels: usize,
        snap: Option<&dyn Fn(&Point) -> Point>,
    ) -> Result<Self> {
        if num_levels == 0 {
            return Err(Error::invalid("a hierarchy needs at least one level"));
        }
        let mut levels = vec![coarse];
        let mut maps = Vec::new();
        for _ in 1..num_levels {
            let (fine, map) = refine_uniform_with(levels.last().unwrap(), snap)?;
            levels.push(fine);
            maps.push(map);
        }
        Ok(SimplicialMeshHierarchy { levels, maps })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn level(&self, l: usize) -> &MeshLevel {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[MeshLevel] {
        &self.levels
    }

    pub fn coarsest(&self) -> &MeshLevel {
        &self.levels[0]
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().unwrap()
    }

    /// Refinement map from level `l` to level `l + 1`.
    pub fn map(&self, l: usize) -> &RefinementMap {
        &self.maps[l]
    }

    pub fn maps(&self) -> &[RefinementMap] {
        &self.maps
    }

    /// Move the finest vertices by `scale * displacement` and every coarser
    /// vertex by the value at its nested fine counterpart.
    ///
    /// `displacement` uses the interleaved layout `v * dim + c`. The result is
    /// rejected if any simplex on any level loses positive orientation.
    pub fn deform(&self, displacement: &[f64], scale: f64) -> Result<Self> {
        let dim = self.dim();
        if displacement.len() != self.finest().num_vertices() * dim {
            return Err(Error::invalid(format!(
                "displacement has {} entries, expected {}",
                displacement.len(),
                self.finest().num_vertices() * dim
            )));
        }
        let mut levels = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let coords: Vec<Point> = level
                .coords()
                .iter()
                .enumerate()
                .map(|(v, p)| {
                    let mut q = *p;
                    for c in 0..dim {
                        q[c] += scale * displacement[v * dim + c];
                    }
                    q
                })
                .collect();
            levels.push(level.with_coords(coords).map_err(|e| match e {
                Error::InvertedSimplex { index, volume } => Error::MeshValidity(format!(
                    "deformation inverts simplex {index} (volume {volume:e})"
                )),
                other => other,
            })?);
        }
        Ok(SimplicialMeshHierarchy {
            levels,
            maps: self.maps.clone(),
        })
    }

    /// Exact coordinate equality of every coarse vertex with its fine counterpart.
    pub fn check_nesting(&self) -> bool {
        self.levels.windows(2).all(|w| {
            let (c, f) = (&w[0], &w[1]);
            c.coords().iter().zip(f.coords()).all(|(a, b)| a == b)
        })
    }

    /// Mesh width (longest edge) of level `l`.
    pub fn mesh_width(&self, l: usize) -> f64 {
        self.levels[l].max_edge_length()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};
    use proptest::prelude::*;

    fn hierarchy() -> SimplicialMeshHierarchy {
        let spec = InclusionMeshSpec::unit_box(InclusionShape::Circle { radius: 0.25 }, 16);
        let coarse = generate::inclusion_mesh_2d(&spec).unwrap();
        SimplicialMeshHierarchy::new(coarse, 3, None).unwrap()
    }

    #[test]
    fn zero_displacement_is_identity() {
        let h = hierarchy();
        let zero = vec![0.0; h.finest().num_vertices() * 2];
        assert_eq!(h.deform(&zero, 1.0).unwrap(), h);
    }

    #[test]
    fn constant_displacement_translates_all_levels() {
        let h = hierarchy();
        let n = h.finest().num_vertices();
        let u: Vec<f64> = (0..n).flat_map(|_| [0.1, -0.2]).collect();
        let d = h.deform(&u, 0.5).unwrap();
        for (a, b) in h.levels().iter().zip(d.levels()) {
            for (p, q) in a.coords().iter().zip(b.coords()) {
                assert_eq!(q[0], p[0] + 0.5 * 0.1);
                assert_eq!(q[1], p[1] + 0.5 * -0.2);
            }
        }
    }

    #[test]
    fn inverting_deformation_rejected() {
        let h = hierarchy();
        let n = h.finest().num_vertices();
        let mut u = vec![0.0; 2 * n];
        // push one interface vertex far across the inclusion
        let v = h.finest().interface_vertices()[0];
        u[2 * v] = -0.7;
        assert!(matches!(h.deform(&u, 1.0), Err(Error::MeshValidity(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_small_deformation_keeps_nesting(seed in any::<u64>(), amp in 0.0..0.2f64) {
            use rand::{Rng, SeedableRng};
            let h = hierarchy();
            let hmin = h.finest().min_edge_length();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = h.finest().num_vertices();
            let u: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0) * amp * hmin).collect();
            let d = h.deform(&u, 1.0).unwrap();
            prop_assert!(d.check_nesting());
            let fine = d.finest();
            for l in 0..d.num_levels() {
                for (v, p) in d.level(l).coords().iter().enumerate() {
                    prop_assert_eq!(*p, fine.coords()[v]);
                }
            }
        }
    }
}
