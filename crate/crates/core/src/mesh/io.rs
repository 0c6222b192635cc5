//! Plain-text mesh files and legacy VTK output.
//!
//! Mesh file layout:
//!
//! ```text
//! dim nv ne nbf nif
//! x y [z]                 (nv lines)
//! v0 .. vd subdomain      (ne lines; 0 = matrix, i + 1 = inclusion i)
//! f0 .. f(d-1) label      (nbf lines; left/right/bottom/top/front/back)
//! f0 .. f(d-1) flag       (nif lines; +1 as stored, -1 reversed)
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{BoundaryLabel, MeshLevel, Point, Subdomain};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(level: &MeshLevel, mut out: W) -> Result<()> {
    let dim = level.dim();
    let mut s = String::new();
    writeln!(
        s,
        "{dim} {} {} {} {}",
        level.num_vertices(),
        level.num_simplices(),
        level.num_boundary_facets(),
        level.num_interface_facets()
    )
    .unwrap();
    for p in level.coords() {
        let parts: Vec<String> = p[..dim].iter().map(|x| format!("{x:?}")).collect();
        writeln!(s, "{}", parts.join(" ")).unwrap();
    }
    for (e, simplex) in level.simplices().enumerate() {
        for v in simplex {
            write!(s, "{v} ").unwrap();
        }
        writeln!(s, "{}", level.subdomain(e).code()).unwrap();
    }
    for (f, label) in level.boundary_facets() {
        for v in f {
            write!(s, "{v} ").unwrap();
        }
        writeln!(s, "{label}").unwrap();
    }
    for f in level.interface_facets() {
        for v in f {
            write!(s, "{v} ").unwrap();
        }
        writeln!(s, "1").unwrap();
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_mesh<R: BufRead>(input: R) -> Result<MeshLevel> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
        let (n, l) = lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })?;
        Ok((n, l?.split_whitespace().map(str::to_owned).collect()))
    };
    let parse_usize = |line: usize, s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected an integer, got `{s}`"),
        })
    };

    let (ln, header) = next("header")?;
    if header.len() != 5 {
        return Err(Error::Parse {
            line: ln,
            message: "header needs `dim nv ne nbf nif`".into(),
        });
    }
    let h: Vec<usize> = header
        .iter()
        .map(|s| parse_usize(ln, s))
        .collect::<Result<_>>()?;
    let (dim, nv, ne, nbf, nif) = (h[0], h[1], h[2], h[3], h[4]);
    if dim != 2 && dim != 3 {
        return Err(Error::Parse {
            line: ln,
            message: format!("dimension {dim} not supported"),
        });
    }

    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, f) = next("coordinates")?;
        if f.len() != dim {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {dim} coordinates"),
            });
        }
        let mut p: Point = [0.0; 3];
        for (k, s) in f.iter().enumerate() {
            p[k] = s.parse().map_err(|_| Error::Parse {
                line: ln,
                message: format!("expected a number, got `{s}`"),
            })?;
        }
        coords.push(p);
    }
    let mut simplices = Vec::with_capacity(ne * (dim + 1));
    let mut subdomains = Vec::with_capacity(ne);
    for _ in 0..ne {
        let (ln, f) = next("element")?;
        if f.len() != dim + 2 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {} vertices and a label", dim + 1),
            });
        }
        for s in &f[..=dim] {
            simplices.push(parse_usize(ln, s)?);
        }
        subdomains.push(Subdomain::from_code(parse_usize(ln, &f[dim + 1])? as u32));
    }
    let mut boundary_facets = Vec::with_capacity(nbf * dim);
    let mut boundary_labels = Vec::with_capacity(nbf);
    for _ in 0..nbf {
        let (ln, f) = next("boundary facet")?;
        if f.len() != dim + 1 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {dim} vertices and a label"),
            });
        }
        for s in &f[..dim] {
            boundary_facets.push(parse_usize(ln, s)?);
        }
        boundary_labels.push(BoundaryLabel::parse(&f[dim]).ok_or_else(|| Error::Parse {
            line: ln,
            message: format!("unknown boundary label `{}`", f[dim]),
        })?);
    }
    let mut interface_facets = Vec::with_capacity(nif * dim);
    for _ in 0..nif {
        let (ln, f) = next("interface facet")?;
        if f.len() != dim + 1 {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {dim} vertices and a flag"),
            });
        }
        let mut verts: Vec<usize> = f[..dim]
            .iter()
            .map(|s| parse_usize(ln, s))
            .collect::<Result<_>>()?;
        match f[dim].as_str() {
            "1" | "+1" => {}
            "-1" => verts.swap(0, 1),
            other => {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("orientation flag must be 1 or -1, got `{other}`"),
                })
            }
        }
        interface_facets.extend(verts);
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

/// Legacy ASCII VTK unstructured grid with subdomain codes and optional point data.
pub fn write_vtk<W: Write>(
    level: &MeshLevel,
    point_data: &[(&str, &[f64])],
    mut out: W,
) -> Result<()> {
    let dim = level.dim();
    let nv = level.num_vertices();
    let ne = level.num_simplices();
    let mut s = String::new();
    s.push_str(
        "# vtk DataFile Version 3.0\nshape optimization mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n",
    );
    writeln!(s, "POINTS {nv} double").unwrap();
    for p in level.coords() {
        writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    writeln!(s, "CELLS {ne} {}", ne * (dim + 2)).unwrap();
    for simplex in level.simplices() {
        write!(s, "{}", dim + 1).unwrap();
        for v in simplex {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..ne {
        writeln!(s, "{cell_type}").unwrap();
    }
    writeln!(
        s,
        "CELL_DATA {ne}\nSCALARS subdomain int 1\nLOOKUP_TABLE default"
    )
    .unwrap();
    for &sd in level.subdomains() {
        writeln!(s, "{}", sd.code()).unwrap();
    }
    if !point_data.is_empty() {
        writeln!(s, "POINT_DATA {nv}").unwrap();
        for (name, values) in point_data {
            if values.len() != nv {
                return Err(Error::invalid(format!(
                    "point data `{name}` has {} values for {nv} points",
                    values.len()
                )));
            }
            writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
            for v in *values {
                writeln!(s, "{v:?}").unwrap();
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, InclusionMeshSpec, InclusionShape};

    #[test]
    fn mesh_file_round_trip_is_exact() {
        let spec = InclusionMeshSpec::unit_box(
            InclusionShape::Star {
                radius: 0.2,
                amplitude: 0.2,
                lobes: 5,
            },
            16,
        );
        let m = generate::inclusion_mesh_2d(&spec).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reversed_flag_is_reoriented() {
        let text = "2 4 2 4 1\n0 0\n1 0\n1 1\n0 1\n0 1 2 0\n0 2 3 1\n0 1 bottom\n1 2 right\n2 3 top\n3 0 left\n2 0 -1\n";
        let m = read_mesh(text.as_bytes()).unwrap();
        assert_eq!(m.num_interface_facets(), 1);
        let text_bad = "2 4 2 4 1\n0 0\n1 0\n1 1\n0 1\n0 1 2 0\n0 2 3 1\n0 1 bottom\n1 2 right\n2 3 top\n3 0 sideways\n2 0 1\n";
        assert!(matches!(
            read_mesh(text_bad.as_bytes()),
            Err(Error::Parse { line: 11, .. })
        ));
    }

    #[test]
    fn vtk_has_expected_sections() {
        let m = generate::structured_box_2d([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let k = vec![0.0; m.num_vertices()];
        let mut buf = Vec::new();
        write_vtk(&m, &[("curvature", &k)], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("POINTS 9 double"));
        assert!(s.contains("CELLS 8 32"));
        assert!(s.contains("CELL_DATA 8"));
        assert!(s.contains("SCALARS curvature double 1"));
    }
}
