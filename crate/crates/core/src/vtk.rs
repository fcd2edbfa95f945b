//! Legacy-format ASCII VTK output of nodal vector fields.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::NodalField3;
use crate::mesh::Mesh;

/// Write `mesh` as an unstructured grid with the given point vector fields.
pub fn write_vtk<W: Write>(
    mut out: W,
    mesh: &Mesh,
    title: &str,
    fields: &[(&str, &NodalField3)],
) -> Result<()> {
    for (name, f) in fields {
        if f.len() != mesh.n_vertices() {
            return Err(Error::Mismatch(format!(
                "field {name} has {} values for {} points",
                f.len(),
                mesh.n_vertices()
            )));
        }
    }
    let nv = mesh.dim() + 1;
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "{}", title.lines().next().unwrap_or("")).unwrap();
    writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {} double", mesh.n_vertices()).unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]).unwrap();
    }
    writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.n_cells() * (nv + 1)).unwrap();
    for cell in mesh.cells() {
        let idx: Vec<String> = cell.iter().map(|i| i.to_string()).collect();
        writeln!(s, "{} {}", nv, idx.join(" ")).unwrap();
    }
    writeln!(s, "CELL_TYPES {}", mesh.n_cells()).unwrap();
    let ty = if mesh.dim() == 2 { 5 } else { 10 };
    for _ in 0..mesh.n_cells() {
        writeln!(s, "{ty}").unwrap();
    }
    if !fields.is_empty() {
        writeln!(s, "POINT_DATA {}", mesh.n_vertices()).unwrap();
        for (name, f) in fields {
            writeln!(s, "VECTORS {name} double").unwrap();
            for v in f.iter() {
                writeln!(s, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]).unwrap();
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Vec3;

    #[test]
    fn vtk_layout() {
        let mesh = Mesh::structured(2, 1).unwrap();
        let m = NodalField3::constant(4, Vec3::z());
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, "t", &[("m", &m), ("M", &m)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("VECTORS M double"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 2);
        assert!(write_vtk(Vec::new(), &mesh, "t", &[("m", &NodalField3::zeros(3))]).is_err());
    }
}
