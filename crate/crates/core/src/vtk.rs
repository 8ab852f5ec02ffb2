//! Legacy-VTK ASCII writer for nodal fields on the structured mesh.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{FieldVector, Mesh, PHI, UX, UY};

/// Renders a field as a `STRUCTURED_GRID` dataset with a vector (first two
/// components) and a scalar (third component).
pub fn render_field(mesh: &Mesh, field: &FieldVector, title: &str, vector_name: &str, scalar_name: &str) -> String {
    let n = mesh.n() + 1;
    let mut s = String::with_capacity(96 * mesh.num_nodes());
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    s.push_str("ASCII\nDATASET STRUCTURED_GRID\n");
    let _ = writeln!(s, "DIMENSIONS {n} {n} 1");
    let _ = writeln!(s, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
    let _ = writeln!(s, "VECTORS {vector_name} double");
    for node in 0..mesh.num_nodes() {
        let _ = writeln!(s, "{:.16e} {:.16e} 0", field.get(node, UX), field.get(node, UY));
    }
    let _ = writeln!(s, "SCALARS {scalar_name} double 1\nLOOKUP_TABLE default");
    for node in 0..mesh.num_nodes() {
        let _ = writeln!(s, "{:.16e}", field.get(node, PHI));
    }
    s
}

pub fn write_state(path: &Path, mesh: &Mesh, field: &FieldVector, time: f64) -> Result<()> {
    let text = render_field(mesh, field, &format!("state at t = {time}"), "u", "phi");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_adjoint(path: &Path, mesh: &Mesh, field: &FieldVector, time: f64) -> Result<()> {
    let text = render_field(mesh, field, &format!("adjoint at t = {time}"), "z_u", "z_phi");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_of_small_grid() {
        let mesh = Mesh::new(2).unwrap();
        let mut f = FieldVector::zeros(&mesh);
        f.set(4, PHI, 0.5);
        f.set(4, UY, -1.0);
        let text = render_field(&mesh, &f, "t", "u", "phi");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[4], "DIMENSIONS 3 3 1");
        assert_eq!(lines[5], "POINTS 9 double");
        // 9 points, POINT_DATA, VECTORS header, 9 vectors, 2 scalar headers, 9 scalars
        assert_eq!(lines.len(), 6 + 9 + 2 + 9 + 2 + 9);
        let center = lines[6 + 9 + 2 + 4];
        assert!(center.starts_with("0.0000000000000000e0 -1.0000000000000000e0"));
        assert_eq!(lines[lines.len() - 5], "5.0000000000000000e-1");
    }
}
