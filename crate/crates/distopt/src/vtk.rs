//! Legacy ASCII VTK writer for unstructured quadrilateral grids.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use distopt_core::Mesh2D;

/// Values of a named field; vectors are stored as interleaved (x, y) pairs.
#[derive(Debug, Clone, Copy)]
pub enum FieldData<'a> {
    Scalar(&'a [f64]),
    Vector(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub struct Field<'a> {
    pub name: &'a str,
    pub data: FieldData<'a>,
}

impl<'a> Field<'a> {
    pub fn scalar(name: &'a str, values: &'a [f64]) -> Self {
        Self {
            name,
            data: FieldData::Scalar(values),
        }
    }

    pub fn vector(name: &'a str, values: &'a [f64]) -> Self {
        Self {
            name,
            data: FieldData::Vector(values),
        }
    }

    fn entries(&self) -> usize {
        match self.data {
            FieldData::Scalar(v) => v.len(),
            FieldData::Vector(v) => v.len() / 2,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VtkError {
    #[error("field {name} has {found} entries, expected {expected}")]
    FieldSize {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("field name {0:?} must be non-empty without whitespace")]
    FieldName(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check(fields: &[Field<'_>], expected: usize) -> Result<(), VtkError> {
    for f in fields {
        if f.name.is_empty() || f.name.chars().any(char::is_whitespace) {
            return Err(VtkError::FieldName(f.name.into()));
        }
        let odd = matches!(f.data, FieldData::Vector(v) if v.len() % 2 != 0);
        if f.entries() != expected || odd {
            return Err(VtkError::FieldSize {
                name: f.name.into(),
                expected,
                found: f.entries(),
            });
        }
    }
    Ok(())
}

fn write_section(out: &mut String, fields: &[Field<'_>]) {
    for f in fields {
        match f.data {
            FieldData::Scalar(v) => {
                let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
                for x in v {
                    let _ = writeln!(out, "{x:e}");
                }
            }
            FieldData::Vector(v) => {
                let _ = writeln!(out, "VECTORS {} double", f.name);
                for p in v.chunks_exact(2) {
                    let _ = writeln!(out, "{:e} {:e} 0", p[0], p[1]);
                }
            }
        }
    }
}

/// Renders the file body. Numbers use the shortest representation that
/// reads back to the same `f64`.
pub fn render_vtk(mesh: &Mesh2D, point: &[Field<'_>], cell: &[Field<'_>]) -> Result<String, VtkError> {
    check(point, mesh.num_nodes())?;
    check(cell, mesh.num_elements())?;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\ndistopt\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{:e} {:e} 0", p[0], p[1]);
    }
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELLS {ne} {}", 5 * ne);
    for c in mesh.elements() {
        let _ = writeln!(out, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("9\n");
    }
    if !point.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
        write_section(&mut out, point);
    }
    if !cell.is_empty() {
        let _ = writeln!(out, "CELL_DATA {ne}");
        write_section(&mut out, cell);
    }
    Ok(out)
}

pub fn write_vtk(mesh: &Mesh2D, point: &[Field<'_>], cell: &[Field<'_>], path: &Path) -> Result<(), VtkError> {
    let text = render_vtk(mesh, point, cell)?;
    fs::write(path, text)?;
    Ok(())
}
