//! Legacy ASCII VTK (`DATASET UNSTRUCTURED_GRID`) reader and writer.
//!
//! Supported cell types are 3 (line), 5 (triangle) and 10 (tetrahedron).
//! Point data may be given as `SCALARS` (any number of components) or
//! `VECTORS` blocks. Binary files, cell data and field data are rejected.

use std::fmt::Write as _;
use std::path::Path;

use super::{Field, Mesh, MeshError, Result};
use crate::geometry::Point;

const VTK_LINE: u32 = 3;
const VTK_TRIANGLE: u32 = 5;
const VTK_TETRA: u32 = 10;

fn format_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Format {
        line,
        message: message.into(),
    }
}

struct Tokens<'a> {
    tokens: Vec<(&'a str, usize)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: impl Iterator<Item = (usize, &'a str)>) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 0;
        for (no, line) in lines {
            last_line = no;
            tokens.extend(line.split_whitespace().map(|t| (t, no)));
        }
        Tokens {
            tokens,
            pos: 0,
            last_line,
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.0)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.1)
            .unwrap_or(self.last_line)
    }

    fn next(&mut self, what: &str) -> Result<(&'a str, usize)> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| {
            format_err(self.last_line, format!("unexpected end of file while reading {what}"))
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let (tok, line) = self.next(what)?;
        tok.parse()
            .map_err(|_| format_err(line, format!("cannot parse '{tok}' as {what}")))
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let (tok, line) = self.next(keyword)?;
        if tok.eq_ignore_ascii_case(keyword) {
            Ok(())
        } else {
            Err(format_err(line, format!("expected '{keyword}', found '{tok}'")))
        }
    }
}

fn check_real_type(tok: &str, line: usize) -> Result<()> {
    match tok.to_ascii_lowercase().as_str() {
        "float" | "double" => Ok(()),
        other => Err(format_err(line, format!("unsupported data type '{other}'"))),
    }
}

/// Parses a legacy ASCII VTK unstructured grid.
///
/// The mesh takes the topological dimension of its highest-dimensional cells;
/// lower-dimensional cells are skipped. The space dimension is the smallest
/// one that holds every point (but at least the topological dimension).
/// Boundary faces are recomputed with tag 0.
pub fn read_vtk_legacy(text: &str) -> Result<(Mesh, Vec<Field>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = lines.next().ok_or_else(|| format_err(1, "empty file"))?;
    if !header.1.trim_start().starts_with("# vtk DataFile") {
        return Err(format_err(1, "missing '# vtk DataFile Version' header"));
    }
    lines
        .next()
        .ok_or_else(|| format_err(2, "unexpected end of file while reading title"))?;
    let (no, encoding) = lines
        .next()
        .ok_or_else(|| format_err(3, "unexpected end of file while reading encoding"))?;
    match encoding.trim() {
        e if e.eq_ignore_ascii_case("ASCII") => {}
        e if e.eq_ignore_ascii_case("BINARY") => {
            return Err(format_err(no, "binary VTK files are not supported"))
        }
        e => return Err(format_err(no, format!("unknown encoding '{e}'"))),
    }

    let mut tok = Tokens::new(lines);
    tok.expect("DATASET")?;
    let (kind, line) = tok.next("dataset type")?;
    if !kind.eq_ignore_ascii_case("UNSTRUCTURED_GRID") {
        return Err(format_err(line, format!("unsupported dataset '{kind}'")));
    }

    tok.expect("POINTS")?;
    let num_points: usize = tok.parse("point count")?;
    let (ty, line) = tok.next("point data type")?;
    check_real_type(ty, line)?;
    let mut points = Vec::with_capacity(num_points);
    for _ in 0..num_points {
        let line = tok.line();
        let p = Point([
            tok.parse("coordinate")?,
            tok.parse("coordinate")?,
            tok.parse("coordinate")?,
        ]);
        if !p.is_finite() {
            return Err(format_err(line, "non-finite coordinate"));
        }
        points.push(p);
    }

    tok.expect("CELLS")?;
    let num_cells: usize = tok.parse("cell count")?;
    let _size: usize = tok.parse("cell list size")?;
    let mut raw_cells: Vec<(Vec<usize>, usize)> = Vec::with_capacity(num_cells);
    for _ in 0..num_cells {
        let line = tok.line();
        let count: usize = tok.parse("cell vertex count")?;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let (t, l) = tok.next("cell vertex index")?;
            let id: usize = t
                .parse()
                .map_err(|_| format_err(l, format!("cannot parse '{t}' as cell vertex index")))?;
            if id >= num_points {
                return Err(format_err(
                    l,
                    format!("vertex index {id} out of range ({num_points} points)"),
                ));
            }
            ids.push(id);
        }
        raw_cells.push((ids, line));
    }

    tok.expect("CELL_TYPES")?;
    let num_types: usize = tok.parse("cell type count")?;
    if num_types != num_cells {
        return Err(format_err(
            tok.line(),
            format!("CELL_TYPES count {num_types} differs from CELLS count {num_cells}"),
        ));
    }
    let mut by_dim: [Vec<usize>; 4] = Default::default();
    for (ids, cell_line) in &raw_cells {
        let (t, line) = tok.next("cell type")?;
        let code: u32 = t
            .parse()
            .map_err(|_| format_err(line, format!("cannot parse '{t}' as cell type")))?;
        let dim = match code {
            VTK_LINE => 1,
            VTK_TRIANGLE => 2,
            VTK_TETRA => 3,
            other => return Err(format_err(line, format!("unsupported cell type {other}"))),
        };
        if ids.len() != dim + 1 {
            return Err(format_err(
                *cell_line,
                format!("cell of type {code} has {} vertices", ids.len()),
            ));
        }
        by_dim[dim].extend_from_slice(ids);
    }
    let topo_dim = (1..=3)
        .rev()
        .find(|&d| !by_dim[d].is_empty())
        .ok_or_else(|| format_err(tok.line(), "file contains no cells"))?;
    let space_dim = if points.iter().any(|p| p.z() != 0.0) {
        3
    } else if points.iter().any(|p| p.y() != 0.0) {
        2
    } else {
        1
    }
    .max(topo_dim);
    let cells = std::mem::take(&mut by_dim[topo_dim]);

    let mut fields = Vec::new();
    if let Some(t) = tok.peek() {
        let line = tok.line();
        if !t.eq_ignore_ascii_case("POINT_DATA") {
            return Err(format_err(line, format!("unsupported section '{t}'")));
        }
        tok.next("POINT_DATA")?;
        let n: usize = tok.parse("point data count")?;
        if n != num_points {
            return Err(format_err(
                line,
                format!("POINT_DATA count {n} differs from point count {num_points}"),
            ));
        }
        while let Some(t) = tok.peek() {
            let line = tok.line();
            let (name, components) = if t.eq_ignore_ascii_case("SCALARS") {
                tok.next("SCALARS")?;
                let (name, _) = tok.next("array name")?;
                let (ty, l) = tok.next("array data type")?;
                check_real_type(ty, l)?;
                // The component count is optional and followed by LOOKUP_TABLE.
                let components = match tok.peek() {
                    Some(c) if c.parse::<usize>().is_ok() => tok.parse("component count")?,
                    _ => 1,
                };
                if tok.peek().is_some_and(|t| t.eq_ignore_ascii_case("LOOKUP_TABLE")) {
                    tok.next("LOOKUP_TABLE")?;
                    tok.next("lookup table name")?;
                }
                (name, components)
            } else if t.eq_ignore_ascii_case("VECTORS") {
                tok.next("VECTORS")?;
                let (name, _) = tok.next("array name")?;
                let (ty, l) = tok.next("array data type")?;
                check_real_type(ty, l)?;
                (name, 3)
            } else {
                return Err(format_err(line, format!("unsupported point data block '{t}'")));
            };
            if components == 0 {
                return Err(format_err(line, "array with zero components"));
            }
            let mut values = Vec::with_capacity(n * components);
            for _ in 0..n * components {
                values.push(tok.parse::<f64>("point data value")?);
            }
            let field = Field::new(name, components, values)
                .map_err(|e| format_err(line, e.to_string()))?;
            fields.push(field);
        }
    }

    let mesh = Mesh::new(topo_dim, space_dim, points, cells)?;
    Ok((mesh, fields))
}

/// Writes a mesh and its point data as legacy ASCII VTK. Coordinates and
/// values are printed in shortest round-trip decimal form, so reading the
/// output back reproduces them bit-for-bit.
pub fn write_vtk_legacy(mesh: &Mesh, fields: &[Field]) -> Result<String> {
    for f in fields {
        f.check_mesh(mesh)?;
    }
    let mut out = String::new();
    let k = mesh.nodes_per_cell();
    let code = match mesh.topo_dim() {
        1 => VTK_LINE,
        2 => VTK_TRIANGLE,
        _ => VTK_TETRA,
    };
    // Writing into a String cannot fail.
    let _ = (|| -> std::fmt::Result {
        writeln!(out, "# vtk DataFile Version 3.0")?;
        writeln!(out, "intergrid mesh")?;
        writeln!(out, "ASCII")?;
        writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(out, "POINTS {} double", mesh.num_vertices())?;
        for p in mesh.vertices() {
            writeln!(out, "{} {} {}", p.x(), p.y(), p.z())?;
        }
        writeln!(out, "CELLS {} {}", mesh.num_cells(), mesh.num_cells() * (k + 1))?;
        for cell in mesh.cells() {
            write!(out, "{k}")?;
            for v in cell {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        writeln!(out, "CELL_TYPES {}", mesh.num_cells())?;
        for _ in 0..mesh.num_cells() {
            writeln!(out, "{code}")?;
        }
        if !fields.is_empty() {
            writeln!(out, "POINT_DATA {}", mesh.num_vertices())?;
        }
        for f in fields {
            let c = f.components();
            if c == 3 {
                writeln!(out, "VECTORS {} double", f.name())?;
            } else {
                writeln!(out, "SCALARS {} double {c}", f.name())?;
                writeln!(out, "LOOKUP_TABLE default")?;
            }
            for tuple in f.values().chunks_exact(c) {
                let line: Vec<String> = tuple.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        Ok(())
    })();
    Ok(out)
}

pub fn read_vtk_file(path: impl AsRef<Path>) -> Result<(Mesh, Vec<Field>)> {
    let text = std::fs::read_to_string(path)?;
    read_vtk_legacy(&text)
}

pub fn write_vtk_file(path: impl AsRef<Path>, mesh: &Mesh, fields: &[Field]) -> Result<()> {
    std::fs::write(path, write_vtk_legacy(mesh, fields)?)?;
    Ok(())
}
