//! Simplicial meshes, vertex-collocated fields, generators and VTK I/O.
//!
//! A [`Mesh`] stores a topological dimension (1 = lines, 2 = triangles,
//! 3 = tetrahedra) next to the dimension of the space it is embedded in, so a
//! triangulated surface in 3D is `topo_dim = 2, space_dim = 3`. Vertices always
//! carry three coordinates; components at or beyond `space_dim` are exactly 0.

mod generate;
mod vtk;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use smallvec::SmallVec;
use thiserror::Error;

use crate::geometry::{Aabb, Point};

pub use generate::generate_structured;
pub use vtk::{read_vtk_file, read_vtk_legacy, write_vtk_file, write_vtk_legacy};

/// Boundary tag. Generated meshes tag axis sides `1..=2*topo_dim`.
pub type Tag = i32;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid cell {cell}: {reason}")]
    InvalidCell { cell: usize, reason: String },
    #[error("degenerate cell {cell} (measure {measure:e})")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("no boundary face carries any of the tags {tags:?}")]
    EmptySelection { tags: Vec<Tag> },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

/// A facet of exactly one cell, carrying a tag.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryFace {
    pub vertices: SmallVec<[usize; 3]>,
    pub tag: Tag,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    topo_dim: usize,
    space_dim: usize,
    vertices: Vec<Point>,
    cells: Vec<usize>,
    boundary_faces: Vec<BoundaryFace>,
}

/// Local facets of a simplex, listed so that they point outwards for a
/// positively oriented cell.
fn local_facets(topo_dim: usize) -> &'static [&'static [usize]] {
    match topo_dim {
        1 => &[&[1], &[0]],
        2 => &[&[1, 2], &[2, 0], &[0, 1]],
        3 => &[&[1, 2, 3], &[0, 3, 2], &[0, 1, 3], &[0, 2, 1]],
        _ => unreachable!("topological dimension checked at construction"),
    }
}

impl Mesh {
    /// Builds a mesh from vertices and a flat cell connectivity array with
    /// `topo_dim + 1` entries per cell. Cells of full dimension are reoriented
    /// to have positive signed measure; boundary faces get tag 0.
    pub fn new(
        topo_dim: usize,
        space_dim: usize,
        vertices: Vec<Point>,
        cells: Vec<usize>,
    ) -> Result<Self> {
        let mut mesh = Self::without_boundary(topo_dim, space_dim, vertices, cells)?;
        mesh.boundary_faces = mesh.compute_boundary_faces();
        Ok(mesh)
    }

    pub(crate) fn without_boundary(
        topo_dim: usize,
        space_dim: usize,
        vertices: Vec<Point>,
        mut cells: Vec<usize>,
    ) -> Result<Self> {
        if !(1..=3).contains(&topo_dim) || !(1..=3).contains(&space_dim) || space_dim < topo_dim {
            return Err(MeshError::Contract(format!(
                "invalid dimensions topo_dim={topo_dim}, space_dim={space_dim}"
            )));
        }
        for (i, p) in vertices.iter().enumerate() {
            if !p.is_finite() {
                return Err(MeshError::Contract(format!("vertex {i} is not finite: {p}")));
            }
            if p.0[space_dim..].iter().any(|&c| c != 0.0) {
                return Err(MeshError::Contract(format!(
                    "vertex {i} has non-zero components beyond space dimension {space_dim}: {p}"
                )));
            }
        }
        let k = topo_dim + 1;
        if !cells.len().is_multiple_of(k) {
            return Err(MeshError::Contract(format!(
                "connectivity length {} is not a multiple of {k}",
                cells.len()
            )));
        }

        let scale = Aabb::from_points(&vertices).diagonal();
        let threshold = 1e-14 * scale.powi(topo_dim as i32);
        let nv = vertices.len();
        for (c, cell) in cells.chunks_exact_mut(k).enumerate() {
            for (a, &v) in cell.iter().enumerate() {
                if v >= nv {
                    return Err(MeshError::InvalidCell {
                        cell: c,
                        reason: format!("vertex index {v} out of range ({nv} vertices)"),
                    });
                }
                if cell[..a].contains(&v) {
                    return Err(MeshError::InvalidCell {
                        cell: c,
                        reason: format!("repeated vertex {v}"),
                    });
                }
            }
            let measure = signed_measure(&vertices, cell, space_dim);
            if measure.abs() <= threshold {
                return Err(MeshError::DegenerateCell { cell: c, measure });
            }
            if measure < 0.0 {
                cell.swap(0, 1);
            }
        }

        Ok(Mesh {
            topo_dim,
            space_dim,
            vertices,
            cells,
            boundary_faces: Vec::new(),
        })
    }

    /// Replaces the boundary faces, checking that each one is a facet of
    /// exactly one cell.
    pub fn with_boundary_faces(mut self, faces: Vec<BoundaryFace>) -> Result<Self> {
        let counts = self.facet_incidence();
        for (i, f) in faces.iter().enumerate() {
            if f.vertices.len() != self.topo_dim {
                return Err(MeshError::Contract(format!(
                    "boundary face {i} has {} vertices, expected {}",
                    f.vertices.len(),
                    self.topo_dim
                )));
            }
            let key = facet_key(&f.vertices);
            match counts.get(&key) {
                Some(1) => {}
                Some(n) => {
                    return Err(MeshError::Contract(format!(
                        "boundary face {i} is shared by {n} cells"
                    )))
                }
                None => {
                    return Err(MeshError::Contract(format!(
                        "boundary face {i} is not a facet of any cell"
                    )))
                }
            }
        }
        self.boundary_faces = faces;
        Ok(self)
    }

    pub(crate) fn set_boundary_faces_unchecked(&mut self, faces: Vec<BoundaryFace>) {
        self.boundary_faces = faces;
    }

    fn facet_incidence(&self) -> BTreeMap<[usize; 3], usize> {
        let mut counts = BTreeMap::new();
        for cell in self.cells() {
            for facet in local_facets(self.topo_dim) {
                let verts: SmallVec<[usize; 3]> = facet.iter().map(|&l| cell[l]).collect();
                *counts.entry(facet_key(&verts)).or_insert(0) += 1;
            }
        }
        counts
    }

    fn compute_boundary_faces(&self) -> Vec<BoundaryFace> {
        let facets = local_facets(self.topo_dim);
        let mut all: Vec<([usize; 3], usize, usize)> =
            Vec::with_capacity(self.num_cells() * facets.len());
        for (c, cell) in self.cells().enumerate() {
            for (l, facet) in facets.iter().enumerate() {
                let verts: SmallVec<[usize; 3]> = facet.iter().map(|&i| cell[i]).collect();
                all.push((facet_key(&verts), c, l));
            }
        }
        all.sort_unstable();
        let mut faces = Vec::new();
        let mut i = 0;
        while i < all.len() {
            let mut j = i + 1;
            while j < all.len() && all[j].0 == all[i].0 {
                j += 1;
            }
            if j - i == 1 {
                let (_, c, l) = all[i];
                let cell = self.cell(c);
                faces.push(BoundaryFace {
                    vertices: facets[l].iter().map(|&v| cell[v]).collect(),
                    tag: 0,
                });
            }
            i = j;
        }
        faces
    }

    pub fn topo_dim(&self) -> usize {
        self.topo_dim
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.topo_dim + 1
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / self.nodes_per_cell()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.nodes_per_cell();
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> std::slice::ChunksExact<'_, usize> {
        self.cells.chunks_exact(self.nodes_per_cell())
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.cells
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn cell_points(&self, c: usize) -> SmallVec<[Point; 4]> {
        self.cell(c).iter().map(|&v| self.vertices[v]).collect()
    }

    /// Unsigned length / area / volume of cell `c`.
    pub fn cell_measure(&self, c: usize) -> f64 {
        signed_measure(&self.vertices, self.cell(c), self.space_dim).abs()
    }

    /// Sorted, deduplicated vertex indices lying on faces with one of `tags`.
    pub fn boundary_vertices(&self, tags: &[Tag]) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .boundary_faces
            .iter()
            .filter(|f| tags.contains(&f.tag))
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Sorted, deduplicated indices of all vertices on any boundary face.
    pub fn all_boundary_vertices(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .boundary_faces
            .iter()
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Distinct boundary tags in increasing order.
    pub fn boundary_tags(&self) -> Vec<Tag> {
        let set: BTreeSet<Tag> = self.boundary_faces.iter().map(|f| f.tag).collect();
        set.into_iter().collect()
    }

    /// Re-tags boundary faces lying on a side of the bounding box with the
    /// axis-side convention of [`generate_structured`] (x-min = 1, x-max = 2,
    /// y-min = 3, ...). Faces on no side keep their tag.
    pub fn tag_boundary_by_bbox(&mut self) {
        let bbox = self.bounding_box();
        for face in &mut self.boundary_faces {
            'axes: for axis in 0..self.space_dim {
                let tol = 1e-12 * bbox.side(axis);
                if bbox.side(axis) <= 0.0 {
                    continue;
                }
                for (side, bound) in [(0, bbox.min.0[axis]), (1, bbox.max.0[axis])] {
                    if face
                        .vertices
                        .iter()
                        .all(|&v| (self.vertices[v].0[axis] - bound).abs() <= tol)
                    {
                        face.tag = (2 * axis + side + 1) as Tag;
                        break 'axes;
                    }
                }
            }
        }
    }

    /// Mesh made of the boundary faces carrying one of `tags`, together with
    /// the map from surface vertex index to volume vertex index.
    pub fn extract_boundary(&self, tags: &[Tag]) -> Result<(Mesh, Vec<usize>)> {
        if self.topo_dim < 2 {
            return Err(MeshError::Contract(
                "boundary extraction needs topological dimension >= 2".into(),
            ));
        }
        if tags.is_empty() {
            return Err(MeshError::Contract("empty tag set".into()));
        }
        let faces: Vec<&BoundaryFace> = self
            .boundary_faces
            .iter()
            .filter(|f| tags.contains(&f.tag))
            .collect();
        if faces.is_empty() {
            return Err(MeshError::EmptySelection { tags: tags.to_vec() });
        }
        let vertex_map = self.boundary_vertices(tags);
        let mut local = vec![usize::MAX; self.num_vertices()];
        for (i, &v) in vertex_map.iter().enumerate() {
            local[v] = i;
        }
        let cells: Vec<usize> = faces
            .iter()
            .flat_map(|f| f.vertices.iter().map(|&v| local[v]))
            .collect();
        let vertices = vertex_map.iter().map(|&v| self.vertices[v]).collect();
        let surface = Mesh::new(self.topo_dim - 1, self.space_dim, vertices, cells)?;
        Ok((surface, vertex_map))
    }

    pub fn info(&self) -> MeshInfo {
        let mut face_counts = BTreeMap::new();
        for f in &self.boundary_faces {
            *face_counts.entry(f.tag).or_insert(0) += 1;
        }
        MeshInfo {
            topo_dim: self.topo_dim,
            space_dim: self.space_dim,
            num_vertices: self.num_vertices(),
            num_cells: self.num_cells(),
            num_boundary_faces: self.boundary_faces.len(),
            bounding_box: self.bounding_box(),
            face_counts,
        }
    }
}

fn facet_key(verts: &[usize]) -> [usize; 3] {
    let mut key = [usize::MAX; 3];
    key[..verts.len()].copy_from_slice(verts);
    key.sort_unstable();
    key
}

/// Signed measure for cells of full dimension, unsigned (positive) measure for
/// cells embedded in a higher dimensional space.
fn signed_measure(vertices: &[Point], cell: &[usize], space_dim: usize) -> f64 {
    let p = |i: usize| vertices[cell[i]];
    let topo_dim = cell.len() - 1;
    match (topo_dim, space_dim) {
        (1, 1) => p(1).x() - p(0).x(),
        (1, _) => p(0).distance(&p(1)),
        (2, 2) => {
            let a = p(1) - p(0);
            let b = p(2) - p(0);
            0.5 * (a.x() * b.y() - a.y() * b.x())
        }
        (2, _) => 0.5 * (p(1) - p(0)).cross(&(p(2) - p(0))).norm(),
        (3, _) => {
            let a = p(1) - p(0);
            let b = p(2) - p(0);
            let c = p(3) - p(0);
            a.dot(&b.cross(&c)) / 6.0
        }
        _ => unreachable!(),
    }
}

/// Summary of a mesh: counts, bounding box and boundary faces per tag.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshInfo {
    pub topo_dim: usize,
    pub space_dim: usize,
    pub num_vertices: usize,
    pub num_cells: usize,
    pub num_boundary_faces: usize,
    pub bounding_box: Aabb,
    pub face_counts: BTreeMap<Tag, usize>,
}

impl fmt::Display for MeshInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "topo_dim={}", self.topo_dim)?;
        writeln!(f, "space_dim={}", self.space_dim)?;
        writeln!(f, "vertices={}", self.num_vertices)?;
        writeln!(f, "cells={}", self.num_cells)?;
        writeln!(f, "boundary_faces={}", self.num_boundary_faces)?;
        let b = &self.bounding_box;
        writeln!(f, "bbox_min={} {} {}", b.min.x(), b.min.y(), b.min.z())?;
        writeln!(f, "bbox_max={} {} {}", b.max.x(), b.max.y(), b.max.z())?;
        for (tag, count) in &self.face_counts {
            writeln!(f, "faces_tag_{tag}={count}")?;
        }
        Ok(())
    }
}

/// Named vertex-collocated data, `components` values per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    name: String,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(name: impl Into<String>, components: usize, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if components == 0 {
            return Err(MeshError::Contract(format!("field '{name}' has zero components")));
        }
        if !values.len().is_multiple_of(components) {
            return Err(MeshError::Contract(format!(
                "field '{name}' has {} values, not a multiple of {components} components",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::Contract(format!(
                "field '{name}' has a non-finite value at position {i}"
            )));
        }
        Ok(Field {
            name,
            components,
            values,
        })
    }

    pub fn scalar(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Field::new(name, 1, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn num_points(&self) -> usize {
        self.values.len() / self.components
    }

    pub fn value(&self, vertex: usize) -> &[f64] {
        &self.values[vertex * self.components..(vertex + 1) * self.components]
    }

    /// Checks that the field has one value tuple per mesh vertex.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        let expected = mesh.num_vertices() * self.components;
        if self.values.len() != expected {
            return Err(MeshError::Contract(format!(
                "field '{}' has {} values, expected {} ({} vertices x {} components)",
                self.name,
                self.values.len(),
                expected,
                mesh.num_vertices(),
                self.components
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_tet() -> Mesh {
        Mesh::new(
            3,
            3,
            vec![
                Point::new(0.0, 0.0, 0.0),
                Point::new(1.0, 0.0, 0.0),
                Point::new(0.0, 1.0, 0.0),
                Point::new(0.0, 0.0, 1.0),
            ],
            vec![0, 1, 2, 3],
        )
        .unwrap()
    }

    #[test]
    fn single_tet_has_four_boundary_faces() {
        let m = unit_tet();
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.boundary_faces().len(), 4);
        assert!(m.cell_measure(0) > 0.0);
    }

    #[test]
    fn negative_tet_is_reoriented() {
        let m = Mesh::new(
            3,
            3,
            unit_tet().vertices().to_vec(),
            vec![0, 2, 1, 3],
        )
        .unwrap();
        assert!(signed_measure(m.vertices(), m.cell(0), 3) > 0.0);
    }

    #[test]
    fn degenerate_and_invalid_cells_rejected() {
        let pts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(2.0, 0.0, 0.0),
        ];
        assert!(matches!(
            Mesh::new(2, 2, pts.clone(), vec![0, 1, 2]),
            Err(MeshError::DegenerateCell { cell: 0, .. })
        ));
        assert!(matches!(
            Mesh::new(2, 2, pts.clone(), vec![0, 1, 1]),
            Err(MeshError::InvalidCell { .. })
        ));
        assert!(matches!(
            Mesh::new(2, 2, pts, vec![0, 1, 7]),
            Err(MeshError::InvalidCell { .. })
        ));
    }

    #[test]
    fn trailing_components_must_vanish() {
        let pts = vec![Point::new(0.0, 0.0, 1.0), Point::new(1.0, 0.0, 0.0)];
        assert!(Mesh::new(1, 2, pts, vec![0, 1]).is_err());
    }

    #[test]
    fn extract_all_faces_of_single_tet() {
        let m = unit_tet();
        let (s, map) = m.extract_boundary(&[0]).unwrap();
        assert_eq!(s.num_vertices(), 4);
        assert_eq!(s.num_cells(), 4);
        assert_eq!(s.topo_dim(), 2);
        assert_eq!(s.space_dim(), 3);
        assert_eq!(map, vec![0, 1, 2, 3]);
        // A closed surface has no boundary of its own.
        assert!(s.boundary_faces().is_empty());
    }

    #[test]
    fn extract_missing_tag_is_empty_selection() {
        let m = unit_tet();
        assert!(matches!(
            m.extract_boundary(&[99]),
            Err(MeshError::EmptySelection { .. })
        ));
    }

    #[test]
    fn with_boundary_faces_rejects_interior_facet() {
        let m = generate_structured(2, 2, 1, &Aabb::unit_cube()).unwrap();
        // The diagonal 0-3 is shared by both triangles.
        let face = BoundaryFace {
            vertices: SmallVec::from_slice(&[0, 3]),
            tag: 7,
        };
        assert!(m.clone().with_boundary_faces(vec![face]).is_err());
        let ok = BoundaryFace {
            vertices: SmallVec::from_slice(&[0, 1]),
            tag: 7,
        };
        assert!(m.with_boundary_faces(vec![ok]).is_ok());
    }

    #[test]
    fn info_of_single_tet() {
        let info = unit_tet().info();
        assert_eq!(info.num_vertices, 4);
        assert_eq!(info.num_cells, 1);
        assert_eq!(info.bounding_box, Aabb::unit_cube());
        assert_eq!(info.face_counts.get(&0), Some(&4));
        let text = info.to_string();
        assert!(text.contains("vertices=4"));
        assert!(text.contains("cells=1"));
    }

    #[test]
    fn field_validation() {
        assert!(Field::new("u", 0, vec![]).is_err());
        assert!(Field::new("u", 3, vec![1.0; 4]).is_err());
        assert!(Field::scalar("u", vec![f64::NAN]).is_err());
        let f = Field::new("v", 3, vec![1.0; 12]).unwrap();
        assert_eq!(f.num_points(), 4);
        assert!(f.check_mesh(&unit_tet()).is_ok());
        let g = Field::scalar("u", vec![1.0; 3]).unwrap();
        assert!(g.check_mesh(&unit_tet()).is_err());
    }

    #[test]
    fn retagging_by_bbox_matches_generator_tags() {
        let generated = generate_structured(3, 3, 2, &Aabb::unit_cube()).unwrap();
        let mut plain = Mesh::new(
            3,
            3,
            generated.vertices().to_vec(),
            generated.connectivity().to_vec(),
        )
        .unwrap();
        assert_eq!(plain.boundary_tags(), vec![0]);
        plain.tag_boundary_by_bbox();
        assert_eq!(plain.info().face_counts, generated.info().face_counts);
    }
}
