//! Vertex maps between two meshes that share a boundary, and copy transfer
//! of data along them.
//!
//! Each A-side interface vertex is matched to its nearest B-side interface
//! vertex. Pairs farther apart than the tolerance are dropped. When several
//! A vertices claim the same B vertex, the closest one wins (ties go to the
//! smaller A index) and the losers are reported as conflicts.

use std::collections::BTreeSet;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::locator::{BoundaryLocator, LocatorError};
use crate::meshio::{Field, Mesh, MeshError, Tag};

/// Default matching tolerance relative to the joint bounding-box diagonal.
pub const DEFAULT_RELATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no interface vertex pair within tolerance {tolerance:e} (closest candidate at {closest:e})")]
    DisjointInterface { tolerance: f64, closest: f64 },
    #[error("interface vertices without a matched partner: {vertices:?}")]
    Coverage { vertices: Vec<usize> },
    #[error(transparent)]
    Locator(#[from] LocatorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub type Result<T, E = InterfaceError> = std::result::Result<T, E>;

/// One matched vertex pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfacePair {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// An A vertex whose nearest B vertex was taken by a closer claimant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conflict {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub winner: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceMap {
    /// Sorted by A index.
    pub pairs: Vec<InterfacePair>,
    pub tolerance: f64,
    pub conflicts: Vec<Conflict>,
    /// B-side interface vertices that no pair reaches, sorted.
    pub unmapped_b: Vec<usize>,
}

impl InterfaceMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance).fold(0.0, f64::max)
    }

    /// The same pairs seen from B.
    pub fn inverted(&self) -> InterfaceMap {
        let mut pairs: Vec<InterfacePair> = self
            .pairs
            .iter()
            .map(|p| InterfacePair {
                a: p.b,
                b: p.a,
                distance: p.distance,
            })
            .collect();
        pairs.sort_by_key(|p| p.a);
        InterfaceMap {
            pairs,
            tolerance: self.tolerance,
            conflicts: Vec::new(),
            unmapped_b: Vec::new(),
        }
    }

    /// Writes `a_index,b_index,distance` lines with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "a_index,b_index,distance")?;
        for p in &self.pairs {
            writeln!(w, "{},{},{:e}", p.a, p.b, p.distance)?;
        }
        Ok(())
    }
}

fn interface_vertices(mesh: &Mesh, tags: &[Tag], other: &Mesh) -> Result<Vec<usize>> {
    let verts = if tags.is_empty() {
        if mesh.topo_dim() + 1 == other.topo_dim() {
            (0..mesh.num_vertices()).collect()
        } else {
            mesh.all_boundary_vertices()
        }
    } else {
        mesh.boundary_vertices(tags)
    };
    if verts.is_empty() {
        return Err(LocatorError::EmptySelection { tags: tags.to_vec() }.into());
    }
    Ok(verts)
}

/// Matches interface vertices of `a` to those of `b`.
///
/// An empty tag set selects every boundary vertex, or every vertex when that
/// mesh is one dimension lower than the other (a surface against a volume).
/// `tolerance` defaults to `DEFAULT_RELATIVE_TOLERANCE` times the diagonal
/// of the joint bounding box.
pub fn compute_interface_map(
    a: &Mesh,
    tags_a: &[Tag],
    b: &Mesh,
    tags_b: &[Tag],
    tolerance: Option<f64>,
) -> Result<InterfaceMap> {
    let tolerance = match tolerance {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => {
            return Err(InterfaceError::Contract(format!(
                "tolerance must be positive and finite, got {t}"
            )))
        }
        None => DEFAULT_RELATIVE_TOLERANCE * a.bounding_box().union(&b.bounding_box()).diagonal(),
    };
    let a_verts = interface_vertices(a, tags_a, b)?;
    let b_verts = interface_vertices(b, tags_b, a)?;
    let locator = BoundaryLocator::from_vertices(b, b_verts.clone())?;

    let hits: Vec<InterfacePair> = a_verts
        .par_iter()
        .map(|&av| {
            let hit = locator.locate(&a.vertex(av));
            InterfacePair {
                a: av,
                b: hit.index,
                distance: hit.distance,
            }
        })
        .collect();
    let closest = hits.iter().map(|p| p.distance).fold(f64::INFINITY, f64::min);
    let mut candidates: Vec<InterfacePair> =
        hits.into_iter().filter(|p| p.distance <= tolerance).collect();
    if candidates.is_empty() {
        return Err(InterfaceError::DisjointInterface { tolerance, closest });
    }

    candidates.sort_by(|x, y| {
        x.b.cmp(&y.b)
            .then(x.distance.total_cmp(&y.distance))
            .then(x.a.cmp(&y.a))
    });
    let mut pairs = Vec::with_capacity(candidates.len());
    let mut conflicts = Vec::new();
    for group in candidates.chunk_by(|x, y| x.b == y.b) {
        let winner = group[0];
        pairs.push(winner);
        conflicts.extend(group[1..].iter().map(|p| Conflict {
            a: p.a,
            b: p.b,
            distance: p.distance,
            winner: winner.a,
        }));
    }
    pairs.sort_by_key(|p| p.a);
    conflicts.sort_by_key(|c| c.a);
    let mapped: BTreeSet<usize> = pairs.iter().map(|p| p.b).collect();
    let unmapped_b = b_verts.into_iter().filter(|v| !mapped.contains(v)).collect();
    Ok(InterfaceMap {
        pairs,
        tolerance,
        conflicts,
        unmapped_b,
    })
}

/// Copies A-side values along the map onto the requested B vertices.
/// Returns `b_vertices.len() * components` values in request order.
pub fn transfer_across_interface(
    map: &InterfaceMap,
    a_values: &Field,
    b_vertices: &[usize],
) -> Result<Vec<f64>> {
    if map.is_empty() {
        return Err(InterfaceError::Contract("empty interface map".into()));
    }
    let max_a = map.pairs.iter().map(|p| p.a).max().unwrap_or(0);
    if a_values.num_points() <= max_a {
        return Err(InterfaceError::Contract(format!(
            "A-side field has {} points but the map references vertex {max_a}",
            a_values.num_points()
        )));
    }
    let source_of: std::collections::HashMap<usize, usize> =
        map.pairs.iter().map(|p| (p.b, p.a)).collect();
    let missing: Vec<usize> = b_vertices
        .iter()
        .copied()
        .filter(|v| !source_of.contains_key(v))
        .collect();
    if !missing.is_empty() {
        return Err(InterfaceError::Coverage { vertices: missing });
    }
    let mut out = Vec::with_capacity(b_vertices.len() * a_values.components());
    for v in b_vertices {
        out.extend_from_slice(a_values.value(source_of[v]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Point};
    use crate::meshio::generate_structured;

    fn cube_pair(n: usize) -> (Mesh, Mesh) {
        let a = generate_structured(3, 3, n, &Aabb::unit_cube()).unwrap();
        let b = generate_structured(
            3,
            3,
            n,
            &Aabb::new(Point::new(1.0, 0.0, 0.0), Point::new(2.0, 1.0, 1.0)),
        )
        .unwrap();
        (a, b)
    }

    #[test]
    fn conforming_cubes_bijection() {
        let (a, b) = cube_pair(4);
        let map = compute_interface_map(&a, &[2], &b, &[1], None).unwrap();
        assert_eq!(map.len(), 25);
        assert!(map.conflicts.is_empty() && map.unmapped_b.is_empty());
        assert!(map.max_distance() <= 1e-12);
        let bs: BTreeSet<usize> = map.pairs.iter().map(|p| p.b).collect();
        assert_eq!(bs.len(), 25);
        for p in &map.pairs {
            assert!(a.vertex(p.a).distance(&b.vertex(p.b)) <= 1e-12);
        }
        let back = compute_interface_map(&b, &[1], &a, &[2], None).unwrap();
        assert_eq!(back.pairs, map.inverted().pairs);
    }

    #[test]
    fn translated_cube_is_disjoint() {
        let (a, b) = cube_pair(2);
        let far = Mesh::new(
            3,
            3,
            b.vertices().iter().map(|p| *p + Point::new(0.0, 0.0, 10.0)).collect(),
            b.connectivity().to_vec(),
        )
        .unwrap();
        let mut far = far;
        far.tag_boundary_by_bbox();
        let err = compute_interface_map(&a, &[2], &far, &[1], None).unwrap_err();
        assert!(matches!(err, InterfaceError::DisjointInterface { .. }), "{err}");
    }

    #[test]
    fn extracted_surface_maps_to_vertex_map() {
        let vol = generate_structured(3, 3, 3, &Aabb::unit_cube()).unwrap();
        let (surf, vmap) = vol.extract_boundary(&[6]).unwrap();
        let map = compute_interface_map(&surf, &[], &vol, &[6], None).unwrap();
        assert_eq!(map.len(), surf.num_vertices());
        for p in &map.pairs {
            assert_eq!(vmap[p.a], p.b);
        }
    }

    #[test]
    fn conflicts_keep_closest_claimant() {
        let line = |xs: &[f64]| {
            let v: Vec<Point> = xs.iter().map(|&x| Point::new(x, 0.0, 0.0)).collect();
            let cells = (0..xs.len() - 1).flat_map(|i| [i, i + 1]).collect();
            Mesh::new(1, 1, v, cells).unwrap()
        };
        // Both ends of A sit near B's left end: 0.0 claims it at 0.01, -0.02 at 0.03.
        let a = line(&[-0.02, 0.01]);
        let b = line(&[0.0, 5.0]);
        let map = compute_interface_map(&a, &[], &b, &[], Some(0.1)).unwrap();
        assert_eq!(map.pairs, vec![InterfacePair { a: 1, b: 0, distance: 0.01 }]);
        assert_eq!(map.conflicts.len(), 1);
        assert_eq!((map.conflicts[0].a, map.conflicts[0].winner), (0, 1));
        assert_eq!(map.unmapped_b, vec![1]);
    }

    #[test]
    fn copy_transfer_and_coverage() {
        let (a, b) = cube_pair(3);
        let mut map = compute_interface_map(&a, &[2], &b, &[1], None).unwrap();
        let f = Field::scalar("f", a.vertices().iter().map(|p| p.y() + p.z()).collect()).unwrap();
        let targets = b.boundary_vertices(&[1]);
        let vals = transfer_across_interface(&map, &f, &targets).unwrap();
        for (v, val) in targets.iter().zip(&vals) {
            let p = b.vertex(*v);
            assert_eq!(*val, p.y() + p.z());
        }
        let c = Field::scalar("c", vec![4.0; a.num_vertices()]).unwrap();
        assert!(transfer_across_interface(&map, &c, &targets).unwrap().iter().all(|&v| v == 4.0));

        let removed = map.pairs.remove(3);
        let err = transfer_across_interface(&map, &f, &targets).unwrap_err();
        match err {
            InterfaceError::Coverage { vertices } => assert_eq!(vertices, vec![removed.b]),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn csv_dump() {
        let (a, b) = cube_pair(1);
        let map = compute_interface_map(&a, &[2], &b, &[1], None).unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "a_index,b_index,distance");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1].split(',').count(), 3);
    }

    #[test]
    fn bad_tolerance_and_selection() {
        let (a, b) = cube_pair(1);
        assert!(compute_interface_map(&a, &[2], &b, &[1], Some(0.0)).is_err());
        assert!(matches!(
            compute_interface_map(&a, &[42], &b, &[1], None),
            Err(InterfaceError::Locator(LocatorError::EmptySelection { .. }))
        ));
    }
}
