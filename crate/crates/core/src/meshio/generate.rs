//! Structured simplicial meshes of boxes.
//!
//! Squares are split along the diagonal from the low to the high corner;
//! cubes are split into the six tetrahedra of the Kuhn subdivision, all
//! sharing that same diagonal. Both splittings are conforming across cells.

use smallvec::smallvec;

use super::{BoundaryFace, Mesh, MeshError, Result, Tag};
use crate::geometry::{Aabb, Point};

/// The six axis permutations; each gives a monotone path from the low corner
/// to the high corner of the unit cube, i.e. one Kuhn tetrahedron.
const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Generates `n` subdivisions per axis of `extent` in `topo_dim` dimensions,
/// embedded in `space_dim` dimensions. Boundary faces are tagged by axis
/// side: x-min = 1, x-max = 2, y-min = 3, y-max = 4, z-min = 5, z-max = 6.
///
/// Axes at or above `topo_dim` take the coordinate `extent.min` (so a 2D
/// mesh in 3D lies in the plane `z = extent.min.z`).
pub fn generate_structured(
    topo_dim: usize,
    space_dim: usize,
    n: usize,
    extent: &Aabb,
) -> Result<Mesh> {
    if n < 1 {
        return Err(MeshError::Contract("number of subdivisions must be >= 1".into()));
    }
    if !(1..=3).contains(&topo_dim) || topo_dim > space_dim || space_dim > 3 {
        return Err(MeshError::Contract(format!(
            "invalid dimensions topo_dim={topo_dim}, space_dim={space_dim}"
        )));
    }
    for axis in 0..topo_dim {
        if !(extent.side(axis) > 0.0) {
            return Err(MeshError::Contract(format!(
                "extent has non-positive side along axis {axis}"
            )));
        }
    }

    let np = n + 1;
    let coord = |axis: usize, i: usize| -> f64 {
        if i == n {
            extent.max.0[axis]
        } else {
            extent.min.0[axis] + extent.side(axis) * (i as f64 / n as f64)
        }
    };
    let stride = [1, np, np * np];
    let counts: [usize; 3] = std::array::from_fn(|d| if d < topo_dim { np } else { 1 });

    let mut vertices = Vec::with_capacity(counts.iter().product());
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let idx = [i, j, k];
                let mut c = [0.0; 3];
                for d in 0..3 {
                    c[d] = if d >= space_dim {
                        0.0
                    } else if d < topo_dim {
                        coord(d, idx[d])
                    } else {
                        extent.min.0[d]
                    };
                }
                vertices.push(Point(c));
            }
        }
    }

    let mut cells = Vec::new();
    match topo_dim {
        1 => {
            for i in 0..n {
                cells.extend_from_slice(&[i, i + 1]);
            }
        }
        2 => {
            for j in 0..n {
                for i in 0..n {
                    let v00 = i + np * j;
                    let v10 = v00 + 1;
                    let v01 = v00 + np;
                    let v11 = v01 + 1;
                    cells.extend_from_slice(&[v00, v10, v11, v00, v11, v01]);
                }
            }
        }
        _ => {
            cells.reserve(6 * 4 * n * n * n);
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        let base = i + np * j + np * np * k;
                        for path in KUHN_PATHS {
                            let a = base + stride[path[0]];
                            let b = a + stride[path[1]];
                            let c = b + stride[path[2]];
                            cells.extend_from_slice(&[base, a, b, c]);
                        }
                    }
                }
            }
        }
    }

    let mut mesh = Mesh::without_boundary(topo_dim, space_dim, vertices, cells)?;
    mesh.set_boundary_faces_unchecked(structured_boundary(topo_dim, n));
    Ok(mesh)
}

fn structured_boundary(topo_dim: usize, n: usize) -> Vec<BoundaryFace> {
    let np = n + 1;
    let stride = [1, np, np * np];
    let mut faces = Vec::new();
    for axis in 0..topo_dim {
        for side in 0..2 {
            let tag = (2 * axis + side + 1) as Tag;
            let offset = if side == 0 { 0 } else { n * stride[axis] };
            let others: Vec<usize> = (0..topo_dim).filter(|&d| d != axis).collect();
            match others.len() {
                0 => faces.push(BoundaryFace {
                    vertices: smallvec![offset],
                    tag,
                }),
                1 => {
                    let s = stride[others[0]];
                    for i in 0..n {
                        let v = offset + i * s;
                        faces.push(BoundaryFace {
                            vertices: smallvec![v, v + s],
                            tag,
                        });
                    }
                }
                _ => {
                    let (s0, s1) = (stride[others[0]], stride[others[1]]);
                    for j in 0..n {
                        for i in 0..n {
                            let v00 = offset + i * s0 + j * s1;
                            let v10 = v00 + s0;
                            let v01 = v00 + s1;
                            let v11 = v10 + s1;
                            faces.push(BoundaryFace {
                                vertices: smallvec![v00, v10, v11],
                                tag,
                            });
                            faces.push(BoundaryFace {
                                vertices: smallvec![v00, v11, v01],
                                tag,
                            });
                        }
                    }
                }
            }
        }
    }
    faces
}
