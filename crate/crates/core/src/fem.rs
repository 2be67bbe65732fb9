//! P1 finite elements on simplicial meshes: Laplace on volume meshes and
//! Laplace-Beltrami on surfaces, with Dirichlet data by vertex.
//!
//! The element stiffness is built from the metric tensor `G = E^T E` of the
//! edge matrix `E = [x1 - x0, ..., xk - x0]`. The gradients of the barycentric
//! functions in the tangent space give `K_ij = |T| (G^-1)_ij` for `i, j >= 1`,
//! and row 0 follows from the zero row sum. Only lengths and angles enter, so
//! a surface triangle and its flattened copy have the same matrix.

use std::collections::HashSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Point;
use crate::interface::{compute_interface_map, transfer_across_interface, InterfaceError, InterfaceMap};
use crate::meshio::{Field, Mesh, MeshError, Tag};
use crate::sparse::{cg_solve, CgOptions, CgReport, CsrMatrix, SolverError};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("cell {cell} is degenerate (measure {measure:e})")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
}

pub type Result<T, E = FemError> = std::result::Result<T, E>;

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Inverse and determinant of the leading `k x k` block of `g`.
fn small_inverse(g: &[[f64; 3]; 3], k: usize) -> ([[f64; 3]; 3], f64) {
    let mut inv = [[0.0; 3]; 3];
    match k {
        1 => {
            let det = g[0][0];
            inv[0][0] = 1.0 / det;
            (inv, det)
        }
        2 => {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            inv[0][0] = g[1][1] / det;
            inv[1][1] = g[0][0] / det;
            inv[0][1] = -g[0][1] / det;
            inv[1][0] = -g[1][0] / det;
            (inv, det)
        }
        3 => {
            let c = |i: usize, j: usize| {
                let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
                let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
                g[r0][c0] * g[r1][c1] - g[r0][c1] * g[r1][c0]
            };
            let det = g[0][0] * c(0, 0) + g[0][1] * c(0, 1) + g[0][2] * c(0, 2);
            for (i, row) in inv.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = c(j, i) / det;
                }
            }
            (inv, det)
        }
        _ => unreachable!("simplex dimension {k}"),
    }
}

/// Row-major `(k+1) x (k+1)` P1 stiffness of one simplex together with its
/// measure. `None` when the measure is not above `min_measure`.
pub fn element_stiffness(points: &[Point], min_measure: f64) -> Option<(Vec<f64>, f64)> {
    let n = points.len();
    let k = n - 1;
    assert!((1..=3).contains(&k), "simplex with {n} vertices");
    let edges: Vec<Point> = points[1..].iter().map(|p| *p - points[0]).collect();
    let mut g = [[0.0; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            g[i][j] = edges[i].dot(&edges[j]);
        }
    }
    // Symmetrize so the inverse is exactly symmetric.
    for i in 0..k {
        for j in 0..i {
            g[j][i] = g[i][j];
        }
    }
    let (ginv, det) = small_inverse(&g, k);
    let measure = det.max(0.0).sqrt() / factorial(k);
    if !(measure > min_measure) {
        return None;
    }
    let mut m = vec![0.0; n * n];
    for i in 0..k {
        for j in 0..k {
            m[(i + 1) * n + j + 1] = measure * ginv[i][j];
        }
    }
    let mut total = 0.0;
    for j in 1..n {
        let col: f64 = (1..n).map(|i| m[i * n + j]).sum();
        m[j] = -col;
        m[j * n] = -col;
        total += col;
    }
    m[0] = total;
    Some((m, measure))
}

/// Smallest admissible cell measure for `mesh`.
fn measure_threshold(mesh: &Mesh) -> f64 {
    1e-14 * mesh.bounding_box().diagonal().powi(mesh.topo_dim() as i32)
}

/// Global P1 stiffness matrix.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<CsrMatrix> {
    let threshold = measure_threshold(mesh);
    let n = mesh.nodes_per_cell();
    let locals: Vec<Vec<(usize, usize, f64)>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let (m, _) = element_stiffness(&mesh.cell_points(c), threshold).ok_or_else(|| {
                FemError::DegenerateCell {
                    cell: c,
                    measure: mesh.cell_measure(c),
                }
            })?;
            let verts = mesh.cell(c);
            let mut t = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    t.push((verts[i], verts[j], m[i * n + j]));
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    Ok(CsrMatrix::from_triplets(
        mesh.num_vertices(),
        locals.into_iter().flatten().collect(),
    ))
}

/// Prescribed values by vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DirichletBC {
    entries: Vec<(usize, f64)>,
}

impl DirichletBC {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(v, x) in &entries {
            if !seen.insert(v) {
                return Err(FemError::Contract(format!("vertex {v} constrained twice")));
            }
            if !x.is_finite() {
                return Err(FemError::Contract(format!("non-finite value {x} at vertex {v}")));
            }
        }
        Ok(DirichletBC { entries })
    }

    /// Values `f(x_v)` on the listed vertices.
    pub fn from_fn(mesh: &Mesh, vertices: &[usize], f: impl Fn(&Point) -> f64) -> Result<Self> {
        DirichletBC::new(vertices.iter().map(|&v| (v, f(&mesh.vertex(v)))).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest and largest prescribed value.
    pub fn range(&self) -> Option<(f64, f64)> {
        let vals = self.entries.iter().map(|e| e.1);
        let lo = vals.clone().reduce(f64::min)?;
        let hi = vals.reduce(f64::max)?;
        Some((lo, hi))
    }
}

/// Solves `-Laplace u = 0` with Dirichlet data and returns the field with
/// its solver report.
pub fn solve_laplace_with_report(mesh: &Mesh, bc: &DirichletBC) -> Result<(Field, CgReport)> {
    if bc.is_empty() {
        return Err(FemError::Contract(
            "no Dirichlet data: the pure Neumann problem is singular".into(),
        ));
    }
    let nv = mesh.num_vertices();
    if let Some(&(v, _)) = bc.entries().iter().find(|e| e.0 >= nv) {
        return Err(FemError::Contract(format!(
            "Dirichlet vertex {v} outside mesh with {nv} vertices"
        )));
    }
    let mut a = assemble_stiffness(mesh)?;
    let mut rhs = vec![0.0; nv];
    a.apply_dirichlet(&mut rhs, bc.entries());
    let mut u = vec![0.0; nv];
    for &(v, x) in bc.entries() {
        u[v] = x;
    }
    let report = cg_solve(&a, &rhs, &mut u, &CgOptions::default())?;
    for &(v, x) in bc.entries() {
        u[v] = x;
    }
    Ok((Field::scalar("u", u)?, report))
}

pub fn solve_laplace(mesh: &Mesh, bc: &DirichletBC) -> Result<Field> {
    solve_laplace_with_report(mesh, bc).map(|r| r.0)
}

/// Barycentric points and weights (summing to 1) exact for degree 5 on
/// segments and triangles, degree 2 on tetrahedra.
fn quadrature_rule(topo_dim: usize) -> Vec<(Vec<f64>, f64)> {
    match topo_dim {
        1 => {
            let s = (0.6f64).sqrt() / 2.0;
            vec![
                (vec![0.5 - s, 0.5 + s], 5.0 / 18.0),
                (vec![0.5, 0.5], 8.0 / 18.0),
                (vec![0.5 + s, 0.5 - s], 5.0 / 18.0),
            ]
        }
        2 => {
            let mut r = vec![(vec![1.0 / 3.0; 3], 0.225)];
            for (a, b, w) in [
                (0.059715871789770, 0.470142064105115, 0.132394152788506),
                (0.797426985353087, 0.101286507323456, 0.125939180544827),
            ] {
                r.push((vec![a, b, b], w));
                r.push((vec![b, a, b], w));
                r.push((vec![b, b, a], w));
            }
            r
        }
        3 => {
            let (a, b) = (0.5854101966249685, 0.1381966011250105);
            (0..4)
                .map(|i| {
                    let mut l = vec![b; 4];
                    l[i] = a;
                    (l, 0.25)
                })
                .collect()
        }
        k => panic!("no quadrature rule for dimension {k}"),
    }
}

/// L2 norm of `u_h - exact` for a P1 vertex field.
pub fn l2_error(mesh: &Mesh, values: &[f64], exact: impl Fn(&Point) -> f64 + Sync) -> f64 {
    let rule = quadrature_rule(mesh.topo_dim());
    let sum: f64 = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let pts = mesh.cell_points(c);
            let verts = mesh.cell(c);
            let measure = mesh.cell_measure(c);
            rule.iter()
                .map(|(lambda, w)| {
                    let mut x = Point::ORIGIN;
                    let mut uh = 0.0;
                    for ((l, p), &v) in lambda.iter().zip(&pts).zip(verts) {
                        x = x + *p * *l;
                        uh += l * values[v];
                    }
                    let e = uh - exact(&x);
                    w * measure * e * e
                })
                .sum::<f64>()
        })
        .sum();
    sum.sqrt()
}

/// Result of [`couple_surface_volume`].
#[derive(Clone, Debug)]
pub struct Coupling {
    /// The extracted patch and, per patch vertex, its volume vertex index.
    pub surface: Mesh,
    pub vertex_map: Vec<usize>,
    pub surface_field: Field,
    pub volume_field: Field,
    pub map: InterfaceMap,
    pub surface_report: CgReport,
    pub volume_report: CgReport,
}

/// Laplace-Beltrami on the boundary patch `patch_tags` with `perimeter`
/// data on the patch border, then volume Laplace with the surface solution
/// on the patch and `remaining` on the rest of the boundary.
pub fn couple_surface_volume(
    volume: &Mesh,
    patch_tags: &[Tag],
    perimeter: impl Fn(&Point) -> f64,
    remaining: impl Fn(&Point) -> f64,
) -> Result<Coupling> {
    let (surface, vertex_map) = volume.extract_boundary(patch_tags)?;
    let rim = surface.all_boundary_vertices();
    if rim.is_empty() {
        return Err(FemError::Contract(format!(
            "boundary patch {patch_tags:?} is closed: no perimeter to carry data"
        )));
    }
    let surface_bc = DirichletBC::from_fn(&surface, &rim, &perimeter)?;
    let (surface_field, surface_report) = solve_laplace_with_report(&surface, &surface_bc)?;

    let map = compute_interface_map(&surface, &[], volume, patch_tags, None)?;
    let patch = volume.boundary_vertices(patch_tags);
    let patch_values = transfer_across_interface(&map, &surface_field, &patch)?;
    let mut entries: Vec<(usize, f64)> = patch.iter().copied().zip(patch_values).collect();
    let on_patch: HashSet<usize> = patch.iter().copied().collect();
    entries.extend(
        volume
            .all_boundary_vertices()
            .into_iter()
            .filter(|v| !on_patch.contains(v))
            .map(|v| (v, remaining(&volume.vertex(v)))),
    );
    let (volume_field, volume_report) = solve_laplace_with_report(volume, &DirichletBC::new(entries)?)?;
    Ok(Coupling {
        surface,
        vertex_map,
        surface_field,
        volume_field,
        map,
        surface_report,
        volume_report,
    })
}
