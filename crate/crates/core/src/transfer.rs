//! Field transfer between non-matching point sets.
//!
//! The RBF interpolant of data `f` at source points `x_j` is
//! `g(y) = sum_j c_j phi(d(y, x_j))` with `A c = f`, `A_ij = phi(d(x_i, x_j))`.
//! With rescaling enabled the result is divided by the interpolant of the
//! constant 1, `s(y) = sum_j (c1)_j phi(d(y, x_j))`, `A c1 = 1`, which makes
//! constants reproduced exactly up to solver accuracy.
//!
//! The distance `d` is either Euclidean or the edge-graph geodesic distance
//! on a background mesh (see [`GeodesicMetric`]).
//!
//! Two simpler remaps are also provided: closest-point copy and barycentric
//! (P1) interpolation on a volume mesh.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::geodesic::{EdgeGraph, GeodesicError, TruncatedDijkstra};
use crate::geometry::{Aabb, Point};
use crate::locator::{LocatorError, RTreeIndex, DEFAULT_LEAF_CAPACITY};
use crate::meshio::{Field, Mesh, MeshError};
use crate::sparse::{cg_solve, CgOptions, CgReport, CsrMatrix, SolverError};

/// Ratio between the default support radius and the largest nearest-neighbour
/// gap of the source cloud.
pub const DEFAULT_RADIUS_FACTOR: f64 = 4.0;
/// Targets whose rescaling denominator falls below this are rejected.
pub const RESCALING_GUARD: f64 = 1e-10;
/// Points must lie this close (relative to the mesh bounding-box diagonal)
/// to a mesh vertex to be bound for the geodesic metric.
pub const BINDING_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("source points {0} and {1} coincide")]
    DuplicateSources(usize, usize),
    #[error("point {index} at {point} is farther than {tolerance:e} from every mesh vertex")]
    Binding {
        index: usize,
        point: Point,
        tolerance: f64,
    },
    #[error("rescaling denominator {value:e} at target {target} is below {RESCALING_GUARD:e}: target outside every source support")]
    RescalingDegenerate { target: usize, value: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Locator(#[from] LocatorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

pub type Result<T, E = TransferError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFamily {
    /// `(1 - r/rho)^4 (4 r/rho + 1)` for `r < rho`, zero beyond.
    WendlandC2,
    /// `exp(-(r/rho)^2)`, globally supported.
    Gaussian,
}

impl FromStr for KernelFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "wendland-c2" | "wendlandc2" | "wendland" => Ok(KernelFamily::WendlandC2),
            "gaussian" => Ok(KernelFamily::Gaussian),
            _ => Err(format!("unknown kernel family '{s}' (expected wendland-c2 or gaussian)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub radius: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(TransferError::Contract(format!(
                "support radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Kernel { family, radius })
    }

    pub fn wendland(radius: f64) -> Result<Self> {
        Kernel::new(KernelFamily::WendlandC2, radius)
    }

    pub fn gaussian(radius: f64) -> Result<Self> {
        Kernel::new(KernelFamily::Gaussian, radius)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let t = r / self.radius;
        match self.family {
            KernelFamily::WendlandC2 => {
                if t >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - t;
                    let s2 = s * s;
                    s2 * s2 * (4.0 * t + 1.0)
                }
            }
            KernelFamily::Gaussian => (-t * t).exp(),
        }
    }

    /// Distance beyond which the kernel vanishes.
    pub fn cutoff(&self) -> f64 {
        match self.family {
            KernelFamily::WendlandC2 => self.radius,
            KernelFamily::Gaussian => f64::INFINITY,
        }
    }
}

/// Largest distance from a point to its nearest distinct neighbour.
/// `None` for fewer than two points.
pub fn max_nearest_neighbor_gap(points: &[Point]) -> Result<Option<f64>> {
    if points.len() < 2 {
        return Ok(None);
    }
    let tree = RTreeIndex::build(points, DEFAULT_LEAF_CAPACITY)?;
    let gap = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| tree.nearest_where(p, |j| j != i).map_or(0.0, |h| h.distance))
        .reduce(|| 0.0, f64::max);
    Ok(Some(gap))
}

/// `factor` times the largest nearest-neighbour gap of `points`.
pub fn default_support_radius(points: &[Point], factor: f64) -> Result<f64> {
    match max_nearest_neighbor_gap(points)? {
        Some(h) if h > 0.0 => Ok(factor * h),
        _ => Err(TransferError::Contract(
            "cannot derive a support radius from fewer than two distinct points".into(),
        )),
    }
}

/// Edge-graph geodesic distance on a background mesh. Points are bound to
/// their nearest mesh vertex, which must lie within
/// `BINDING_TOLERANCE * bbox diagonal`.
#[derive(Clone, Debug)]
pub struct GeodesicMetric {
    graph: EdgeGraph,
    tree: RTreeIndex,
    tolerance: f64,
}

impl GeodesicMetric {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        Ok(GeodesicMetric {
            graph: EdgeGraph::from_mesh(mesh),
            tree: RTreeIndex::build(mesh.vertices(), DEFAULT_LEAF_CAPACITY)?,
            tolerance: BINDING_TOLERANCE * mesh.bounding_box().diagonal(),
        })
    }

    pub fn graph(&self) -> &EdgeGraph {
        &self.graph
    }

    /// Nearest mesh vertex of every point.
    pub fn bind(&self, points: &[Point]) -> Result<Vec<usize>> {
        points
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let hit = self.tree.nearest(p);
                if hit.distance <= self.tolerance {
                    Ok(hit.index)
                } else {
                    Err(TransferError::Binding {
                        index,
                        point: *p,
                        tolerance: self.tolerance,
                    })
                }
            })
            .collect()
    }
}

/// Builds the geodesic metric over `mesh`.
pub fn setup_geodesic_metric(mesh: &Mesh) -> Result<GeodesicMetric> {
    GeodesicMetric::new(mesh)
}

#[derive(Clone, Debug)]
pub enum Metric {
    Euclidean,
    Geodesic(GeodesicMetric),
}

#[derive(Clone, Debug)]
enum Evaluator {
    Euclidean {
        tree: RTreeIndex,
    },
    Geodesic {
        metric: GeodesicMetric,
        /// For every mesh vertex, the sources whose truncated geodesic ball
        /// reaches it, with the distance.
        by_vertex: Vec<Vec<(usize, f64)>>,
    },
}

/// Solver statistics of a transfer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransferReport {
    /// One entry per solve: the constant-1 system first (if rescaling), then
    /// one per data component.
    pub solves: Vec<CgReport>,
    /// Range of the rescaling denominator over the targets.
    pub rescale_min: Option<f64>,
    pub rescale_max: Option<f64>,
    pub tolerance: f64,
}

impl fmt::Display for TransferReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "solves={}", self.solves.len())?;
        let iters: Vec<String> = self.solves.iter().map(|s| s.iterations.to_string()).collect();
        writeln!(f, "cg_iterations={}", iters.join(","))?;
        let max_res = self
            .solves
            .iter()
            .map(|s| s.relative_residual)
            .fold(0.0, f64::max);
        writeln!(f, "max_relative_residual={max_res:e}")?;
        writeln!(f, "tolerance={:e}", self.tolerance)?;
        if let (Some(lo), Some(hi)) = (self.rescale_min, self.rescale_max) {
            writeln!(f, "rescale_min={lo}")?;
            writeln!(f, "rescale_max={hi}")?;
        }
        Ok(())
    }
}

/// Prepared RBF interpolation operator.
#[derive(Clone, Debug)]
pub struct RbfOperator {
    sources: Vec<Point>,
    kernel: Kernel,
    evaluator: Evaluator,
    system: CsrMatrix,
    solver: CgOptions,
    ones_coefficients: Option<Vec<f64>>,
    ones_report: Option<CgReport>,
}

/// Output of [`RbfOperator::interpolate`].
#[derive(Clone, Debug)]
pub struct Interpolated {
    /// `targets.len() * components` values, interleaved per target.
    pub values: Vec<f64>,
    pub report: TransferReport,
}

impl RbfOperator {
    /// Assembles the interpolation matrix over `sources` and, when
    /// `rescale` is set, solves for the coefficients of the constant 1.
    pub fn new(sources: &[Point], kernel: Kernel, metric: Metric, rescale: bool) -> Result<Self> {
        if sources.is_empty() {
            return Err(TransferError::Contract("no source points".into()));
        }
        let n = sources.len();
        let cutoff = kernel.cutoff();
        let (evaluator, rows) = match metric {
            Metric::Euclidean => {
                let tree = RTreeIndex::build(sources, DEFAULT_LEAF_CAPACITY)?;
                let dup_r = 1e-12 * kernel.radius;
                for (i, p) in sources.iter().enumerate() {
                    if let Some(&(j, _)) = tree.within_radius(p, dup_r).iter().find(|e| e.0 != i) {
                        return Err(TransferError::DuplicateSources(i.min(j), i.max(j)));
                    }
                }
                let rows: Vec<Vec<(usize, f64)>> = sources
                    .par_iter()
                    .map(|p| euclidean_weights(&tree, sources, &kernel, p))
                    .collect();
                (Evaluator::Euclidean { tree }, rows)
            }
            Metric::Geodesic(metric) => {
                let bound = metric.bind(sources)?;
                let nv = metric.graph.num_vertices();
                let mut source_of = vec![usize::MAX; nv];
                for (j, &v) in bound.iter().enumerate() {
                    if source_of[v] != usize::MAX {
                        return Err(TransferError::DuplicateSources(source_of[v], j));
                    }
                    source_of[v] = j;
                }
                let balls: Vec<Vec<(usize, f64)>> = bound
                    .par_iter()
                    .map_init(
                        || TruncatedDijkstra::new(&metric.graph),
                        |ws, &v| ws.ball(v, cutoff),
                    )
                    .collect::<Result<_, GeodesicError>>()?;
                let mut by_vertex: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
                let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
                for (i, ball) in balls.iter().enumerate() {
                    for &(v, d) in ball {
                        by_vertex[v].push((i, d));
                        let j = source_of[v];
                        // Take each pair from the ball of its smaller index and
                        // mirror it, so the matrix is exactly symmetric.
                        if j != usize::MAX && j >= i {
                            let w = kernel.eval(d);
                            rows[i].push((j, w));
                            if j != i {
                                rows[j].push((i, w));
                            }
                        }
                    }
                }
                (Evaluator::Geodesic { metric, by_vertex }, rows)
            }
        };
        let system = CsrMatrix::from_rows(rows);
        let solver = CgOptions::default();
        let (ones_coefficients, ones_report) = if rescale {
            let mut c = vec![0.0; n];
            let rep = cg_solve(&system, &vec![1.0; n], &mut c, &solver)?;
            (Some(c), Some(rep))
        } else {
            (None, None)
        };
        Ok(RbfOperator {
            sources: sources.to_vec(),
            kernel,
            evaluator,
            system,
            solver,
            ones_coefficients,
            ones_report,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn system(&self) -> &CsrMatrix {
        &self.system
    }

    pub fn rescaled(&self) -> bool {
        self.ones_coefficients.is_some()
    }

    pub fn ones_coefficients(&self) -> Option<&[f64]> {
        self.ones_coefficients.as_deref()
    }

    /// Sparse kernel weights `(source, phi(d(y, x_j)))` for every target.
    pub fn target_weights(&self, targets: &[Point]) -> Result<Vec<Vec<(usize, f64)>>> {
        match &self.evaluator {
            Evaluator::Euclidean { tree } => Ok(targets
                .par_iter()
                .map(|y| euclidean_weights(tree, &self.sources, &self.kernel, y))
                .collect()),
            Evaluator::Geodesic { metric, by_vertex } => {
                let bound = metric.bind(targets)?;
                Ok(bound
                    .iter()
                    .map(|&v| {
                        by_vertex[v]
                            .iter()
                            .map(|&(j, d)| (j, self.kernel.eval(d)))
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Transfers `values` (`components` per source, interleaved) to `targets`.
    pub fn interpolate(
        &self,
        values: &[f64],
        components: usize,
        targets: &[Point],
    ) -> Result<Interpolated> {
        let n = self.sources.len();
        if components == 0 || values.len() != n * components {
            return Err(TransferError::Contract(format!(
                "expected {} source values ({n} sources x {components} components), got {}",
                n * components,
                values.len()
            )));
        }
        let weights = self.target_weights(targets)?;
        let apply = |coef: &[f64], row: &[(usize, f64)]| -> f64 {
            row.iter().map(|&(j, w)| coef[j] * w).sum()
        };

        let mut report = TransferReport {
            tolerance: self.solver.relative_tolerance,
            ..Default::default()
        };
        let denominators = match &self.ones_coefficients {
            Some(c1) => {
                report.solves.extend(self.ones_report);
                let s: Vec<f64> = weights.iter().map(|row| apply(c1, row)).collect();
                if let Some((target, &value)) = s
                    .iter()
                    .enumerate()
                    .find(|(_, v)| !(v.abs() >= RESCALING_GUARD))
                {
                    return Err(TransferError::RescalingDegenerate { target, value });
                }
                report.rescale_min = s.iter().copied().reduce(f64::min);
                report.rescale_max = s.iter().copied().reduce(f64::max);
                Some(s)
            }
            None => None,
        };

        let mut out = vec![0.0; targets.len() * components];
        let mut coef = vec![0.0; n];
        for comp in 0..components {
            let mut rhs: Vec<f64> = values.iter().skip(comp).step_by(components).copied().collect();
            // The rescaled interpolant of f equals m + interp(f - m) / s for
            // any constant m. Using the midrange makes constant data exact.
            let shift = if denominators.is_some() {
                let (lo, hi) = rhs
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let m = 0.5 * lo + 0.5 * hi;
                rhs.iter_mut().for_each(|v| *v -= m);
                m
            } else {
                0.0
            };
            coef.iter_mut().for_each(|c| *c = 0.0);
            report.solves.push(cg_solve(&self.system, &rhs, &mut coef, &self.solver)?);
            for (k, row) in weights.iter().enumerate() {
                let g = apply(&coef, row);
                out[k * components + comp] = match &denominators {
                    Some(s) => shift + g / s[k],
                    None => g,
                };
            }
        }
        Ok(Interpolated {
            values: out,
            report,
        })
    }
}

fn euclidean_weights(
    tree: &RTreeIndex,
    sources: &[Point],
    kernel: &Kernel,
    y: &Point,
) -> Vec<(usize, f64)> {
    match kernel.family {
        KernelFamily::WendlandC2 => tree
            .within_radius(y, kernel.radius)
            .into_iter()
            .map(|(j, d2)| (j, kernel.eval(d2.sqrt())))
            .collect(),
        KernelFamily::Gaussian => sources
            .iter()
            .enumerate()
            .map(|(j, x)| (j, kernel.eval(y.distance(x))))
            .collect(),
    }
}

/// Prepares an RBF operator over `source` points.
pub fn setup_rbf(source: &[Point], kernel: Kernel, metric: Metric, rescale: bool) -> Result<RbfOperator> {
    RbfOperator::new(source, kernel, metric, rescale)
}

/// Each target receives the value of its nearest source vertex.
pub fn remap_closest_point(source: &Mesh, field: &Field, targets: &[Point]) -> Result<Vec<f64>> {
    field.check_mesh(source)?;
    let tree = RTreeIndex::build(source.vertices(), DEFAULT_LEAF_CAPACITY)?;
    let c = field.components();
    let mut out = Vec::with_capacity(targets.len() * c);
    for y in targets {
        out.extend_from_slice(field.value(tree.nearest(y).index));
    }
    Ok(out)
}

/// Output of [`remap_linear`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRemap {
    pub values: Vec<f64>,
    /// `true` for targets in no cell; those got the closest-point value.
    pub outside: Vec<bool>,
}

/// Barycentric coordinate tolerance for point-in-simplex tests.
pub const BARYCENTRIC_TOLERANCE: f64 = 1e-12;

/// Barycentric coordinates of `p` in a full-dimensional simplex.
pub fn barycentric(cell: &[Point], p: &Point) -> Vec<f64> {
    match cell.len() {
        2 => {
            let t = (p.x() - cell[0].x()) / (cell[1].x() - cell[0].x());
            vec![1.0 - t, t]
        }
        3 => {
            let cross = |a: Point, b: Point| a.x() * b.y() - a.y() * b.x();
            let e1 = cell[1] - cell[0];
            let e2 = cell[2] - cell[0];
            let q = *p - cell[0];
            let det = cross(e1, e2);
            let l1 = cross(q, e2) / det;
            let l2 = cross(e1, q) / det;
            vec![1.0 - l1 - l2, l1, l2]
        }
        4 => {
            let triple = |a: Point, b: Point, c: Point| a.dot(&b.cross(&c));
            let e1 = cell[1] - cell[0];
            let e2 = cell[2] - cell[0];
            let e3 = cell[3] - cell[0];
            let q = *p - cell[0];
            let det = triple(e1, e2, e3);
            let l1 = triple(q, e2, e3) / det;
            let l2 = triple(e1, q, e3) / det;
            let l3 = triple(e1, e2, q) / det;
            vec![1.0 - l1 - l2 - l3, l1, l2, l3]
        }
        k => panic!("barycentric coordinates of a {k}-vertex cell"),
    }
}

/// P1 interpolation of a vertex field at arbitrary points of a volume mesh
/// (`topo_dim == space_dim`). Points in no cell fall back to closest-point.
pub fn remap_linear(source: &Mesh, field: &Field, targets: &[Point]) -> Result<LinearRemap> {
    field.check_mesh(source)?;
    if source.topo_dim() != source.space_dim() {
        return Err(TransferError::Contract(format!(
            "linear remap needs a volume mesh, got topo_dim={} in space_dim={}",
            source.topo_dim(),
            source.space_dim()
        )));
    }
    let boxes = (0..source.num_cells())
        .map(|c| (Aabb::from_points(&source.cell_points(c)), c))
        .collect();
    let cell_tree = RTreeIndex::from_boxes(boxes, DEFAULT_LEAF_CAPACITY)?;
    let vertex_tree = RTreeIndex::build(source.vertices(), DEFAULT_LEAF_CAPACITY)?;
    let eps = 1e-12 * source.bounding_box().diagonal();
    let c = field.components();

    let results: Vec<(Vec<f64>, bool)> = targets
        .par_iter()
        .map(|y| {
            for cell in cell_tree.containing(y, eps) {
                let lambda = barycentric(&source.cell_points(cell), y);
                if lambda.iter().all(|&l| l >= -BARYCENTRIC_TOLERANCE) {
                    let mut v = vec![0.0; c];
                    for (&vert, l) in source.cell(cell).iter().zip(&lambda) {
                        for (k, vk) in v.iter_mut().enumerate() {
                            *vk += l * field.value(vert)[k];
                        }
                    }
                    return (v, false);
                }
            }
            (field.value(vertex_tree.nearest(y).index).to_vec(), true)
        })
        .collect();
    let mut values = Vec::with_capacity(targets.len() * c);
    let mut outside = Vec::with_capacity(targets.len());
    for (v, o) in results {
        values.extend(v);
        outside.push(o);
    }
    Ok(LinearRemap { values, outside })
}

/// One point per cell: the cell barycenter, in cell order.
pub fn quadrature_targets(mesh: &Mesh) -> Vec<Point> {
    (0..mesh.num_cells())
        .map(|c| Point::centroid(&mesh.cell_points(c)))
        .collect()
}

/// Transfer methods offered by the command-line front-end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rbf,
    RbfRescaled,
    RbfGeodesic,
    Closest,
    Linear,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rbf" => Ok(Method::Rbf),
            "rbf-rescaled" => Ok(Method::RbfRescaled),
            "rbf-geodesic" => Ok(Method::RbfGeodesic),
            "closest" => Ok(Method::Closest),
            "linear" => Ok(Method::Linear),
            _ => Err(format!(
                "unknown method '{s}' (expected rbf, rbf-rescaled, rbf-geodesic, closest or linear)"
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rbf => "rbf",
            Method::RbfRescaled => "rbf-rescaled",
            Method::RbfGeodesic => "rbf-geodesic",
            Method::Closest => "closest",
            Method::Linear => "linear",
        })
    }
}
