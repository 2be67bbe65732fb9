//! Edge-based approximate geodesic distances.
//!
//! Distances are shortest-path lengths on the 1-skeleton of a mesh, with
//! every edge weighted by its Euclidean length. This over-estimates the true
//! geodesic distance but is cheap and exact on the graph.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::meshio::Mesh;

#[derive(Debug, Error, PartialEq)]
pub enum GeodesicError {
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T, E = GeodesicError> = std::result::Result<T, E>;

/// Symmetric vertex adjacency with Euclidean edge lengths, stored row-wise
/// with neighbours sorted by index.
#[derive(Clone, Debug)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    lengths: Vec<f64>,
}

impl EdgeGraph {
    /// The 1-skeleton of `mesh`: every pair of vertices sharing a cell.
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(mesh.num_cells() * 6 * 2);
        for cell in mesh.cells() {
            for (a, &u) in cell.iter().enumerate() {
                for &v in &cell[a + 1..] {
                    edges.push((u, v));
                    edges.push((v, u));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let n = mesh.num_vertices();
        let mut offsets = vec![0; n + 1];
        for &(u, _) in &edges {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let lengths = edges
            .iter()
            .map(|&(u, v)| mesh.vertex(u).distance(&mesh.vertex(v)))
            .collect();
        EdgeGraph {
            offsets,
            neighbors,
            lengths,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// `(neighbour, edge length)` pairs of `v`, by increasing neighbour index.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.neighbors[r.clone()]
            .iter()
            .copied()
            .zip(self.lengths[r].iter().copied())
    }

    pub fn edge_length(&self, u: usize, v: usize) -> Option<f64> {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.neighbors[r.clone()]
            .binary_search(&v)
            .ok()
            .map(|k| self.lengths[r.start + k])
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.num_vertices() {
            return Err(GeodesicError::Contract(format!(
                "vertex {v} out of range ({} vertices)",
                self.num_vertices()
            )));
        }
        Ok(())
    }
}

pub fn build_edge_graph(mesh: &Mesh) -> EdgeGraph {
    EdgeGraph::from_mesh(mesh)
}

/// Per-vertex distances to the closest source and the predecessor on a
/// shortest edge path. Unreachable vertices have infinite distance.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub distances: Vec<f64>,
    pub predecessors: Vec<Option<usize>>,
}

impl DistanceField {
    /// Vertices from the closest source to `v`, or `None` if unreachable.
    pub fn path_to(&self, v: usize) -> Option<Vec<usize>> {
        if !self.distances[v].is_finite() {
            return None;
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.predecessors[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct QueueItem {
    dist: f64,
    vertex: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra with lazy deletion. Among equal-length paths the
/// predecessor with the smaller index wins. Stops early once `stop_at` is
/// settled; vertices farther than `radius` are never expanded.
fn dijkstra(
    graph: &EdgeGraph,
    sources: &[usize],
    radius: f64,
    stop_at: Option<usize>,
) -> DistanceField {
    let n = graph.num_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Reverse(QueueItem { dist: 0.0, vertex: s }));
    }
    while let Some(Reverse(QueueItem { dist: d, vertex: u })) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        if stop_at == Some(u) {
            break;
        }
        for (v, len) in graph.neighbors(u) {
            if done[v] {
                continue;
            }
            let nd = d + len;
            if nd > radius {
                continue;
            }
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(Reverse(QueueItem { dist: nd, vertex: v }));
            } else if nd == dist[v] && pred[v].is_some_and(|p| u < p) {
                pred[v] = Some(u);
            }
        }
    }
    DistanceField {
        distances: dist,
        predecessors: pred,
    }
}

fn check_sources(graph: &EdgeGraph, sources: &[usize]) -> Result<()> {
    if sources.is_empty() {
        return Err(GeodesicError::Contract("empty source set".into()));
    }
    sources.iter().try_for_each(|&s| graph.check_vertex(s))
}

/// Distances from the closest of `sources` to every vertex.
pub fn geodesic_distances(graph: &EdgeGraph, sources: &[usize]) -> Result<DistanceField> {
    check_sources(graph, sources)?;
    Ok(dijkstra(graph, sources, f64::INFINITY, None))
}

/// Reusable working arrays for many truncated searches on the same graph.
#[derive(Clone, Debug)]
pub struct TruncatedDijkstra<'g> {
    graph: &'g EdgeGraph,
    dist: Vec<f64>,
    done: Vec<bool>,
    touched: Vec<usize>,
}

impl<'g> TruncatedDijkstra<'g> {
    pub fn new(graph: &'g EdgeGraph) -> Self {
        let n = graph.num_vertices();
        TruncatedDijkstra {
            graph,
            dist: vec![f64::INFINITY; n],
            done: vec![false; n],
            touched: Vec::new(),
        }
    }

    /// Vertices at distance strictly below `radius` from `source`, as
    /// `(vertex, distance)` sorted by vertex. Cost is proportional to the
    /// size of the ball, not of the graph.
    pub fn ball(&mut self, source: usize, radius: f64) -> Result<Vec<(usize, f64)>> {
        self.graph.check_vertex(source)?;
        let mut heap = BinaryHeap::new();
        self.dist[source] = 0.0;
        self.touched.push(source);
        heap.push(Reverse(QueueItem { dist: 0.0, vertex: source }));
        let mut out = Vec::new();
        while let Some(Reverse(QueueItem { dist: d, vertex: u })) = heap.pop() {
            if self.done[u] || d > self.dist[u] {
                continue;
            }
            self.done[u] = true;
            out.push((u, d));
            for (v, len) in self.graph.neighbors(u) {
                let nd = d + len;
                if !self.done[v] && nd < radius && nd < self.dist[v] {
                    if self.dist[v].is_infinite() {
                        self.touched.push(v);
                    }
                    self.dist[v] = nd;
                    heap.push(Reverse(QueueItem { dist: nd, vertex: v }));
                }
            }
        }
        for v in self.touched.drain(..) {
            self.dist[v] = f64::INFINITY;
            self.done[v] = false;
        }
        out.sort_unstable_by_key(|e| e.0);
        Ok(out)
    }
}

/// A shortest edge path between two vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortestPath {
    pub vertices: Vec<usize>,
    pub length: f64,
}

/// Shortest edge path from `a` to `b`; `Ok(None)` when they are not connected.
pub fn shortest_path(graph: &EdgeGraph, a: usize, b: usize) -> Result<Option<ShortestPath>> {
    graph.check_vertex(a)?;
    graph.check_vertex(b)?;
    let field = dijkstra(graph, &[a], f64::INFINITY, Some(b));
    Ok(field.path_to(b).map(|vertices| ShortestPath {
        vertices,
        length: field.distances[b],
    }))
}
