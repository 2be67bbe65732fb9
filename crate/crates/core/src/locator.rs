//! Nearest-neighbour point location.
//!
//! [`RTreeIndex`] is an immutable R-tree bulk loaded with Sort-Tile-Recursive
//! packing. Leaves hold axis-aligned boxes tagged with a global index; point
//! sets are stored as degenerate boxes. All distance comparisons are done on
//! squared distances and ties are broken by the smaller global index, so the
//! tree and the exhaustive scan in [`nearest_linear`] return identical hits.
//!
//! [`PartitionedLocator`] emulates the distributed lookup where every owner
//! indexes only its own points and queries are answered against the union by
//! reducing per-owner candidates.

use std::cmp::Ordering;

use rayon::prelude::*;
use smallvec::SmallVec;
use thiserror::Error;

use crate::geometry::{Aabb, Point};
use crate::meshio::{Mesh, Tag};

pub const DEFAULT_LEAF_CAPACITY: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum LocatorError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no boundary face carries any of the tags {tags:?}")]
    EmptySelection { tags: Vec<Tag> },
}

pub type Result<T, E = LocatorError> = std::result::Result<T, E>;

/// Result of a nearest-neighbour query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearestHit {
    /// Global index of the closest point.
    pub index: usize,
    /// Euclidean distance between the query and that point.
    pub distance: f64,
    /// Owner of the point; 0 for non-partitioned searches.
    pub owner: usize,
}

#[derive(Clone, Copy, Debug)]
struct Best {
    dist2: f64,
    index: usize,
}

impl Best {
    const NONE: Best = Best {
        dist2: f64::INFINITY,
        index: usize::MAX,
    };

    #[inline]
    fn improves(&self, dist2: f64, index: usize) -> bool {
        dist2 < self.dist2 || (dist2 == self.dist2 && index < self.index)
    }

    fn hit(self, owner: usize) -> Option<NearestHit> {
        (self.index != usize::MAX).then(|| NearestHit {
            index: self.index,
            distance: self.dist2.sqrt(),
            owner,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    bbox: Aabb,
    index: usize,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bbox: Aabb,
    start: usize,
    end: usize,
}

/// Immutable STR-packed R-tree.
#[derive(Clone, Debug)]
pub struct RTreeIndex {
    leaf_capacity: usize,
    entries: Vec<Entry>,
    /// `levels[0]` are the leaves, whose ranges point into `entries`; the
    /// ranges of `levels[l]` point into `levels[l - 1]`. The last level is the
    /// root alone.
    levels: Vec<Vec<Node>>,
}

fn ceil_cbrt(p: usize) -> usize {
    let mut s = (p as f64).cbrt().ceil() as usize;
    while s.pow(3) < p {
        s += 1;
    }
    while s > 1 && (s - 1).pow(3) >= p {
        s -= 1;
    }
    s.max(1)
}

fn by_axis<T>(axis: usize, center: &impl Fn(&T) -> (Point, usize)) -> impl Fn(&T, &T) -> Ordering + '_ {
    move |a, b| {
        let (pa, ia) = center(a);
        let (pb, ib) = center(b);
        pa.0[axis].total_cmp(&pb.0[axis]).then(ia.cmp(&ib))
    }
}

/// Reorders `items` so that consecutive runs of `capacity` items form STR
/// tiles: slabs along x, runs along y within a slab, then sorted along z.
fn str_order<T>(items: &mut [T], capacity: usize, center: impl Fn(&T) -> (Point, usize)) {
    let n = items.len();
    let pages = n.div_ceil(capacity);
    let s = ceil_cbrt(pages);
    let slab = capacity * s * s;
    let run = capacity * s;
    items.sort_by(by_axis(0, &center));
    for slab_items in items.chunks_mut(slab) {
        slab_items.sort_by(by_axis(1, &center));
        for run_items in slab_items.chunks_mut(run) {
            run_items.sort_by(by_axis(2, &center));
        }
    }
}

impl RTreeIndex {
    /// Bulk loads a tree over `points`, using their positions as global indices.
    pub fn build(points: &[Point], leaf_capacity: usize) -> Result<Self> {
        Self::from_boxes(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| (Aabb::from_point(*p), i))
                .collect(),
            leaf_capacity,
        )
    }

    /// Bulk loads a tree over `points` carrying caller-provided global indices.
    pub fn build_indexed(points: &[Point], indices: &[usize], leaf_capacity: usize) -> Result<Self> {
        if points.len() != indices.len() {
            return Err(LocatorError::Contract(format!(
                "{} points but {} indices",
                points.len(),
                indices.len()
            )));
        }
        Self::from_boxes(
            points
                .iter()
                .zip(indices)
                .map(|(p, &i)| (Aabb::from_point(*p), i))
                .collect(),
            leaf_capacity,
        )
    }

    /// Bulk loads a tree over arbitrary boxes (e.g. cell bounding boxes).
    pub fn from_boxes(boxes: Vec<(Aabb, usize)>, leaf_capacity: usize) -> Result<Self> {
        if boxes.is_empty() {
            return Err(LocatorError::Contract("cannot index an empty set".into()));
        }
        if leaf_capacity < 2 {
            return Err(LocatorError::Contract(format!(
                "leaf capacity must be >= 2, got {leaf_capacity}"
            )));
        }
        if let Some((b, i)) = boxes.iter().find(|(b, _)| !b.min.is_finite() || !b.max.is_finite()) {
            return Err(LocatorError::Contract(format!(
                "item {i} has a non-finite bounding box {:?}",
                b
            )));
        }
        let mut entries: Vec<Entry> = boxes
            .into_iter()
            .map(|(bbox, index)| Entry { bbox, index })
            .collect();
        str_order(&mut entries, leaf_capacity, |e| (e.bbox.center(), e.index));

        let pack = |range_len: usize, bbox_of: &dyn Fn(usize) -> Aabb| -> Vec<Node> {
            (0..range_len)
                .step_by(leaf_capacity)
                .map(|start| {
                    let end = (start + leaf_capacity).min(range_len);
                    let bbox = (start..end).fold(Aabb::EMPTY, |acc, i| acc.union(&bbox_of(i)));
                    Node { bbox, start, end }
                })
                .collect()
        };

        let mut levels = vec![pack(entries.len(), &|i| entries[i].bbox)];
        while levels.last().map_or(0, Vec::len) > 1 {
            let mut children = levels.pop().unwrap();
            let mut order: Vec<usize> = (0..children.len()).collect();
            str_order(&mut order, leaf_capacity, |&i| (children[i].bbox.center(), i));
            children = order.iter().map(|&i| children[i]).collect();
            let parents = pack(children.len(), &|i| children[i].bbox);
            levels.push(children);
            levels.push(parents);
        }
        // Lay the entries out in final leaf order for locality.
        let leaves = &levels[0];
        let mut reordered = Vec::with_capacity(entries.len());
        let mut new_leaves = Vec::with_capacity(leaves.len());
        for leaf in leaves {
            let start = reordered.len();
            reordered.extend_from_slice(&entries[leaf.start..leaf.end]);
            new_leaves.push(Node {
                bbox: leaf.bbox,
                start,
                end: reordered.len(),
            });
        }
        levels[0] = new_leaves;
        Ok(RTreeIndex {
            leaf_capacity,
            entries: reordered,
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    /// Number of levels, leaves included.
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.levels[0].len()
    }

    pub fn root_bbox(&self) -> Aabb {
        self.levels.last().unwrap()[0].bbox
    }

    /// Checks the structural invariants: every child box lies inside its
    /// parent box and every entry appears in exactly one leaf. Returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen = vec![0usize; self.entries.len()];
        for (l, level) in self.levels.iter().enumerate() {
            for (n, node) in level.iter().enumerate() {
                for c in node.start..node.end {
                    let child = if l == 0 {
                        seen[c] += 1;
                        self.entries[c].bbox
                    } else {
                        self.levels[l - 1][c].bbox
                    };
                    if !node.bbox.contains_box(&child) {
                        return Err(format!("level {l} node {n}: child {c} escapes its box"));
                    }
                }
                if l > 0 && node.end > self.levels[l - 1].len() {
                    return Err(format!("level {l} node {n}: child range out of bounds"));
                }
            }
        }
        if let Some(e) = seen.iter().position(|&s| s != 1) {
            return Err(format!("entry {e} appears in {} leaves", seen[e]));
        }
        Ok(())
    }

    fn search(&self, level: usize, node: &Node, q: &Point, best: &mut Best, filter: &dyn Fn(usize) -> bool) {
        if level == 0 {
            for e in &self.entries[node.start..node.end] {
                let d2 = e.bbox.distance_squared(q);
                if best.improves(d2, e.index) && filter(e.index) {
                    *best = Best {
                        dist2: d2,
                        index: e.index,
                    };
                }
            }
            return;
        }
        let children = &self.levels[level - 1];
        let mut order: SmallVec<[(f64, usize); 32]> = (node.start..node.end)
            .map(|c| (children[c].bbox.distance_squared(q), c))
            .collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        for (d2, c) in order {
            // Equal distances must still be visited: a tie may carry a smaller index.
            if d2 > best.dist2 {
                break;
            }
            self.search(level - 1, &children[c], q, best, filter);
        }
    }

    fn nearest_from(&self, q: &Point, best: Best, filter: &dyn Fn(usize) -> bool) -> Best {
        let mut best = best;
        let top = self.levels.len() - 1;
        self.search(top, &self.levels[top][0], q, &mut best, filter);
        best
    }

    /// Closest indexed item to `q`; ties go to the smallest global index.
    pub fn nearest(&self, q: &Point) -> NearestHit {
        self.nearest_from(q, Best::NONE, &|_| true)
            .hit(0)
            .expect("tree is never empty")
    }

    /// Closest item whose global index satisfies `keep`.
    pub fn nearest_where(&self, q: &Point, keep: impl Fn(usize) -> bool) -> Option<NearestHit> {
        self.nearest_from(q, Best::NONE, &keep).hit(0)
    }

    /// Items at squared distance strictly below `radius^2`, as
    /// `(global index, squared distance)` sorted by index.
    pub fn within_radius(&self, q: &Point, radius: f64) -> Vec<(usize, f64)> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut stack: Vec<(usize, usize)> = vec![(self.levels.len() - 1, 0)];
        while let Some((level, n)) = stack.pop() {
            let node = &self.levels[level][n];
            if node.bbox.distance_squared(q) >= r2 {
                continue;
            }
            if level == 0 {
                for e in &self.entries[node.start..node.end] {
                    let d2 = e.bbox.distance_squared(q);
                    if d2 < r2 {
                        out.push((e.index, d2));
                    }
                }
            } else {
                stack.extend((node.start..node.end).map(|c| (level - 1, c)));
            }
        }
        out.sort_unstable_by_key(|e| e.0);
        out
    }

    /// Global indices of boxes containing `q` (boxes enlarged by `eps`),
    /// sorted increasingly.
    pub fn containing(&self, q: &Point, eps: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, usize)> = vec![(self.levels.len() - 1, 0)];
        while let Some((level, n)) = stack.pop() {
            let node = &self.levels[level][n];
            if !node.bbox.contains_point(q, eps) {
                continue;
            }
            if level == 0 {
                out.extend(
                    self.entries[node.start..node.end]
                        .iter()
                        .filter(|e| e.bbox.contains_point(q, eps))
                        .map(|e| e.index),
                );
            } else {
                stack.extend((node.start..node.end).map(|c| (level - 1, c)));
            }
        }
        out.sort_unstable();
        out
    }
}

/// Builds an R-tree over `points` (global indices are positions).
pub fn build_rtree(points: &[Point], leaf_capacity: usize) -> Result<RTreeIndex> {
    RTreeIndex::build(points, leaf_capacity)
}

/// Exhaustive nearest-neighbour search with the same tie rule as the tree.
pub fn nearest_linear(points: &[Point], q: &Point) -> Result<NearestHit> {
    let mut best = Best::NONE;
    for (i, p) in points.iter().enumerate() {
        let d2 = Aabb::from_point(*p).distance_squared(q);
        if best.improves(d2, i) {
            best = Best { dist2: d2, index: i };
        }
    }
    best.hit(0)
        .ok_or_else(|| LocatorError::Contract("cannot search an empty point set".into()))
}

/// Nearest-neighbour search restricted to vertices on tagged boundary faces.
#[derive(Clone, Debug)]
pub struct BoundaryLocator {
    tree: RTreeIndex,
    vertices: Vec<usize>,
}

impl BoundaryLocator {
    pub fn new(mesh: &Mesh, tags: &[Tag]) -> Result<Self> {
        let vertices = mesh.boundary_vertices(tags);
        if vertices.is_empty() {
            return Err(LocatorError::EmptySelection { tags: tags.to_vec() });
        }
        Self::from_vertices(mesh, vertices)
    }

    /// Locator over an explicit subset of mesh vertices.
    pub fn from_vertices(mesh: &Mesh, vertices: Vec<usize>) -> Result<Self> {
        let points: Vec<Point> = vertices.iter().map(|&v| mesh.vertex(v)).collect();
        let tree = RTreeIndex::build_indexed(&points, &vertices, DEFAULT_LEAF_CAPACITY)?;
        Ok(BoundaryLocator { tree, vertices })
    }

    /// Candidate mesh vertex indices, sorted.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Closest candidate vertex; the hit index is a mesh vertex index.
    pub fn locate(&self, q: &Point) -> NearestHit {
        self.tree.nearest(q)
    }
}

/// One-shot boundary-restricted search.
pub fn locate_boundary(mesh: &Mesh, tags: &[Tag], q: &Point) -> Result<NearestHit> {
    Ok(BoundaryLocator::new(mesh, tags)?.locate(q))
}

/// Points owned by one logical process; global indices are
/// `offset..offset + points.len()`.
#[derive(Clone, Debug)]
pub struct Partition {
    pub owner: usize,
    pub points: Vec<Point>,
    pub offset: usize,
}

/// A global point set split among owners.
#[derive(Clone, Debug)]
pub struct PartitionedPoints {
    parts: Vec<Partition>,
}

impl PartitionedPoints {
    /// Validates that owners are unique and the index ranges are a disjoint
    /// cover of `0..N`.
    pub fn new(mut parts: Vec<Partition>) -> Result<Self> {
        let mut owners: Vec<usize> = parts.iter().map(|p| p.owner).collect();
        owners.sort_unstable();
        if owners.windows(2).any(|w| w[0] == w[1]) {
            return Err(LocatorError::Contract("duplicate owner id".into()));
        }
        parts.sort_by_key(|p| p.offset);
        let mut next = 0;
        for p in &parts {
            if p.offset != next {
                return Err(LocatorError::Contract(format!(
                    "owner {} starts at global index {}, expected {next}",
                    p.owner, p.offset
                )));
            }
            next += p.points.len();
        }
        if next == 0 {
            return Err(LocatorError::Contract("no points in any partition".into()));
        }
        Ok(PartitionedPoints { parts })
    }

    /// Splits `points` into `owners` contiguous blocks of nearly equal size.
    pub fn split_even(points: &[Point], owners: usize) -> Result<Self> {
        if owners == 0 {
            return Err(LocatorError::Contract("need at least one owner".into()));
        }
        let n = points.len();
        let parts = (0..owners)
            .map(|o| {
                let start = o * n / owners;
                let end = (o + 1) * n / owners;
                Partition {
                    owner: o,
                    points: points[start..end].to_vec(),
                    offset: start,
                }
            })
            .collect();
        Self::new(parts)
    }

    /// Splits `points` at the given interior cut positions.
    pub fn split_at(points: &[Point], cuts: &[usize]) -> Result<Self> {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(points.len());
        if bounds.windows(2).any(|w| w[0] > w[1]) {
            return Err(LocatorError::Contract("cuts must be sorted and within range".into()));
        }
        let parts = bounds
            .windows(2)
            .enumerate()
            .map(|(o, w)| Partition {
                owner: o,
                points: points[w[0]..w[1]].to_vec(),
                offset: w[0],
            })
            .collect();
        Self::new(parts)
    }

    pub fn parts(&self) -> &[Partition] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-owner R-trees answering queries against the union of all partitions.
#[derive(Debug)]
pub struct PartitionedLocator {
    owners: Vec<usize>,
    /// `None` for owners without points.
    trees: Vec<Option<RTreeIndex>>,
}

impl PartitionedLocator {
    pub fn new(points: &PartitionedPoints, leaf_capacity: usize) -> Result<Self> {
        let trees = points
            .parts
            .par_iter()
            .map(|p| {
                if p.points.is_empty() {
                    return Ok(None);
                }
                let indices: Vec<usize> = (p.offset..p.offset + p.points.len()).collect();
                RTreeIndex::build_indexed(&p.points, &indices, leaf_capacity).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PartitionedLocator {
            owners: points.parts.iter().map(|p| p.owner).collect(),
            trees,
        })
    }

    /// Gathers the best candidate of every owner and keeps the minimum by
    /// (distance, index). Each owner search is pruned by the best so far.
    pub fn locate(&self, q: &Point) -> NearestHit {
        let mut best = Best::NONE;
        let mut owner = 0;
        for (o, tree) in self.owners.iter().zip(&self.trees) {
            if let Some(tree) = tree {
                let candidate = tree.nearest_from(q, best, &|_| true);
                if candidate.index != best.index {
                    best = candidate;
                    owner = *o;
                }
            }
        }
        best.hit(owner).expect("partitioned set is never empty")
    }

    /// Answers every owner's query batch against the global point set.
    pub fn multipoint_locate(&self, queries: &[(usize, Vec<Point>)]) -> Result<Vec<Vec<NearestHit>>> {
        if let Some((o, _)) = queries.iter().find(|(o, _)| !self.owners.contains(o)) {
            return Err(LocatorError::Contract(format!("unknown owner id {o}")));
        }
        Ok(queries
            .par_iter()
            .map(|(_, pts)| pts.iter().map(|q| self.locate(q)).collect())
            .collect())
    }
}

/// Convenience wrapper building the per-owner trees and answering `queries`.
pub fn multipoint_locate(
    owned: &PartitionedPoints,
    queries: &[(usize, Vec<Point>)],
) -> Result<Vec<Vec<NearestHit>>> {
    PartitionedLocator::new(owned, DEFAULT_LEAF_CAPACITY)?.multipoint_locate(queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshio::generate_structured;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point::new(rng.gen(), rng.gen(), rng.gen()))
            .collect()
    }

    #[test]
    fn single_point_tree() {
        let p = Point::new(0.3, 0.4, 0.5);
        let t = build_rtree(&[p], 16).unwrap();
        assert_eq!(t.height(), 1);
        assert_eq!(t.root_bbox(), Aabb::from_point(p));
        let hit = t.nearest(&Point::ORIGIN);
        assert_eq!(hit.index, 0);
        assert_eq!(hit.distance, p.distance(&Point::ORIGIN));
    }

    #[test]
    fn seventeen_points_make_two_leaves() {
        let t = build_rtree(&random_points(17, 1), 16).unwrap();
        assert_eq!(t.num_leaves(), 2);
        assert_eq!(t.height(), 2);
    }

    #[test]
    fn containment_invariant_on_random_cloud() {
        for cap in [2, 3, 16] {
            let t = build_rtree(&random_points(1000, 2), cap).unwrap();
            t.check_invariants().unwrap();
            let bound = (1000f64).log(cap as f64).ceil() as usize + 1;
            assert!(t.height() <= bound, "height {} > {bound}", t.height());
        }
    }

    #[test]
    fn empty_and_bad_capacity_rejected() {
        assert!(build_rtree(&[], 16).is_err());
        assert!(build_rtree(&[Point::ORIGIN], 1).is_err());
        assert!(nearest_linear(&[], &Point::ORIGIN).is_err());
    }

    #[test]
    fn two_point_example() {
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)];
        let q = Point::new(0.2, 0.0, 0.0);
        let t = build_rtree(&pts, 2).unwrap();
        let hit = t.nearest(&q);
        assert_eq!(hit.index, 0);
        assert_eq!(hit.distance, 0.2);
        assert_eq!(nearest_linear(&pts, &q).unwrap(), hit);
        assert_eq!(t.nearest(&pts[1]).distance, 0.0);
    }

    #[test]
    fn tie_goes_to_smaller_index() {
        let pts = [Point::new(1.0, 0.0, 0.0), Point::new(-1.0, 0.0, 0.0)];
        assert_eq!(nearest_linear(&pts, &Point::ORIGIN).unwrap().index, 0);
        let rev = [pts[1], pts[0]];
        assert_eq!(nearest_linear(&rev, &Point::ORIGIN).unwrap().index, 0);
        // Many coincident points: the tree must still report the smallest index.
        let same = vec![Point::new(0.5, 0.5, 0.5); 100];
        let t = build_rtree(&same, 4).unwrap();
        assert_eq!(t.nearest(&Point::ORIGIN).index, 0);
    }

    #[test]
    fn tree_matches_linear_scan() {
        let pts = random_points(1000, 3);
        let t = build_rtree(&pts, 16).unwrap();
        for q in random_points(100, 4) {
            assert_eq!(t.nearest(&q), nearest_linear(&pts, &q).unwrap());
        }
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let pts = random_points(500, 5);
        let t = build_rtree(&pts, 8).unwrap();
        for q in random_points(20, 6) {
            let got = t.within_radius(&q, 0.2);
            let want: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance_squared(&q)))
                .filter(|&(_, d2)| d2 < 0.04)
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn filtered_nearest_skips_self() {
        let pts = random_points(200, 7);
        let t = build_rtree(&pts, 16).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let hit = t.nearest_where(p, |j| j != i).unwrap();
            let want = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, o)| (o.distance_squared(p), j))
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .unwrap();
            assert_eq!(hit.index, want.1);
        }
    }

    #[test]
    fn boundary_locator_examples() {
        let m = generate_structured(3, 3, 4, &Aabb::unit_cube()).unwrap();
        let hit = locate_boundary(&m, &[2], &Point::new(2.0, 0.5, 0.5)).unwrap();
        assert_eq!(m.vertex(hit.index).x(), 1.0);
        assert_eq!(hit.distance, 1.0);
        let v = m.boundary_vertices(&[2])[3];
        let hit = locate_boundary(&m, &[2], &m.vertex(v)).unwrap();
        assert_eq!((hit.index, hit.distance), (v, 0.0));
        assert_eq!(
            locate_boundary(&m, &[99], &Point::ORIGIN).unwrap_err(),
            LocatorError::EmptySelection { tags: vec![99] }
        );
    }

    #[test]
    fn boundary_locator_matches_subset_scan() {
        let m = generate_structured(3, 3, 5, &Aabb::unit_cube()).unwrap();
        let loc = BoundaryLocator::new(&m, &[1, 4]).unwrap();
        let subset = loc.vertices().to_vec();
        let subset_pts: Vec<Point> = subset.iter().map(|&v| m.vertex(v)).collect();
        for q in random_points(100, 8) {
            let q = q * 1.4 - Point::new(0.2, 0.2, 0.2);
            let lin = nearest_linear(&subset_pts, &q).unwrap();
            let hit = loc.locate(&q);
            assert_eq!(hit.index, subset[lin.index]);
            assert_eq!(hit.distance, lin.distance);
        }
    }

    #[test]
    fn cross_partition_hit() {
        let owned = PartitionedPoints::split_at(
            &[Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0)],
            &[1],
        )
        .unwrap();
        let hits = multipoint_locate(&owned, &[(0, vec![Point::new(0.9, 0.0, 0.0)])]).unwrap();
        assert_eq!(hits[0][0].index, 1);
        assert_eq!(hits[0][0].owner, 1);
    }

    #[test]
    fn single_partition_equals_nearest() {
        let pts = random_points(300, 9);
        let qs = random_points(50, 10);
        let owned = PartitionedPoints::split_even(&pts, 1).unwrap();
        let hits = multipoint_locate(&owned, &[(0, qs.clone())]).unwrap();
        let t = build_rtree(&pts, DEFAULT_LEAF_CAPACITY).unwrap();
        for (q, h) in qs.iter().zip(&hits[0]) {
            assert_eq!(*h, t.nearest(q));
        }
    }

    #[test]
    fn unknown_owner_rejected() {
        let owned = PartitionedPoints::split_even(&random_points(10, 11), 2).unwrap();
        assert!(matches!(
            multipoint_locate(&owned, &[(5, vec![Point::ORIGIN])]),
            Err(LocatorError::Contract(_))
        ));
    }

    #[test]
    fn partition_validation() {
        let p = [Point::ORIGIN; 4];
        let bad = PartitionedPoints::new(vec![
            Partition { owner: 0, points: p[..2].to_vec(), offset: 0 },
            Partition { owner: 1, points: p[..2].to_vec(), offset: 1 },
        ]);
        assert!(bad.is_err());
        let dup = PartitionedPoints::new(vec![
            Partition { owner: 0, points: p[..2].to_vec(), offset: 0 },
            Partition { owner: 0, points: p[..2].to_vec(), offset: 2 },
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn partitioned_with_empty_owner() {
        let pts = random_points(100, 12);
        let owned = PartitionedPoints::split_at(&pts, &[0, 40, 40]).unwrap();
        let loc = PartitionedLocator::new(&owned, 4).unwrap();
        for q in random_points(30, 13) {
            let hit = loc.locate(&q);
            let lin = nearest_linear(&pts, &q).unwrap();
            assert_eq!((hit.index, hit.distance), (lin.index, lin.distance));
            let expected_owner = if lin.index < 40 { 1 } else { 3 };
            assert_eq!(hit.owner, expected_owner);
        }
    }

    #[test]
    fn cells_containing_point() {
        let m = generate_structured(2, 2, 2, &Aabb::unit_cube()).unwrap();
        let boxes = (0..m.num_cells())
            .map(|c| (Aabb::from_points(&m.cell_points(c)), c))
            .collect();
        let t = RTreeIndex::from_boxes(boxes, 2).unwrap();
        t.check_invariants().unwrap();
        let q = Point::new(0.2, 0.1, 0.0);
        assert_eq!(t.containing(&q, 0.0), vec![0, 1]);
        assert!(t.containing(&Point::new(3.0, 0.0, 0.0), 1e-12).is_empty());
    }
}
