#![allow(dead_code)]

use intergrid::meshio::{generate_structured, Mesh};
use intergrid::{Aabb, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    (0..n).map(|_| Point::new(rng.gen(), rng.gen(), rng.gen())).collect()
}

/// Structured mesh on the unit cube with vertices moved by up to
/// `jitter * h` along each used axis.
pub fn jittered(topo: usize, n: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Mesh {
    let m = generate_structured(topo, topo, n, &Aabb::unit_cube()).unwrap();
    let h = 1.0 / n as f64;
    let verts = m
        .vertices()
        .iter()
        .map(|p| {
            let mut q = *p;
            for a in 0..topo {
                q.0[a] += rng.gen_range(-jitter..=jitter) * h;
            }
            q
        })
        .collect();
    Mesh::new(topo, topo, verts, m.connectivity().to_vec()).unwrap()
}

/// Random 2D mesh with up to 200 vertices: a jittered grid with a random
/// subset of its cells, so it may be disconnected.
pub fn random_planar_mesh(rng: &mut ChaCha8Rng) -> Mesh {
    let n = rng.gen_range(1..=13);
    let full = jittered(2, n, 0.2, rng);
    let keep: f64 = rng.gen_range(0.5..=1.0);
    let mut cells: Vec<usize> = full
        .cells()
        .filter(|_| rng.gen_bool(keep))
        .flatten()
        .copied()
        .collect();
    if cells.is_empty() {
        cells = full.cell(0).to_vec();
    }
    Mesh::new(2, 2, full.vertices().to_vec(), cells).unwrap()
}

/// Rotation matrix of a random unit quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.iter_mut().for_each(|x| *x /= n);
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn apply(r: &[[f64; 3]; 3], p: &Point, shift: &Point) -> Point {
    Point(std::array::from_fn(|i| {
        r[i][0] * p.0[0] + r[i][1] * p.0[1] + r[i][2] * p.0[2] + shift.0[i]
    }))
}

/// All-pairs shortest paths by Floyd-Warshall over the mesh edges.
pub fn floyd_warshall(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.num_vertices();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for cell in mesh.cells() {
        for (a, &u) in cell.iter().enumerate() {
            for &v in &cell[a + 1..] {
                let w = mesh.vertex(u).distance(&mesh.vertex(v));
                d[u][v] = d[u][v].min(w);
                d[v][u] = d[v][u].min(w);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}
