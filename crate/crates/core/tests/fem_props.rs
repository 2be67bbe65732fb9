mod common;

use intergrid::fem::{assemble_stiffness, solve_laplace, DirichletBC};
use intergrid::meshio::Mesh;
use intergrid::Point;
use proptest::prelude::*;

fn surface(seed: u64, n: usize) -> Mesh {
    let cube = common::jittered(3, n, 0.15, &mut common::rng(seed));
    cube.extract_boundary(&cube.boundary_tags()).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums(seed in any::<u64>(), topo in 1usize..=3, n in 1usize..=6) {
        let mut rng = common::rng(seed);
        for mesh in [common::jittered(topo, n, 0.15, &mut rng), surface(seed, n)] {
            let k = assemble_stiffness(&mesh).unwrap();
            prop_assert!(k.max_asymmetry() <= 1e-14);
            let scale = k.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
            for s in k.row_sums() {
                prop_assert!(s.abs() <= 1e-12 * scale.max(1.0));
            }
            prop_assert!(k.diagonal().iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn affine_data_is_reproduced(
        seed in any::<u64>(),
        topo in 1usize..=3,
        n in 2usize..=6,
        coef in [-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0],
    ) {
        let mesh = common::jittered(topo, n, 0.15, &mut common::rng(seed));
        let u = |p: &Point| coef[0] * p.x() + coef[1] * p.y() + coef[2] * p.z() + coef[3];
        let bc = DirichletBC::from_fn(&mesh, &mesh.all_boundary_vertices(), u).unwrap();
        let sol = solve_laplace(&mesh, &bc).unwrap();
        for (v, p) in mesh.vertices().iter().enumerate() {
            prop_assert!((sol.values()[v] - u(p)).abs() <= 1e-10);
        }
    }

    #[test]
    fn surface_stiffness_is_isometry_invariant(
        seed in any::<u64>(),
        n in 1usize..=5,
        shift in [-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0],
    ) {
        let mesh = surface(seed, n);
        let r = common::random_rotation(&mut common::rng(seed ^ 9));
        let shift = Point(shift);
        let moved = Mesh::new(
            2,
            3,
            mesh.vertices().iter().map(|p| common::apply(&r, p, &shift)).collect(),
            mesh.connectivity().to_vec(),
        )
        .unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let km = assemble_stiffness(&moved).unwrap();
        prop_assert_eq!(k.nnz(), km.nnz());
        for i in 0..mesh.num_vertices() {
            for (j, v) in k.row(i) {
                prop_assert!((v - km.get(i, j)).abs() <= 1e-12);
            }
        }
    }
}
