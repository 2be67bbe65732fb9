mod common;

use intergrid::locator::{
    multipoint_locate, nearest_linear, PartitionedPoints, RTreeIndex,
};
use intergrid::Point;
use proptest::prelude::*;
use rand::Rng;

fn cloud() -> impl Strategy<Value = Vec<Point>> {
    // Coarse lattice coordinates make exact distance ties common.
    let coord = prop_oneof![0.0f64..1.0, (0u8..8).prop_map(|k| k as f64 / 8.0)];
    prop::collection::vec((coord.clone(), coord.clone(), coord), 1..400)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rtree_matches_linear_scan(points in cloud(), queries in cloud(), cap in 2usize..20) {
        let tree = RTreeIndex::build(&points, cap).unwrap();
        prop_assert!(tree.check_invariants().is_ok());
        for q in &queries {
            let fast = tree.nearest(q);
            let slow = nearest_linear(&points, q).unwrap();
            prop_assert_eq!(fast.index, slow.index);
            prop_assert_eq!(fast.distance.to_bits(), slow.distance.to_bits());
        }
    }

    #[test]
    fn within_radius_matches_brute_force(points in cloud(), q in cloud(), r in 0.0f64..0.6) {
        let tree = RTreeIndex::build(&points, 8).unwrap();
        let q = q[0];
        let got: Vec<usize> = tree.within_radius(&q, r).into_iter().map(|(i, _)| i).collect();
        let want: Vec<usize> = (0..points.len())
            .filter(|&i| points[i].distance_squared(&q) < r * r)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn multipoint_locate_ignores_partitioning(
        points in cloud(),
        queries in cloud(),
        seed in any::<u64>(),
        owners in 1usize..6,
    ) {
        let mut rng = common::rng(seed);
        let n = points.len();
        let mut cuts: Vec<usize> = (1..owners).map(|_| rng.gen_range(0..=n)).collect();
        cuts.sort_unstable();
        let a = PartitionedPoints::split_at(&points, &cuts).unwrap();
        let b = PartitionedPoints::split_even(&points, 4).unwrap();
        let batches: Vec<(usize, Vec<Point>)> = vec![(0, queries.clone())];
        let ra = multipoint_locate(&a, &batches).unwrap();
        let rb = multipoint_locate(&b, &batches).unwrap();
        for ((ha, hb), q) in ra[0].iter().zip(&rb[0]).zip(&queries) {
            let oracle = nearest_linear(&points, q).unwrap();
            prop_assert_eq!(ha.index, oracle.index);
            prop_assert_eq!(hb.index, oracle.index);
            prop_assert_eq!(ha.distance.to_bits(), oracle.distance.to_bits());
            prop_assert_eq!(hb.distance.to_bits(), oracle.distance.to_bits());
        }
    }
}
