use dstq::decomp::{
    balanced_partition, build_decomposition_tree, decomposition_to_steiner, depth_bound, validate_decomposition,
    DecompositionTree, RootedTree,
};
use dstq::gen::{random_dst, random_parents};
use dstq::graph::{metric_closure, validate_solution};
use dstq::oracle::{canonical_optimum_tree, exact_opt};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_covers_every_edge_once(seed in any::<u64>(), n in 3usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = RootedTree::from_parents(&random_parents(&mut rng, n)).unwrap();
        let (t1, t2, v) = balanced_partition(&t).unwrap();
        prop_assert_eq!(t1.size() + t2.size(), n + 1);
        prop_assert!(t1.contains(v) && t2.root() == v);
        prop_assert!(3 * t1.size().max(t2.size()) < 2 * n + 3);
    }

    #[test]
    fn optimum_decomposes_and_recomposes(seed in any::<u64>(), n in 3usize..7, k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_dst(&mut rng, n, 2 * n, k.min(n - 1), 5);
        let (inst, _) = metric_closure(&raw).unwrap();
        let opt = exact_opt(&inst).unwrap().opt;
        let tree = canonical_optimum_tree(&inst).unwrap();
        let rooted = RootedTree::from_solution(&inst, &tree).unwrap();
        prop_assume!(rooted.size() >= 2);
        let tau = build_decomposition_tree(&rooted, &inst).unwrap();
        prop_assert!(validate_decomposition(&tau, &inst).is_ok());
        prop_assert!(tau.is_binary());
        prop_assert!(tau.height() <= depth_bound(2 * inst.k()));
        prop_assert_eq!(&tau.cost(), &opt);
        let text = tau.to_text();
        prop_assert_eq!(DecompositionTree::parse(&text).unwrap().to_text(), text);
        let back = decomposition_to_steiner(&tau, &inst).unwrap();
        prop_assert_eq!(validate_solution(&inst, &back).unwrap(), opt);
    }
}
