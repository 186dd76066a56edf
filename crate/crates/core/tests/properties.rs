mod common;

use std::collections::BTreeMap;

use d2sim::verifier::{greedy_reference_coloring, tdma_replay};
use d2sim::{
    generate_random_connected_graph, generate_random_tree, run, verify_trace, Color, IdentityMode, ProtocolKind,
    Scenario, Topology,
};
use proptest::prelude::*;

use common::*;

fn tree_params() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=300, 2usize..=10, any::<u64>())
}

fn graph_params() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=40, 0usize..=30, any::<u64>())
}

fn small_tree() -> impl Strategy<Value = Topology> {
    (2usize..=200, 2usize..=8, any::<u64>()).prop_map(|(n, cap, seed)| generate_random_tree(n, cap, seed).unwrap())
}

fn per_round_broadcasters(trace: &d2sim::Trace) -> usize {
    let mut rounds: BTreeMap<i64, usize> = BTreeMap::new();
    for (r, ..) in trace.broadcasts() {
        *rounds.entry(r).or_default() += 1;
    }
    rounds.into_values().max().unwrap_or(0)
}

proptest! {
    #[test]
    fn random_trees_honor_cap_and_shape((n, cap, seed) in tree_params()) {
        let t = generate_random_tree(n, cap, seed).unwrap();
        prop_assert_eq!(t.n(), n);
        prop_assert_eq!(t.edges().len(), n - 1);
        prop_assert!(t.processes().all(|q| t.degree(q) <= cap));
        prop_assert!(t.bfs_distances(p(1)).iter().all(Option::is_some));
        prop_assert_eq!(&t, &generate_random_tree(n, cap, seed).unwrap());
    }

    #[test]
    fn topology_files_round_trip((n, extra, seed) in graph_params()) {
        let t = generate_random_connected_graph(n, extra, seed).unwrap();
        prop_assert_eq!(&Topology::from_json(&t.to_json()).unwrap(), &t);
    }

    #[test]
    fn distance_is_symmetric_and_obeys_the_triangle_inequality((n, extra, seed) in graph_params()) {
        let t = generate_random_connected_graph(n, extra, seed).unwrap();
        let d: Vec<Vec<usize>> = t.processes().map(|a| t.processes().map(|b| t.graph_distance(a, b)).collect()).collect();
        for a in 0..n {
            prop_assert_eq!(d[a][a], 0);
            for b in 0..n {
                prop_assert_eq!(d[a][b], d[b][a]);
                for c in 0..n {
                    prop_assert!(d[a][c] <= d[a][b] + d[b][c]);
                }
            }
        }
    }

    #[test]
    fn reused_identities_stay_three_hops_apart((n, extra, seed) in graph_params()) {
        let t = generate_random_connected_graph(n, extra, seed)
            .unwrap()
            .assign_identities(IdentityMode::Distance2Reuse, seed);
        prop_assert!(t.validate_identities().is_ok());
        let ids = t.identities();
        for a in t.processes() {
            for b in t.processes() {
                if a != b && ids[a.slot()] == ids[b.slot()] {
                    prop_assert!(t.graph_distance(a, b) >= 3);
                }
            }
        }
    }

    #[test]
    fn greedy_reference_is_consistent((n, extra, seed) in graph_params()) {
        let t = generate_random_connected_graph(n, extra, seed).unwrap();
        prop_assert!(d2_conflicts(&t, &greedy_reference_coloring(&t)).is_empty());
    }

    /// A coloring is distance-2 consistent exactly when one TDMA frame keyed
    /// by color is clash free.
    #[test]
    fn tdma_frame_is_clash_free_iff_coloring_is_consistent(
        t in small_tree(),
        raw in proptest::collection::vec(0i64..6, 200),
    ) {
        let colors: Vec<Color> = raw[..t.n()].to_vec();
        let delta = t.max_degree();
        prop_assert_eq!(tdma_replay(&t, &colors, delta) == 0, d2_conflicts(&t, &colors).is_empty());
        let good = greedy_reference_coloring(&t);
        prop_assert_eq!(tdma_replay(&t, &good, delta), 0);
        // one forced clash: copy a neighbor's color
        let mut bad = good.clone();
        let q = t.neighbors(p(1))[0];
        bad[0] = good[q.slot()];
        prop_assert!(tdma_replay(&t, &bad, delta) > 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn seq_colors_every_tree_one_broadcaster_at_a_time(t in small_tree(), root in 1usize..=200) {
        let mut s = Scenario::new(ProtocolKind::SeqTree);
        s.root = p((root - 1) % t.n() + 1);
        let out = run(&t, &s).unwrap();
        let colors = complete(&out.colors);
        prop_assert!(d2_conflicts(&t, &colors).is_empty());
        prop_assert_eq!(per_round_broadcasters(&out.trace), 1);
        prop_assert_eq!(tdma_replay(&t, &colors, t.max_degree()), 0);
        prop_assert!(verify_trace(&out.trace).unwrap().consistency);
    }

    #[test]
    fn par_colors_every_tree_within_delta_plus_one(t in small_tree(), root in 1usize..=200, start in 0i64..7) {
        let mut s = Scenario::new(ProtocolKind::ParTree);
        s.root = p((root - 1) % t.n() + 1);
        s.start_round = start;
        s.par.root_always_ends = true;
        let out = run(&t, &s).unwrap();
        let colors = complete(&out.colors);
        let (delta, _) = delta_and_depth(&t, s.root.0);
        prop_assert!(d2_conflicts(&t, &colors).is_empty());
        prop_assert!(colors.iter().all(|&c| (0..=delta as Color).contains(&c)));
        let report = verify_trace(&out.trace).unwrap();
        prop_assert!(report.passed(), "{:?}", report.bound_checks);
    }

    #[test]
    fn arbitrary_colors_every_tree((n, cap, seed) in (2usize..=60, 2usize..=6, any::<u64>())) {
        let t = generate_random_tree(n, cap, seed).unwrap();
        let out = run(&t, &Scenario::new(ProtocolKind::Arbitrary)).unwrap();
        prop_assert!(d2_conflicts(&t, &complete(&out.colors)).is_empty());
    }
}
