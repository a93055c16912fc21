mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use ascbs::constraints::ConstraintSet;
use ascbs::grid::Vertex;
use ascbs::instance::Instance;
use ascbs::low_level::{astar, LowLevelStats, LowLevelTask, NoConflicts};
use ascbs::mdd::build_mdd;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    /// Layers equal the per-step vertex sets of all enumerated optimal paths.
    #[test]
    fn layers_match_enumeration(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let map = Arc::new(common::random_map(&mut r, 4, 0.15));
        let c = r.gen_range(1..=3u32);
        let start = common::random_cell(&mut r, &map);
        let goal = common::random_cell(&mut r, &map);
        let inst = Instance::uniform(Arc::clone(&map), c, vec![(start, goal, 0)]).unwrap();
        let mut cs = ConstraintSet::new();
        for con in common::random_constraints(&mut r, &map, c, 3) {
            cs.insert(con);
        }
        let dist = map.distance_field(goal);
        let task = LowLevelTask::for_stream(&inst, 0, cs.for_stream(0), &dist);
        let Ok(path) = astar(&task, &NoConflicts, &mut LowLevelStats::default()) else {
            return Ok(());
        };
        prop_assume!(path.len() <= 8);
        let mdd = build_mdd(&map, start, goal, cs.for_stream(0), path.len());
        let paths = common::enumerate_paths(&map, start, goal, cs.for_stream(0), path.len());
        prop_assert!(!paths.is_empty());
        for q in 0..path.len() {
            let expected: BTreeSet<Vertex> = paths.iter().map(|p| p[q]).collect();
            let got: BTreeSet<Vertex> = mdd.layers()[q].iter().copied().collect();
            prop_assert_eq!(got, expected);
            prop_assert!(mdd.contains(q, path.at(q)));
        }
        for q in 0..path.len() - 1 {
            let expected: BTreeSet<(Vertex, Vertex)> = paths.iter().map(|p| (p[q], p[q + 1])).collect();
            let got: BTreeSet<(Vertex, Vertex)> = mdd.edges(q).iter().copied().collect();
            prop_assert_eq!(got, expected);
        }
    }
}
