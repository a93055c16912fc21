mod common;

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::sync::Arc;

use ascbs::baseline::{cbs_solve, compare, relative_error, timed_conflicts, unroll, UnrolledAgent};
use ascbs::grid::{GridMap, Vertex};
use ascbs::high_level::{solve, Outcome, SolverConfig, Variant};
use ascbs::instance::Instance;
use proptest::prelude::*;
use rand::Rng;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Slot {
    Pending,
    At(Vertex),
    Done,
}

/// Optimal sum of costs by Dijkstra over joint states. An agent appears at
/// its start at its start time and may vanish whenever it stands on its goal.
fn joint_optimum(agents: &[UnrolledAgent], map: &GridMap, max_t: u64) -> Option<u64> {
    fn spawn(agents: &[UnrolledAgent], slots: &mut [Slot], t: u64) -> bool {
        for (a, s) in agents.iter().zip(slots.iter_mut()) {
            if *s == Slot::Pending && a.start_time == t {
                *s = Slot::At(a.start);
            }
        }
        let mut seen = Vec::new();
        for s in slots.iter() {
            if let Slot::At(v) = s {
                if seen.contains(v) {
                    return false;
                }
                seen.push(*v);
            }
        }
        true
    }

    let n = agents.len();
    let mut init = vec![Slot::Pending; n];
    if !spawn(agents, &mut init, 0) {
        return None;
    }
    let mut best: BTreeMap<(u64, Vec<Slot>), u64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, 0u64, init)));
    while let Some(Reverse((cost, t, slots))) = heap.pop() {
        if slots.iter().all(|s| *s == Slot::Done) {
            return Some(cost);
        }
        if t >= max_t || best.get(&(t, slots.clone())).is_some_and(|&c| c < cost) {
            continue;
        }
        // Every agent picks wait, a move, or vanishing at its goal.
        let mut options: Vec<Vec<Slot>> = Vec::new();
        for (a, s) in agents.iter().zip(&slots) {
            options.push(match *s {
                Slot::At(v) => {
                    let mut o: Vec<Slot> = map.neighbors(v).chain([v]).map(Slot::At).collect();
                    if v == a.goal {
                        o.push(Slot::Done);
                    }
                    o
                }
                other => vec![other],
            });
        }
        let mut idx = vec![0usize; n];
        loop {
            let mut next: Vec<Slot> = (0..n).map(|a| options[a][idx[a]]).collect();
            let swaps = (0..n).any(|a| {
                (0..n).any(|b| {
                    a != b
                        && matches!((slots[a], next[a], slots[b], next[b]),
                            (Slot::At(x), Slot::At(y), Slot::At(u), Slot::At(w)) if x != y && x == w && y == u)
                })
            });
            let moved = next.iter().filter(|s| matches!(s, Slot::At(_))).count() as u64;
            if !swaps && spawn(agents, &mut next, t + 1) {
                let c = cost + moved;
                let key = (t + 1, next.clone());
                if best.get(&key).is_none_or(|&b| c < b) {
                    best.insert(key, c);
                    heap.push(Reverse((c, t + 1, next)));
                }
            }
            let mut a = 0;
            while a < n {
                idx[a] += 1;
                if idx[a] < options[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == n {
                break;
            }
        }
    }
    None
}

fn agent(stream: usize, start: Vertex, goal: Vertex, start_time: u64) -> UnrolledAgent {
    UnrolledAgent { stream, k: 0, start, goal, start_time }
}

#[test]
fn head_on_in_a_corridor_with_a_bay() {
    let map = GridMap::parse("type octile\nheight 2\nwidth 4\nmap\n....\n.@@@\n").unwrap();
    let agents = [
        agent(0, Vertex::new(0, 0), Vertex::new(0, 3), 0),
        agent(1, Vertex::new(0, 3), Vertex::new(0, 1), 0),
    ];
    let report = cbs_solve(&agents, &map, None);
    assert_eq!(report.outcome, Outcome::Solved);
    let soc = report.soc.unwrap();
    assert!(soc > 3 + 2);
    assert_eq!(Some(soc), joint_optimum(&agents, &map, 16));
    assert!(timed_conflicts(&agents, report.paths.as_ref().unwrap()).is_empty());
}

#[test]
fn lone_and_separated_agents_take_shortest_paths() {
    let map = GridMap::open(4, 3);
    let one = [agent(0, Vertex::new(0, 0), Vertex::new(2, 3), 0)];
    assert_eq!(cbs_solve(&one, &map, None).soc, Some(5));
    let two = [
        agent(0, Vertex::new(0, 0), Vertex::new(0, 3), 0),
        agent(1, Vertex::new(2, 0), Vertex::new(2, 3), 1),
    ];
    assert_eq!(cbs_solve(&two, &map, None).soc, Some(6));
}

#[test]
fn unroll_counts() {
    let map = Arc::new(GridMap::open(3, 3));
    let inst = Instance::uniform(
        map,
        3,
        vec![(Vertex::new(0, 0), Vertex::new(2, 2), 1), (Vertex::new(2, 0), Vertex::new(0, 2), 2)],
    )
    .unwrap();
    assert!(unroll(&inst, 0).is_empty());
    let at7 = unroll(&inst, 7);
    assert_eq!(at7.iter().filter(|a| a.stream == 0).map(|a| a.k).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(at7.iter().filter(|a| a.stream == 1).count(), 2);
    assert_eq!(at7.iter().map(|a| a.start_time).collect::<Vec<_>>(), vec![1, 4, 7, 2, 5]);
    assert_eq!(unroll(&inst, 2).len(), 2);
}

#[test]
fn non_interacting_streams_have_zero_error() {
    let map = Arc::new(GridMap::open(5, 5));
    let inst = Instance::uniform(
        map,
        3,
        vec![(Vertex::new(0, 0), Vertex::new(0, 4), 0), (Vertex::new(4, 0), Vertex::new(4, 4), 1)],
    )
    .unwrap();
    let report = solve(&inst, &SolverConfig::new(Variant::AstarNonDisjoint)).unwrap();
    for h in [3, 9, 18] {
        let rec = compare(&inst, &report, h, None).unwrap();
        assert_eq!(rec.relative_error, Some(0.0));
        assert_eq!(rec.cbs_soc, Some(rec.ascbs_unrolled_soc));
    }
    assert_eq!(relative_error(12, 10), 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn cbs_matches_joint_search(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let map = common::random_map(&mut r, 4, 0.2);
        prop_assume!(map.width() * map.height() <= 12);
        let n = r.gen_range(1..=3);
        let agents: Vec<UnrolledAgent> = (0..n)
            .map(|s| agent(s, common::random_cell(&mut r, &map), common::random_cell(&mut r, &map), r.gen_range(0..3)))
            .filter(|a| map.distance_field(a.goal).get(a.start).is_some())
            .collect();
        let report = cbs_solve(&agents, &map, Some(std::time::Duration::from_secs(5)));
        prop_assume!(report.outcome != Outcome::Timeout);
        let oracle = joint_optimum(&agents, &map, 14);
        prop_assert_eq!(report.soc, oracle);
        if let Some(paths) = &report.paths {
            prop_assert!(timed_conflicts(&agents, paths).is_empty());
        }
    }
}
