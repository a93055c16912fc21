#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use ascbs::constraints::{Constraint, StreamConstraints};
use ascbs::grid::{GridMap, Vertex};
use ascbs::instance::{Instance, Solution, StreamPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random map of at most `max_side` x `max_side` with some walls; at least
/// one passable cell.
pub fn random_map(rng: &mut ChaCha8Rng, max_side: usize, wall_prob: f64) -> GridMap {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let mut cells: Vec<bool> = (0..w * h).map(|_| !rng.gen_bool(wall_prob)).collect();
    if !cells.iter().any(|&c| c) {
        cells[rng.gen_range(0..w * h)] = true;
    }
    GridMap::new(w, h, cells).unwrap()
}

pub fn random_cell(rng: &mut ChaCha8Rng, map: &GridMap) -> Vertex {
    let cells: Vec<Vertex> = map.passable_vertices().collect();
    cells[rng.gen_range(0..cells.len())]
}

/// Random walk of `len` vertices; each step is a wait or a move.
pub fn random_walk(rng: &mut ChaCha8Rng, map: &GridMap, start: Vertex, len: usize) -> Vec<Vertex> {
    let mut p = vec![start];
    while p.len() < len {
        let v = *p.last().unwrap();
        let mut options: Vec<Vertex> = map.neighbors(v).collect();
        options.push(v);
        p.push(options[rng.gen_range(0..options.len())]);
    }
    p
}

/// Uniform instance whose streams start and end where their random walks do.
pub fn random_uniform_case(seed: u64, max_side: usize, max_streams: usize, max_len: usize) -> (Instance, Solution) {
    let mut r = rng(seed);
    let map = Arc::new(random_map(&mut r, max_side, 0.2));
    let c = r.gen_range(1..=4u32);
    let n = r.gen_range(1..=max_streams);
    let mut streams = Vec::new();
    let mut paths = Vec::new();
    for _ in 0..n {
        let start = random_cell(&mut r, &map);
        let len = r.gen_range(1..=max_len);
        let p = random_walk(&mut r, &map, start, len);
        streams.push((start, *p.last().unwrap(), r.gen_range(0..c)));
        paths.push(StreamPath::new(p));
    }
    (Instance::uniform(map, c, streams).unwrap(), Solution::new(paths))
}

/// Non-uniform counterpart with per-stream cycles in `1..=max_cycle`.
pub fn random_nonuniform_case(seed: u64, max_side: usize, max_cycle: u32, max_len: usize) -> (Instance, Solution) {
    let mut r = rng(seed);
    let map = Arc::new(random_map(&mut r, max_side, 0.2));
    let n = r.gen_range(1..=3);
    let mut streams = Vec::new();
    let mut paths = Vec::new();
    for _ in 0..n {
        let c = r.gen_range(1..=max_cycle);
        let start = random_cell(&mut r, &map);
        let len = r.gen_range(1..=max_len);
        let p = random_walk(&mut r, &map, start, len);
        streams.push((start, *p.last().unwrap(), r.gen_range(0..c), c));
        paths.push(StreamPath::new(p));
    }
    (Instance::non_uniform(map, streams).unwrap(), Solution::new(paths))
}

/// Up to `max` random constraints for stream 0 near the cells of `map`.
pub fn random_constraints(rng: &mut ChaCha8Rng, map: &GridMap, cycle: u32, max: usize) -> Vec<Constraint> {
    let count = rng.gen_range(0..=max);
    let mut out = Vec::new();
    for _ in 0..count {
        let v = random_cell(rng, map);
        let step = rng.gen_range(0..8u32);
        let neighbor = map.neighbors(v).next();
        let c = match (rng.gen_range(0..4), neighbor) {
            (0, _) => Constraint::Vertex { stream: 0, v, step },
            (1, Some(w)) => Constraint::Edge {
                stream: 0,
                from: v,
                to: w,
                step,
            },
            (2, Some(w)) => Constraint::cyclic_edge(0, v, w, step as u64, None, cycle),
            _ => Constraint::cyclic_vertex(0, v, step as u64, rng.gen_bool(0.3).then_some(step), cycle),
        };
        out.push(c);
    }
    out
}

/// Length (vertex count) of a shortest constrained path, by layered
/// reachability over unfolded time. Any path that reaches the goal does so
/// within `fold_start + |V| * period` steps, so stopping there is exact.
pub fn shortest_by_layers(
    map: &GridMap,
    start: Vertex,
    goal: Vertex,
    cs: &StreamConstraints,
    period: u32,
) -> Option<usize> {
    if cs.blocked_vertex(start, 0) {
        return None;
    }
    let last_mandate = cs.last_mandate_step().unwrap_or(0);
    let cap = cs.fold_start() as usize + map.num_passable() * period as usize + 1;
    let mut layer: HashSet<Vertex> = HashSet::from([start]);
    for t in 0..=cap {
        if t as u32 >= last_mandate && layer.contains(&goal) {
            return Some(t + 1);
        }
        let mut next = HashSet::new();
        for &v in &layer {
            for w in map.neighbors(v).chain(std::iter::once(v)) {
                if !cs.blocked_edge(v, w, t as u32) && !cs.blocked_vertex(w, t as u32 + 1) {
                    next.insert(w);
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        layer = next;
    }
    None
}

/// Whether two steps of one stream's path collide under cycle `c`, checked
/// directly on the path.
pub fn has_self_conflict(path: &[Vertex], c: usize) -> bool {
    for q in 0..path.len() {
        for r in q + 1..path.len() {
            if (r - q) % c != 0 {
                continue;
            }
            if path[q] == path[r] {
                return true;
            }
            if q + 1 < path.len()
                && r + 1 < path.len()
                && path[q] != path[q + 1]
                && path[q] == path[r + 1]
                && path[q + 1] == path[r]
            {
                return true;
            }
        }
    }
    false
}

/// Every constrained path of exactly `len` vertices from start to goal that
/// meets all mandates.
pub fn enumerate_paths(
    map: &GridMap,
    start: Vertex,
    goal: Vertex,
    cs: &StreamConstraints,
    len: usize,
) -> Vec<Vec<Vertex>> {
    fn rec(
        map: &GridMap,
        goal: Vertex,
        cs: &StreamConstraints,
        len: usize,
        cur: &mut Vec<Vertex>,
        out: &mut Vec<Vec<Vertex>>,
    ) {
        if cur.len() == len {
            if *cur.last().unwrap() == goal {
                out.push(cur.clone());
            }
            return;
        }
        let v = *cur.last().unwrap();
        let t = (cur.len() - 1) as u32;
        let options: Vec<Vertex> = map.neighbors(v).chain(std::iter::once(v)).collect();
        for w in options {
            if cs.blocked_edge(v, w, t) || cs.blocked_vertex(w, t + 1) {
                continue;
            }
            cur.push(w);
            rec(map, goal, cs, len, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let owes_mandate = cs.last_mandate_step().is_some_and(|m| m as usize >= len);
    if !owes_mandate && !cs.blocked_vertex(start, 0) {
        rec(map, goal, cs, len, &mut vec![start], &mut out);
    }
    out
}
