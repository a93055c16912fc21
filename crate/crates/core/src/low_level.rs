//! Single-stream space-time planners.
//!
//! Both planners search over `(vertex, step)` states under a stream's
//! constraint table. Past the constraint set's last finite step reference
//! every blocked predicate is periodic in the step, so A* folds states by
//! residue there; that keeps its state space finite and makes infeasibility
//! detectable. IDA* keeps the full partial path instead and rejects moves that
//! would make the stream collide with its own later or earlier agents.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::constraints::StreamConstraints;
use crate::grid::{DistanceField, GridMap, Vertex, UNREACHABLE};
use crate::instance::{gcd, lcm, Action, Instance, Solution, StreamPath};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LowLevelError {
    #[error("no path satisfies the constraints")]
    Infeasible,
    #[error("deadline reached")]
    Timeout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LowLevelStats {
    pub expansions: u64,
}

/// Occupancy counts of other agents, used only to break ties.
pub trait ConflictTable {
    /// Collisions caused by being at `v` at step `q`.
    fn vertex_hits(&self, v: Vertex, q: u32) -> u32;
    /// Swap collisions caused by moving `from -> to` departing at `q`.
    fn edge_hits(&self, from: Vertex, to: Vertex, q: u32) -> u32;
    /// From this step on the counts repeat with the task's period.
    fn fold_start(&self) -> u32 {
        0
    }
}

/// A table with no entries.
pub struct NoConflicts;

impl ConflictTable for NoConflicts {
    fn vertex_hits(&self, _: Vertex, _: u32) -> u32 {
        0
    }
    fn edge_hits(&self, _: Vertex, _: Vertex, _: u32) -> u32 {
        0
    }
}

#[derive(Debug, Clone, Default)]
struct CatGroup {
    modulus: u32,
    offset: u32,
    vertex: HashMap<(Vertex, u32), u32>,
    edge: HashMap<(Vertex, Vertex, u32), u32>,
}

/// Occupancies of the other streams' current paths keyed by residue of the
/// absolute time. Streams are grouped by `gcd(c_self, c_other)`, the modulus
/// that decides whether two occupancies can coincide.
#[derive(Debug, Clone, Default)]
pub struct ConflictAvoidanceTable {
    groups: Vec<CatGroup>,
}

impl ConflictAvoidanceTable {
    /// Table for planning `for_stream` against `paths` (entries of
    /// `for_stream` itself are skipped).
    pub fn from_paths<'p>(
        inst: &Instance,
        for_stream: usize,
        paths: impl IntoIterator<Item = (usize, &'p StreamPath)>,
    ) -> Self {
        let me = inst.stream(for_stream);
        let mut groups: Vec<CatGroup> = Vec::new();
        for (j, path) in paths {
            if j == for_stream {
                continue;
            }
            let other = inst.stream(j);
            let g = gcd(me.cycle as u64, other.cycle as u64) as u32;
            let pos = match groups.iter().position(|x| x.modulus == g) {
                Some(p) => p,
                None => {
                    groups.push(CatGroup {
                        modulus: g,
                        offset: me.t_start % g,
                        ..Default::default()
                    });
                    groups.len() - 1
                }
            };
            let group = &mut groups[pos];
            let vs = path.vertices();
            for (q, &v) in vs.iter().enumerate() {
                let r = ((other.t_start as u64 + q as u64) % g as u64) as u32;
                *group.vertex.entry((v, r)).or_default() += 1;
            }
            for (q, w) in vs.windows(2).enumerate() {
                if w[0] != w[1] {
                    let r = ((other.t_start as u64 + q as u64) % g as u64) as u32;
                    *group.edge.entry((w[0], w[1], r)).or_default() += 1;
                }
            }
        }
        ConflictAvoidanceTable { groups }
    }

    pub fn is_empty(&self) -> bool {
        self.groups
            .iter()
            .all(|g| g.vertex.is_empty() && g.edge.is_empty())
    }

    /// Raw count for `(v, residue)` across groups whose modulus is `modulus`.
    pub fn count(&self, modulus: u32, v: Vertex, residue: u32) -> u32 {
        self.groups
            .iter()
            .filter(|g| g.modulus == modulus)
            .map(|g| g.vertex.get(&(v, residue)).copied().unwrap_or(0))
            .sum()
    }
}

impl ConflictTable for ConflictAvoidanceTable {
    fn vertex_hits(&self, v: Vertex, q: u32) -> u32 {
        self.groups
            .iter()
            .map(|g| {
                let r = ((g.offset as u64 + q as u64) % g.modulus as u64) as u32;
                g.vertex.get(&(v, r)).copied().unwrap_or(0)
            })
            .sum()
    }

    fn edge_hits(&self, from: Vertex, to: Vertex, q: u32) -> u32 {
        if from == to {
            return 0;
        }
        self.groups
            .iter()
            .map(|g| {
                let r = ((g.offset as u64 + q as u64) % g.modulus as u64) as u32;
                g.edge.get(&(to, from, r)).copied().unwrap_or(0)
            })
            .sum()
    }
}

/// Table over every stream of `sol` except `exclude`.
pub fn build_cat(inst: &Instance, sol: &Solution, exclude: usize) -> ConflictAvoidanceTable {
    ConflictAvoidanceTable::from_paths(inst, exclude, sol.paths.iter().enumerate())
}

/// Everything a planner needs for one query.
#[derive(Clone, Copy)]
pub struct LowLevelTask<'a> {
    pub map: &'a GridMap,
    pub start: Vertex,
    pub goal: Vertex,
    pub dist: &'a DistanceField,
    pub constraints: &'a StreamConstraints,
    /// Period of the blocked predicates past the fold start.
    pub period: u32,
    /// Cycle used for same-stream conflict pruning.
    pub cycle: u32,
    pub deadline: Option<Instant>,
}

impl<'a> LowLevelTask<'a> {
    pub fn for_stream(
        inst: &'a Instance,
        stream: usize,
        constraints: &'a StreamConstraints,
        dist: &'a DistanceField,
    ) -> Self {
        let s = inst.stream(stream);
        debug_assert_eq!(dist.goal(), s.goal);
        LowLevelTask {
            map: inst.map(),
            start: s.start,
            goal: s.goal,
            dist,
            constraints,
            period: lcm(s.cycle as u64, constraints.period() as u64) as u32,
            cycle: s.cycle,
            deadline: None,
        }
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// Admissible, consistent estimate of remaining steps, aware of mandates.
struct Heuristic {
    goal_dist: Vec<u32>,
    /// (step, vertex id, distance field to that vertex)
    mandates: Vec<(u32, usize, Vec<u32>)>,
    last_mandate: Option<u32>,
}

impl Heuristic {
    fn new(task: &LowLevelTask) -> Self {
        let n = task.map.num_cells();
        let goal_dist = (0..n).map(|i| task.dist.raw(i)).collect();
        let mandates = task
            .constraints
            .mandated_positions()
            .map(|(q, v)| {
                let field = task.map.distance_field(v);
                (q, task.map.index(v), (0..n).map(|i| field.raw(i)).collect())
            })
            .collect();
        Heuristic {
            goal_dist,
            mandates,
            last_mandate: task.constraints.last_mandate_step(),
        }
    }

    /// `None` if the state cannot reach the goal or a pending mandate.
    #[inline]
    fn eval(&self, vid: usize, t: u32) -> Option<u32> {
        let d = self.goal_dist[vid];
        if d == UNREACHABLE {
            return None;
        }
        let mut h = d;
        for (m, mid, field) in &self.mandates {
            if *m < t {
                continue;
            }
            let reach = field[vid];
            if reach == UNREACHABLE || reach > m - t {
                return None;
            }
            h = h.max(m - t + self.goal_dist[*mid]);
        }
        Some(h)
    }

    fn is_goal(&self, goal: usize, vid: usize, t: u32) -> bool {
        vid == goal && self.last_mandate.is_none_or(|m| t >= m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct OpenEntry {
    f: u32,
    conflicts: u32,
    t: u32,
    seq: u64,
    state: usize,
}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: smallest f, then fewest conflicts, then
    // deepest, then earliest generated comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then_with(|| other.conflicts.cmp(&self.conflicts))
            .then_with(|| self.t.cmp(&other.t))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NO_PARENT: usize = usize::MAX;

/// Shortest constrained path; ties go to fewer table conflicts, then to
/// action order U, D, L, R, W.
pub fn astar(
    task: &LowLevelTask,
    cat: &dyn ConflictTable,
    stats: &mut LowLevelStats,
) -> Result<StreamPath, LowLevelError> {
    let map = task.map;
    let cs = task.constraints;
    let heur = Heuristic::new(task);
    let start = map.index(task.start);
    let goal = map.index(task.goal);

    if cs.blocked_vertex(task.start, 0) {
        return Err(LowLevelError::Infeasible);
    }
    let Some(h0) = heur.eval(start, 0) else {
        return Err(LowLevelError::Infeasible);
    };

    let fold = cs.fold_start().max(cat.fold_start());
    let period = task.period.max(1);
    let layers = fold as usize + period as usize;
    let key = |t: u32| -> usize {
        if t < fold {
            t as usize
        } else {
            (fold + (t - fold) % period) as usize
        }
    };

    let n_states = map.num_cells() * layers;
    let mut best: Vec<(u32, u32)> = vec![(u32::MAX, u32::MAX); n_states];
    let mut parent: Vec<usize> = vec![NO_PARENT; n_states];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    let s0 = start * layers + key(0);
    let c0 = cat.vertex_hits(task.start, 0);
    best[s0] = (0, c0);
    open.push(OpenEntry {
        f: h0,
        conflicts: c0,
        t: 0,
        seq,
        state: s0,
    });

    while let Some(entry) = open.pop() {
        if best[entry.state] != (entry.t, entry.conflicts) {
            continue;
        }
        stats.expansions += 1;
        if stats.expansions % 4096 == 0 && task.timed_out() {
            return Err(LowLevelError::Timeout);
        }
        let vid = entry.state / layers;
        let t = entry.t;
        if heur.is_goal(goal, vid, t) {
            return Ok(reconstruct(map, &parent, layers, entry.state));
        }
        let v = map.vertex(vid);
        for action in Action::ALL {
            let Some(w) = action.apply(map, v) else {
                continue;
            };
            let nt = t + 1;
            if cs.blocked_edge(v, w, t) || cs.blocked_vertex(w, nt) {
                continue;
            }
            let wid = map.index(w);
            let Some(h) = heur.eval(wid, nt) else {
                continue;
            };
            let conflicts = entry.conflicts + cat.vertex_hits(w, nt) + cat.edge_hits(v, w, t);
            let next = wid * layers + key(nt);
            if (nt, conflicts) < best[next] {
                best[next] = (nt, conflicts);
                parent[next] = entry.state;
                seq += 1;
                open.push(OpenEntry {
                    f: nt + h,
                    conflicts,
                    t: nt,
                    seq,
                    state: next,
                });
            }
        }
    }
    Err(LowLevelError::Infeasible)
}

fn reconstruct(map: &GridMap, parent: &[usize], layers: usize, mut state: usize) -> StreamPath {
    let mut rev = vec![map.vertex(state / layers)];
    while parent[state] != NO_PARENT {
        state = parent[state];
        rev.push(map.vertex(state / layers));
    }
    rev.reverse();
    StreamPath::new(rev)
}

struct IdaSearch<'t, 'a> {
    task: &'t LowLevelTask<'a>,
    cat: &'t dyn ConflictTable,
    heur: Heuristic,
    goal: usize,
    cycle: usize,
    /// Visits per (vertex, step mod cycle) on the current path.
    vertex_occ: Vec<u16>,
    /// Traversals per (vertex, direction, step mod cycle) on the current path.
    edge_occ: Vec<u16>,
    path: Vec<Vertex>,
    expansions: u64,
    timed_out: bool,
}

enum Probe {
    Found,
    Exceeded(u32),
}

fn direction(from: Vertex, to: Vertex) -> usize {
    match Action::between(from, to) {
        Some(Action::Up) => 0,
        Some(Action::Down) => 1,
        Some(Action::Left) => 2,
        Some(Action::Right) => 3,
        _ => unreachable!("edges connect distinct adjacent cells"),
    }
}

impl IdaSearch<'_, '_> {
    fn vslot(&self, vid: usize, t: u32) -> usize {
        vid * self.cycle + t as usize % self.cycle
    }

    fn eslot(&self, from: Vertex, to: Vertex, t: u32) -> usize {
        (self.task.map.index(from) * 4 + direction(from, to)) * self.cycle + t as usize % self.cycle
    }

    fn dfs(&mut self, t: u32, bound: u32) -> Probe {
        self.expansions += 1;
        if self.expansions % 4096 == 0 && self.task.timed_out() {
            self.timed_out = true;
            return Probe::Exceeded(u32::MAX);
        }
        let map = self.task.map;
        let cs = self.task.constraints;
        let v = *self.path.last().expect("path starts non-empty");
        let vid = map.index(v);
        if self.heur.is_goal(self.goal, vid, t) {
            return Probe::Found;
        }

        let nt = t + 1;
        let mut succ: Vec<(u32, usize, Vertex, u32)> = Vec::with_capacity(5);
        for (order, action) in Action::ALL.into_iter().enumerate() {
            let Some(w) = action.apply(map, v) else {
                continue;
            };
            if cs.blocked_edge(v, w, t) || cs.blocked_vertex(w, nt) {
                continue;
            }
            let wid = map.index(w);
            if self.vertex_occ[self.vslot(wid, nt)] > 0 {
                continue;
            }
            if w != v && self.edge_occ[self.eslot(w, v, t)] > 0 {
                continue;
            }
            let Some(h) = self.heur.eval(wid, nt) else {
                continue;
            };
            let inc = self.cat.vertex_hits(w, nt) + self.cat.edge_hits(v, w, t);
            succ.push((inc, order, w, nt + h));
        }
        succ.sort_by_key(|&(inc, order, _, _)| (inc, order));

        let mut next_bound = u32::MAX;
        for (_, _, w, f) in succ {
            if f > bound {
                next_bound = next_bound.min(f);
                continue;
            }
            let wid = map.index(w);
            let vs = self.vslot(wid, nt);
            self.vertex_occ[vs] += 1;
            let es = (w != v).then(|| self.eslot(v, w, t));
            if let Some(es) = es {
                self.edge_occ[es] += 1;
            }
            self.path.push(w);
            match self.dfs(nt, bound) {
                Probe::Found => return Probe::Found,
                Probe::Exceeded(b) => next_bound = next_bound.min(b),
            }
            self.path.pop();
            self.vertex_occ[vs] -= 1;
            if let Some(es) = es {
                self.edge_occ[es] -= 1;
            }
            if self.timed_out {
                return Probe::Exceeded(u32::MAX);
            }
        }
        Probe::Exceeded(next_bound)
    }
}

/// Iterative-deepening search that never returns a path conflicting with
/// other agents of its own stream. Depth is capped at
/// `fold_start + |V| * cycle`: a self-conflict-free path visits every
/// (vertex, residue) class at most once.
pub fn idastar(
    task: &LowLevelTask,
    cat: &dyn ConflictTable,
    stats: &mut LowLevelStats,
) -> Result<StreamPath, LowLevelError> {
    // A path without self-conflicts is in particular a constrained path.
    astar(task, &NoConflicts, stats)?;

    let map = task.map;
    let heur = Heuristic::new(task);
    let start = map.index(task.start);
    let h0 = heur.eval(start, 0).ok_or(LowLevelError::Infeasible)?;
    let cycle = task.cycle.max(1) as usize;
    let cap = task.constraints.fold_start() as u64 + map.num_passable() as u64 * cycle as u64;

    let mut search = IdaSearch {
        task,
        cat,
        heur,
        goal: map.index(task.goal),
        cycle,
        vertex_occ: vec![0; map.num_cells() * cycle],
        edge_occ: vec![0; map.num_cells() * 4 * cycle],
        path: vec![task.start],
        expansions: 0,
        timed_out: false,
    };
    search.vertex_occ[start * cycle] = 1;

    let mut bound = h0;
    let result = loop {
        if bound as u64 > cap {
            break Err(LowLevelError::Infeasible);
        }
        match search.dfs(0, bound) {
            Probe::Found => break Ok(StreamPath::new(search.path.clone())),
            Probe::Exceeded(_) if search.timed_out => break Err(LowLevelError::Timeout),
            Probe::Exceeded(u32::MAX) => break Err(LowLevelError::Infeasible),
            Probe::Exceeded(b) => bound = b,
        }
    };
    stats.expansions += search.expansions;
    result
}
