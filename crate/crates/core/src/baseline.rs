//! Finite-horizon comparison baseline: streams unrolled into individual timed
//! agents and solved with plain conflict-based search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::conflict::{Conflict, ConflictKind, Priority};
use crate::constraints::{Constraint, ConstraintSet, StreamConstraints};
use crate::grid::{DistanceField, GridMap, Vertex};
use crate::high_level::{Outcome, SolveReport};
use crate::instance::{Instance, StreamPath};
use crate::low_level::{astar, ConflictTable, LowLevelError, LowLevelStats, LowLevelTask};
use crate::mdd::{build_mdd, classify, Mdd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnrolledAgent {
    pub stream: usize,
    pub k: u64,
    pub start: Vertex,
    pub goal: Vertex,
    pub start_time: u64,
}

/// Agents of every stream whose spawn time is at most `horizon`, ordered by
/// (stream, k).
pub fn unroll(inst: &Instance, horizon: u64) -> Vec<UnrolledAgent> {
    let mut out = Vec::new();
    for (s, stream) in inst.streams().iter().enumerate() {
        let mut k = 0;
        while stream.spawn_time(k) <= horizon {
            out.push(UnrolledAgent {
                stream: s,
                k,
                start: stream.start,
                goal: stream.goal,
                start_time: stream.spawn_time(k),
            });
            k += 1;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CbsReport {
    pub outcome: Outcome,
    /// One path per agent, each starting at the agent's start time.
    pub paths: Option<Vec<StreamPath>>,
    pub soc: Option<u64>,
    pub ct_expanded: u64,
    pub ct_generated: u64,
    pub elapsed: Duration,
}

/// Conflicts between timed agents; steps are relative to each agent's start.
/// Agents are present only from their start time until they reach the goal.
pub fn timed_conflicts(agents: &[UnrolledAgent], paths: &[StreamPath]) -> Vec<Conflict> {
    let mut at: HashMap<(Vertex, u64), Vec<(usize, usize)>> = HashMap::new();
    let mut moves: HashMap<(Vertex, Vertex, u64), Vec<(usize, usize)>> = HashMap::new();
    for (a, (agent, path)) in agents.iter().zip(paths).enumerate() {
        let vs = path.vertices();
        for (q, &v) in vs.iter().enumerate() {
            at.entry((v, agent.start_time + q as u64)).or_default().push((a, q));
        }
        for (q, w) in vs.windows(2).enumerate() {
            if w[0] != w[1] {
                moves
                    .entry((w[0], w[1], agent.start_time + q as u64))
                    .or_default()
                    .push((a, q));
            }
        }
    }
    let mut out = Vec::new();
    for (&(v, _), group) in &at {
        for (m, &(a, q_a)) in group.iter().enumerate() {
            for &(b, q_b) in &group[m + 1..] {
                let ((i, q_i), (j, q_j)) = if a < b { ((a, q_a), (b, q_b)) } else { ((b, q_b), (a, q_a)) };
                out.push(Conflict {
                    i,
                    j,
                    q_i,
                    q_j,
                    kind: ConflictKind::Vertex(v),
                    priority: None,
                });
            }
        }
    }
    for (&(u, w, t), group) in &moves {
        for &(b, q_b) in moves.get(&(w, u, t)).into_iter().flatten() {
            for &(a, q_a) in group {
                if a < b {
                    out.push(Conflict {
                        i: a,
                        j: b,
                        q_i: q_a,
                        q_j: q_b,
                        kind: ConflictKind::Edge { from: u, to: w },
                        priority: None,
                    });
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Occupancy of other agents in absolute time.
struct TimedTable {
    offset: u64,
    vertex: HashMap<(Vertex, u64), u32>,
    edge: HashMap<(Vertex, Vertex, u64), u32>,
    end: u64,
}

impl TimedTable {
    fn new(agents: &[UnrolledAgent], paths: &[StreamPath], me: usize) -> Self {
        let mut t = TimedTable {
            offset: agents[me].start_time,
            vertex: HashMap::new(),
            edge: HashMap::new(),
            end: 0,
        };
        for (a, (agent, path)) in agents.iter().zip(paths).enumerate() {
            if a == me {
                continue;
            }
            let vs = path.vertices();
            for (q, &v) in vs.iter().enumerate() {
                *t.vertex.entry((v, agent.start_time + q as u64)).or_default() += 1;
            }
            for (q, w) in vs.windows(2).enumerate() {
                if w[0] != w[1] {
                    *t.edge
                        .entry((w[0], w[1], agent.start_time + q as u64))
                        .or_default() += 1;
                }
            }
            t.end = t.end.max(agent.start_time + vs.len() as u64);
        }
        t
    }
}

impl ConflictTable for TimedTable {
    fn vertex_hits(&self, v: Vertex, q: u32) -> u32 {
        self.vertex.get(&(v, self.offset + q as u64)).copied().unwrap_or(0)
    }

    fn edge_hits(&self, from: Vertex, to: Vertex, q: u32) -> u32 {
        self.edge.get(&(to, from, self.offset + q as u64)).copied().unwrap_or(0)
    }

    fn fold_start(&self) -> u32 {
        self.end.saturating_sub(self.offset).min(u32::MAX as u64) as u32
    }
}

#[derive(Debug)]
struct Node {
    cons: ConstraintSet,
    paths: Vec<StreamPath>,
    cost: u64,
    conflicts: Vec<Conflict>,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.cost, other.conflicts.len(), other.seq).cmp(&(self.cost, self.conflicts.len(), self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn cost_of(paths: &[StreamPath]) -> u64 {
    paths.iter().map(|p| p.cost() as u64).sum()
}

struct Cbs<'a> {
    agents: &'a [UnrolledAgent],
    map: &'a GridMap,
    dists: HashMap<Vertex, DistanceField>,
    deadline: Option<Instant>,
    stats: LowLevelStats,
    mdds: HashMap<(usize, usize, u64), Vec<(Arc<StreamConstraints>, Arc<Mdd>)>>,
}

impl Cbs<'_> {
    fn plan(&mut self, a: usize, cons: &ConstraintSet, paths: &[StreamPath]) -> Result<StreamPath, LowLevelError> {
        let agent = self.agents[a];
        let table = TimedTable::new(self.agents, paths, a);
        let task = LowLevelTask {
            map: self.map,
            start: agent.start,
            goal: agent.goal,
            dist: &self.dists[&agent.goal],
            constraints: cons.for_stream(a),
            period: 1,
            cycle: 1,
            deadline: self.deadline,
        };
        astar(&task, &table, &mut self.stats)
    }

    fn mdd(&mut self, cons: &ConstraintSet, a: usize, len: usize) -> Arc<Mdd> {
        let table = cons.for_stream(a);
        let bucket = self.mdds.entry((a, len, table.fingerprint())).or_default();
        if let Some((_, m)) = bucket.iter().find(|(k, _)| k.same_constraints(table)) {
            return Arc::clone(m);
        }
        let agent = self.agents[a];
        let m = Arc::new(build_mdd(self.map, agent.start, agent.goal, table, len));
        bucket.push((Arc::new(table.clone()), Arc::clone(&m)));
        m
    }

    fn select(&mut self, node: &Node) -> Option<Conflict> {
        let mut best: Option<(Priority, Conflict)> = None;
        for conf in &node.conflicts {
            let mi = self.mdd(&node.cons, conf.i, node.paths[conf.i].len());
            let mj = self.mdd(&node.cons, conf.j, node.paths[conf.j].len());
            let p = classify(conf, &mi, &mj);
            if best.as_ref().is_none_or(|(b, _)| p < *b) {
                best = Some((p, *conf));
                if p == Priority::Cardinal {
                    break;
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// Optimal sum-of-costs paths for timed agents, or the reason there are none.
pub fn cbs_solve(agents: &[UnrolledAgent], map: &GridMap, timeout: Option<Duration>) -> CbsReport {
    let started = Instant::now();
    let mut cbs = Cbs {
        agents,
        map,
        dists: HashMap::new(),
        deadline: timeout.map(|t| started + t),
        stats: LowLevelStats::default(),
        mdds: HashMap::new(),
    };
    for a in agents {
        cbs.dists.entry(a.goal).or_insert_with(|| map.distance_field(a.goal));
    }
    let mut report = CbsReport {
        outcome: Outcome::Unsolvable,
        paths: None,
        soc: None,
        ct_expanded: 0,
        ct_generated: 0,
        elapsed: Duration::ZERO,
    };
    report.outcome = run(&mut cbs, &mut report);
    report.elapsed = started.elapsed();
    report
}

fn run(cbs: &mut Cbs, report: &mut CbsReport) -> Outcome {
    let root_cons = ConstraintSet::new();
    let mut paths = Vec::with_capacity(cbs.agents.len());
    for a in 0..cbs.agents.len() {
        match cbs.plan(a, &root_cons, &paths) {
            Ok(p) => paths.push(p),
            Err(LowLevelError::Infeasible) => return Outcome::Unsolvable,
            Err(LowLevelError::Timeout) => return Outcome::Timeout,
        }
    }
    let mut seq = 0;
    let mut open = BinaryHeap::new();
    open.push(Node {
        cost: cost_of(&paths),
        conflicts: timed_conflicts(cbs.agents, &paths),
        cons: root_cons,
        paths,
        seq,
    });
    report.ct_generated = 1;
    while let Some(node) = open.pop() {
        if cbs.timed_out() {
            return Outcome::Timeout;
        }
        report.ct_expanded += 1;
        let Some(conf) = cbs.select(&node) else {
            report.soc = Some(node.cost);
            report.paths = Some(node.paths);
            return Outcome::Solved;
        };
        let sides = [(conf.i, conf.q_i, false), (conf.j, conf.q_j, true)];
        for (a, q, side_j) in sides {
            let c = match conf.side_location(side_j) {
                ConflictKind::Vertex(v) => Constraint::Vertex {
                    stream: a,
                    v,
                    step: q as u32,
                },
                ConflictKind::Edge { from, to } => Constraint::Edge {
                    stream: a,
                    from,
                    to,
                    step: q as u32,
                },
            };
            let Ok(cons) = node.cons.extended(&[c]) else {
                continue;
            };
            let mut paths = node.paths.clone();
            match cbs.plan(a, &cons, &paths) {
                Ok(p) => paths[a] = p,
                Err(LowLevelError::Infeasible) => continue,
                Err(LowLevelError::Timeout) => return Outcome::Timeout,
            }
            seq += 1;
            report.ct_generated += 1;
            open.push(Node {
                cost: cost_of(&paths),
                conflicts: timed_conflicts(cbs.agents, &paths),
                cons,
                paths,
                seq,
            });
        }
    }
    Outcome::Unsolvable
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("the stream solution to compare against is not solved")]
    NotSolved,
    #[error("baseline cost {cbs} exceeds the unrolled stream cost {ascbs}")]
    Dominance { cbs: u64, ascbs: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRecord {
    pub horizon: u64,
    pub agents: usize,
    pub cbs_outcome: Outcome,
    pub cbs_soc: Option<u64>,
    pub ascbs_unrolled_soc: u64,
    pub relative_error: Option<f64>,
    pub ascbs_runtime_ms: f64,
    pub cbs_runtime_ms: f64,
}

/// Compares a solved stream solution, unrolled to `horizon`, with the
/// baseline's optimum for the same agents.
pub fn compare(
    inst: &Instance,
    ascbs: &SolveReport,
    horizon: u64,
    timeout: Option<Duration>,
) -> Result<CompareRecord, CompareError> {
    let sol = match (&ascbs.outcome, &ascbs.solution) {
        (Outcome::Solved, Some(sol)) => sol,
        _ => return Err(CompareError::NotSolved),
    };
    let agents = unroll(inst, horizon);
    let unrolled: u64 = agents.iter().map(|a| sol.paths[a.stream].cost() as u64).sum();
    let cbs = cbs_solve(&agents, inst.map(), timeout);
    if let Some(c) = cbs.soc {
        if c > unrolled {
            return Err(CompareError::Dominance { cbs: c, ascbs: unrolled });
        }
    }
    Ok(CompareRecord {
        horizon,
        agents: agents.len(),
        cbs_outcome: cbs.outcome,
        cbs_soc: cbs.soc,
        ascbs_unrolled_soc: unrolled,
        relative_error: cbs.soc.map(|c| relative_error(unrolled, c)),
        ascbs_runtime_ms: ascbs.elapsed.as_secs_f64() * 1e3,
        cbs_runtime_ms: cbs.elapsed.as_secs_f64() * 1e3,
    })
}

/// `(ascbs - cbs) / cbs`, zero when both are zero.
pub fn relative_error(ascbs: u64, cbs: u64) -> f64 {
    if cbs == 0 {
        if ascbs == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (ascbs as f64 - cbs as f64) / cbs as f64
    }
}
