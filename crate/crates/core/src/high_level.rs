//! Constraint-tree search over whole-instance solutions.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{find_conflicts, find_conflicts_involving, Conflict, ConflictKind, Priority};
use crate::constraints::{Constraint, ConstraintSet, StreamConstraints};
use crate::grid::DistanceField;
use crate::instance::{CycleMode, Instance, Solution, StreamPath};
use crate::low_level::{astar, idastar, ConflictAvoidanceTable, LowLevelError, LowLevelStats, LowLevelTask};
use crate::mdd::{build_stream_mdd, classify, Mdd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LowLevelKind {
    AStar,
    IdaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    NonDisjoint,
    Disjoint,
}

/// The four solver configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, clap::ValueEnum)]
pub enum Variant {
    #[value(name = "a-nd")]
    AstarNonDisjoint,
    #[value(name = "a-d")]
    AstarDisjoint,
    #[value(name = "ida-nd")]
    IdaNonDisjoint,
    #[value(name = "ida-d")]
    IdaDisjoint,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::AstarNonDisjoint,
        Variant::AstarDisjoint,
        Variant::IdaNonDisjoint,
        Variant::IdaDisjoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::AstarNonDisjoint => "a-nd",
            Variant::AstarDisjoint => "a-d",
            Variant::IdaNonDisjoint => "ida-nd",
            Variant::IdaDisjoint => "ida-d",
        }
    }

    pub fn low_level(self) -> LowLevelKind {
        match self {
            Variant::AstarNonDisjoint | Variant::AstarDisjoint => LowLevelKind::AStar,
            _ => LowLevelKind::IdaStar,
        }
    }

    pub fn splitting(self) -> Splitting {
        match self {
            Variant::AstarDisjoint | Variant::IdaDisjoint => Splitting::Disjoint,
            _ => Splitting::NonDisjoint,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected a-nd, a-d, ida-nd or ida-d)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    pub low_level: LowLevelKind,
    pub splitting: Splitting,
    pub timeout: Option<Duration>,
    pub rng_seed: u64,
    /// Nodes costing more than this are never expanded.
    pub cost_upper_bound: Option<u64>,
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        SolverConfig {
            low_level: variant.low_level(),
            splitting: variant.splitting(),
            timeout: None,
            rng_seed: 0,
            cost_upper_bound: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_cost_upper_bound(mut self, bound: u64) -> Self {
        self.cost_upper_bound = Some(bound);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Solved,
    Unsolvable,
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Solved => "solved",
            Outcome::Unsolvable => "unsolvable",
            Outcome::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub outcome: Outcome,
    pub solution: Option<Solution>,
    pub soc: Option<u64>,
    pub ct_expanded: u64,
    pub ct_generated: u64,
    pub low_level_expansions: u64,
    pub elapsed: Duration,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("disjoint splitting requires a uniform cycle time")]
    DisjointNonUniform,
}

/// A node of the constraint tree.
#[derive(Debug, Clone)]
pub struct CtNode {
    pub cons: ConstraintSet,
    pub paths: Solution,
    pub cost: u64,
    /// All conflicts of `paths`, in scan order.
    pub conflicts: Vec<Conflict>,
}

/// Constraints added to one child and the streams that must be replanned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildBundle {
    pub constraints: Vec<Constraint>,
    pub replan: Vec<usize>,
}

/// Children of a conflict under the non-disjoint rule. Different streams get
/// one cyclic constraint each; a stream in conflict with itself gets plain
/// constraints on either step.
pub fn split_nondisjoint(inst: &Instance, conf: &Conflict) -> [ChildBundle; 2] {
    let (i, j) = (conf.i, conf.j);
    let (q_i, q_j) = (conf.q_i as u32, conf.q_j as u32);
    let bundle = |c: Constraint| ChildBundle {
        replan: vec![c.stream()],
        constraints: vec![c],
    };
    match conf.kind {
        ConflictKind::Vertex(v) if i == j => [
            bundle(Constraint::Vertex { stream: i, v, step: q_i }),
            bundle(Constraint::Vertex { stream: i, v, step: q_j }),
        ],
        ConflictKind::Edge { from, to } if i == j => [
            bundle(Constraint::Edge {
                stream: i,
                from,
                to,
                step: q_i,
            }),
            bundle(Constraint::Edge {
                stream: i,
                from: to,
                to: from,
                step: q_j,
            }),
        ],
        ConflictKind::Vertex(v) => [
            bundle(Constraint::cyclic_vertex(i, v, q_i as u64, None, inst.stream(i).cycle)),
            bundle(Constraint::cyclic_vertex(j, v, q_j as u64, None, inst.stream(j).cycle)),
        ],
        ConflictKind::Edge { from, to } => [
            bundle(Constraint::cyclic_edge(i, from, to, q_i as u64, None, inst.stream(i).cycle)),
            bundle(Constraint::cyclic_edge(j, to, from, q_j as u64, None, inst.stream(j).cycle)),
        ],
    }
}

/// Children of a conflict under disjoint splitting: the chosen side `k` is
/// either forced through the conflict location (every other agent being
/// kept off it at that absolute time) or forbidden from it.
///
/// `k` is drawn from `rng` when the streams differ; for a stream in conflict
/// with itself it is the earlier step. The positive child's `replan` lists
/// every stream whose path in `node` breaks one of its new constraints.
pub fn split_disjoint(
    inst: &Instance,
    node: &CtNode,
    conf: &Conflict,
    rng: &mut impl Rng,
) -> [ChildBundle; 2] {
    let c = inst
        .cycle_time()
        .expect("disjoint splitting needs a uniform cycle time");
    let k_is_j = conf.i != conf.j && rng.gen_bool(0.5);
    let (k, q_k) = if k_is_j {
        (conf.j, conf.q_j as u32)
    } else {
        (conf.i, conf.q_i as u32)
    };
    let t_k = inst.stream(k).t_start as u64;
    let broadcast_residue = |o: usize| -> u64 {
        let t_o = inst.stream(o).t_start as u64;
        (t_k + q_k as u64 + c as u64 - t_o) % c as u64
    };

    let (positive, negative) = match conf.side_location(k_is_j) {
        ConflictKind::Vertex(v) => {
            let mut pos = vec![
                Constraint::PositiveVertex { stream: k, v, step: q_k },
                Constraint::cyclic_vertex(k, v, q_k as u64, Some(q_k), c),
            ];
            for o in (0..inst.num_streams()).filter(|&o| o != k) {
                pos.push(Constraint::cyclic_vertex(o, v, broadcast_residue(o), None, c));
            }
            (pos, Constraint::Vertex { stream: k, v, step: q_k })
        }
        ConflictKind::Edge { from, to } => {
            let mut pos = vec![
                Constraint::PositiveEdge {
                    stream: k,
                    from,
                    to,
                    step: q_k,
                },
                Constraint::cyclic_edge(k, to, from, q_k as u64, Some(q_k), c),
            ];
            for o in (0..inst.num_streams()).filter(|&o| o != k) {
                pos.push(Constraint::cyclic_edge(o, to, from, broadcast_residue(o), None, c));
            }
            (
                pos,
                Constraint::Edge {
                    stream: k,
                    from,
                    to,
                    step: q_k,
                },
            )
        }
    };

    let mut probe = node.cons.clone();
    for &p in &positive {
        probe.insert(p);
    }
    let replan = (0..inst.num_streams())
        .filter(|&s| probe.violates(s, &node.paths.paths[s]))
        .collect();
    [
        ChildBundle {
            constraints: positive,
            replan,
        },
        ChildBundle {
            constraints: vec![negative],
            replan: vec![k],
        },
    ]
}

#[derive(Debug)]
struct OpenNode {
    cost: u64,
    conflicts: usize,
    seq: u64,
    node: CtNode,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.cost, other.conflicts, other.seq).cmp(&(self.cost, self.conflicts, self.seq))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type MddKey = (usize, usize, u64);

/// MDDs keyed by stream, path length and constraint fingerprint; entries
/// with colliding fingerprints are told apart by comparing constraint lists.
#[derive(Default)]
struct MddCache {
    entries: HashMap<MddKey, Vec<(Option<Arc<StreamConstraints>>, Arc<Mdd>)>>,
}

impl MddCache {
    fn get(&mut self, inst: &Instance, cons: &ConstraintSet, stream: usize, len: usize) -> Arc<Mdd> {
        let shared = cons.shared_stream(stream);
        let table = cons.for_stream(stream);
        let bucket = self
            .entries
            .entry((stream, len, table.fingerprint()))
            .or_default();
        let hit = bucket.iter().find(|(key, _)| match (key, &shared) {
            (Some(a), Some(b)) => Arc::ptr_eq(a, b) || a.same_constraints(b),
            (None, None) => true,
            (Some(a), None) | (None, Some(a)) => a.is_empty(),
        });
        if let Some((_, mdd)) = hit {
            return Arc::clone(mdd);
        }
        let mdd = Arc::new(build_stream_mdd(inst, stream, table, len));
        bucket.push((shared, Arc::clone(&mdd)));
        mdd
    }
}

/// Picks the best conflict of `node`: cardinal before semi-cardinal before
/// non-cardinal, ties in scan order. The result carries its priority.
fn select_with(node: &CtNode, mut mdd_of: impl FnMut(usize, usize) -> Arc<Mdd>) -> Option<Conflict> {
    let mut best: Option<Conflict> = None;
    for conf in &node.conflicts {
        let mdd_i = mdd_of(conf.i, node.paths.paths[conf.i].len());
        let mdd_j = if conf.j == conf.i {
            Arc::clone(&mdd_i)
        } else {
            mdd_of(conf.j, node.paths.paths[conf.j].len())
        };
        let priority = classify(conf, &mdd_i, &mdd_j);
        let better = best
            .as_ref()
            .is_none_or(|b| priority < b.priority.expect("classified"));
        if better {
            best = Some(Conflict {
                priority: Some(priority),
                ..*conf
            });
            if priority == Priority::Cardinal {
                break;
            }
        }
    }
    best
}

/// The conflict to branch on, classified with freshly built MDDs.
pub fn select_conflict(inst: &Instance, node: &CtNode) -> Option<Conflict> {
    let mut cache = MddCache::default();
    select_with(node, |s, len| cache.get(inst, &node.cons, s, len))
}

struct Solver<'a> {
    inst: &'a Instance,
    cfg: &'a SolverConfig,
    dists: Vec<DistanceField>,
    deadline: Option<Instant>,
    stats: LowLevelStats,
}

impl Solver<'_> {
    fn plan(
        &mut self,
        stream: usize,
        cons: &ConstraintSet,
        cat: &ConflictAvoidanceTable,
    ) -> Result<StreamPath, LowLevelError> {
        let task = LowLevelTask::for_stream(self.inst, stream, cons.for_stream(stream), &self.dists[stream])
            .with_deadline(self.deadline);
        match self.cfg.low_level {
            LowLevelKind::AStar => astar(&task, cat, &mut self.stats),
            LowLevelKind::IdaStar => idastar(&task, cat, &mut self.stats),
        }
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// Runs the constraint-tree search to an optimal solution, proof of
/// unsolvability (exhausted tree) or timeout.
pub fn solve(inst: &Instance, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    if cfg.splitting == Splitting::Disjoint && inst.mode() == CycleMode::NonUniform {
        return Err(SolveError::DisjointNonUniform);
    }
    let started = Instant::now();
    let mut solver = new_solver(inst, cfg, cfg.timeout.map(|t| started + t));
    let mut report = SolveReport {
        outcome: Outcome::Unsolvable,
        solution: None,
        soc: None,
        ct_expanded: 0,
        ct_generated: 0,
        low_level_expansions: 0,
        elapsed: Duration::ZERO,
        seed: cfg.rng_seed,
    };
    let outcome = search(&mut solver, &mut report);
    report.outcome = outcome;
    report.low_level_expansions = solver.stats.expansions;
    report.elapsed = started.elapsed();
    log::info!(
        "{} after {} expansions ({} generated), soc {:?}",
        outcome,
        report.ct_expanded,
        report.ct_generated,
        report.soc
    );
    Ok(report)
}

fn new_solver<'a>(inst: &'a Instance, cfg: &'a SolverConfig, deadline: Option<Instant>) -> Solver<'a> {
    Solver {
        inst,
        cfg,
        dists: inst
            .streams()
            .iter()
            .map(|s| inst.map().distance_field(s.goal))
            .collect(),
        deadline,
        stats: LowLevelStats::default(),
    }
}

/// Streams are planned in id order, each avoiding the ones before it.
fn plan_root(solver: &mut Solver) -> Result<CtNode, LowLevelError> {
    let inst = solver.inst;
    let cons = ConstraintSet::new();
    let mut planned: Vec<StreamPath> = Vec::with_capacity(inst.num_streams());
    for s in 0..inst.num_streams() {
        let cat = ConflictAvoidanceTable::from_paths(inst, s, planned.iter().enumerate());
        let path = solver.plan(s, &cons, &cat).inspect_err(|e| {
            if *e == LowLevelError::Infeasible {
                log::info!("stream {s} has no path at the root");
            }
        })?;
        planned.push(path);
    }
    let paths = Solution::new(planned);
    Ok(CtNode {
        cost: paths.soc(),
        conflicts: find_conflicts(inst, &paths),
        cons,
        paths,
    })
}

/// The root node of the constraint tree (no timeout applies).
pub fn root_node(inst: &Instance, cfg: &SolverConfig) -> Result<CtNode, LowLevelError> {
    plan_root(&mut new_solver(inst, cfg, None))
}

/// The child of `parent` for `bundle`, or `None` if the bundle is
/// inconsistent or leaves some stream without a path.
pub fn child_node(
    inst: &Instance,
    cfg: &SolverConfig,
    parent: &CtNode,
    bundle: &ChildBundle,
) -> Result<Option<CtNode>, LowLevelError> {
    make_child(&mut new_solver(inst, cfg, None), parent, bundle)
}

fn search(solver: &mut Solver, report: &mut SolveReport) -> Outcome {
    let inst = solver.inst;
    let cfg = solver.cfg;

    let root = match plan_root(solver) {
        Ok(root) => root,
        Err(LowLevelError::Infeasible) => return Outcome::Unsolvable,
        Err(LowLevelError::Timeout) => return Outcome::Timeout,
    };
    report.ct_generated = 1;

    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(OpenNode {
        cost: root.cost,
        conflicts: root.conflicts.len(),
        seq,
        node: root,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut mdds = MddCache::default();

    while let Some(OpenNode { node, .. }) = open.pop() {
        if solver.timed_out() {
            return Outcome::Timeout;
        }
        if cfg.cost_upper_bound.is_some_and(|ub| node.cost > ub) {
            return Outcome::Unsolvable;
        }
        report.ct_expanded += 1;
        let Some(conf) = select_with(&node, |s, len| mdds.get(inst, &node.cons, s, len)) else {
            report.soc = Some(node.cost);
            report.solution = Some(node.paths);
            return Outcome::Solved;
        };
        log::debug!(
            "expand cost {} with {} conflicts, branching on {:?}",
            node.cost,
            node.conflicts.len(),
            conf
        );
        let bundles = match cfg.splitting {
            Splitting::NonDisjoint => split_nondisjoint(inst, &conf),
            Splitting::Disjoint => split_disjoint(inst, &node, &conf, &mut rng),
        };
        for bundle in bundles {
            match make_child(solver, &node, &bundle) {
                Ok(Some(child)) => {
                    report.ct_generated += 1;
                    if cfg.cost_upper_bound.is_some_and(|ub| child.cost > ub) {
                        continue;
                    }
                    seq += 1;
                    open.push(OpenNode {
                        cost: child.cost,
                        conflicts: child.conflicts.len(),
                        seq,
                        node: child,
                    });
                }
                Ok(None) => {}
                Err(_) => return Outcome::Timeout,
            }
        }
    }
    Outcome::Unsolvable
}

/// `Ok(None)` when the child is inconsistent or some stream has no path;
/// the only error is a timeout.
fn make_child(
    solver: &mut Solver,
    parent: &CtNode,
    bundle: &ChildBundle,
) -> Result<Option<CtNode>, LowLevelError> {
    let inst = solver.inst;
    let Ok(cons) = parent.cons.extended(&bundle.constraints) else {
        return Ok(None);
    };
    let mut paths = parent.paths.clone();
    let mut involved = vec![false; inst.num_streams()];
    let mut replan = bundle.replan.clone();
    replan.sort_unstable();
    replan.dedup();
    for &s in &replan {
        let cat = ConflictAvoidanceTable::from_paths(inst, s, paths.paths.iter().enumerate());
        match solver.plan(s, &cons, &cat) {
            Ok(p) => paths.paths[s] = p,
            Err(LowLevelError::Infeasible) => return Ok(None),
            Err(e) => return Err(e),
        }
        involved[s] = true;
    }
    let conflicts = update_conflicts(inst, &parent.conflicts, &paths, &involved);
    Ok(Some(CtNode {
        cost: paths.soc(),
        cons,
        paths,
        conflicts,
    }))
}

/// Conflicts of `paths` given the parent's list and the replanned streams.
pub fn update_conflicts(
    inst: &Instance,
    parent: &[Conflict],
    paths: &Solution,
    involved: &[bool],
) -> Vec<Conflict> {
    let mut out: Vec<Conflict> = parent
        .iter()
        .filter(|c| !involved[c.i] && !involved[c.j])
        .copied()
        .collect();
    out.extend(find_conflicts_involving(inst, paths, involved));
    out.sort_unstable();
    out
}
