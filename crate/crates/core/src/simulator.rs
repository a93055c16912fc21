//! Brute-force validation: spawn concrete agents from every stream and step
//! them through time, recording every collision.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::conflict::{Conflict, ConflictKind};
use crate::grid::Vertex;
use crate::instance::{CycleMode, Instance, PathError, Solution};

/// Upper limit on the period term of the default horizon.
pub const MAX_PERIOD_TERM: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    pub stream: usize,
    pub k: u64,
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.stream, self.k)
    }
}

/// One concrete agent of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimAgent {
    pub id: AgentId,
    pub spawn_time: u64,
    pub len: u64,
}

impl SimAgent {
    pub fn active_at(&self, t: u64) -> bool {
        t >= self.spawn_time && t < self.spawn_time + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Vertex,
    Edge,
}

/// Collision of agents `a < b` at time `t`; for swaps the location is the
/// edge as `a` traverses it between `t` and `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollisionEvent {
    pub t: u64,
    pub kind: EventKind,
    pub a: AgentId,
    pub b: AgentId,
    pub q_a: usize,
    pub q_b: usize,
    pub location: ConflictKind,
}

impl fmt::Display for CollisionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, at) = match self.location {
            ConflictKind::Vertex(v) => ("v", v.to_string()),
            ConflictKind::Edge { from, to } => ("e", format!("{from}->{to}")),
        };
        write!(f, "t={} kind={} a={} b={} at={}", self.t, kind, self.a, self.b, at)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollisionReport {
    pub events: Vec<CollisionEvent>,
}

impl CollisionReport {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The distinct step-level conflicts behind the events, in the form
    /// conflict detection reports them.
    pub fn conflict_tuples(&self) -> BTreeSet<Conflict> {
        self.events
            .iter()
            .map(|e| {
                let flip = (e.b.stream, e.q_b) < (e.a.stream, e.q_a);
                let (i, q_i, j, q_j, kind) = if flip {
                    (e.b.stream, e.q_b, e.a.stream, e.q_a, reversed(e.location))
                } else {
                    (e.a.stream, e.q_a, e.b.stream, e.q_b, e.location)
                };
                Conflict {
                    i,
                    j,
                    q_i,
                    q_j,
                    kind,
                    priority: None,
                }
            })
            .collect()
    }
}

fn reversed(loc: ConflictKind) -> ConflictKind {
    match loc {
        ConflictKind::Edge { from, to } => ConflictKind::Edge { from: to, to: from },
        v => v,
    }
}

/// Agents spawned at or before `horizon`, ordered by (stream, k).
pub fn spawn_agents(inst: &Instance, sol: &Solution, horizon: u64) -> Vec<SimAgent> {
    let mut out = Vec::new();
    for (s, stream) in inst.streams().iter().enumerate() {
        let len = sol.paths[s].len() as u64;
        let mut k = 0;
        while stream.spawn_time(k) <= horizon {
            out.push(SimAgent {
                id: AgentId { stream: s, k },
                spawn_time: stream.spawn_time(k),
                len,
            });
            k += 1;
        }
    }
    out
}

/// Steps all agents spawned up to `horizon` through times `0..=horizon` and
/// reports co-occupied vertices at each time and swaps between `t` and
/// `t + 1` (both times within the horizon).
pub fn simulate(inst: &Instance, sol: &Solution, horizon: u64) -> CollisionReport {
    let agents = spawn_agents(inst, sol, horizon);
    let pos = |a: &SimAgent, t: u64| -> Vertex { sol.paths[a.id.stream].at((t - a.spawn_time) as usize) };

    let mut events = Vec::new();
    let mut active: Vec<&SimAgent> = Vec::new();
    let mut by_vertex: HashMap<Vertex, Vec<usize>> = HashMap::new();
    for t in 0..=horizon {
        active.clear();
        active.extend(agents.iter().filter(|a| a.active_at(t)));
        by_vertex.clear();
        for (x, a) in active.iter().enumerate() {
            by_vertex.entry(pos(a, t)).or_default().push(x);
        }
        for (&v, group) in &by_vertex {
            for (m, &x) in group.iter().enumerate() {
                for &y in &group[m + 1..] {
                    let (a, b) = (active[x], active[y]);
                    events.push(CollisionEvent {
                        t,
                        kind: EventKind::Vertex,
                        a: a.id,
                        b: b.id,
                        q_a: (t - a.spawn_time) as usize,
                        q_b: (t - b.spawn_time) as usize,
                        location: ConflictKind::Vertex(v),
                    });
                }
            }
        }
        if t == horizon {
            break;
        }
        // Swaps: a goes u -> w while some b goes w -> u.
        let moving: Vec<(usize, Vertex, Vertex)> = active
            .iter()
            .enumerate()
            .filter(|(_, a)| a.active_at(t + 1))
            .map(|(x, a)| (x, pos(a, t), pos(a, t + 1)))
            .filter(|(_, u, w)| u != w)
            .collect();
        let index: HashMap<(Vertex, Vertex), Vec<usize>> =
            moving.iter().fold(HashMap::new(), |mut acc, &(x, u, w)| {
                acc.entry((u, w)).or_default().push(x);
                acc
            });
        for &(x, u, w) in &moving {
            for &y in index.get(&(w, u)).into_iter().flatten() {
                if x < y {
                    let (a, b) = (active[x], active[y]);
                    events.push(CollisionEvent {
                        t,
                        kind: EventKind::Edge,
                        a: a.id,
                        b: b.id,
                        q_a: (t - a.spawn_time) as usize,
                        q_b: (t - b.spawn_time) as usize,
                        location: ConflictKind::Edge { from: u, to: w },
                    });
                }
            }
        }
    }
    events.sort_unstable();
    CollisionReport { events }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("solution has {found} paths for {expected} streams")]
    PathCount { expected: usize, found: usize },
    #[error("stream {stream}: {source}")]
    Structural { stream: usize, source: PathError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validation {
    pub horizon: u64,
    /// The period term of the horizon was cut to `MAX_PERIOD_TERM`.
    pub period_capped: bool,
    pub report: CollisionReport,
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        self.report.is_empty()
    }
}

/// `(horizon, capped)` used by `validate`.
pub fn default_horizon(inst: &Instance, sol: &Solution) -> (u64, bool) {
    let max_start = inst.streams().iter().map(|s| s.t_start as u64).max().unwrap_or(0);
    let max_len = sol.max_len() as u64;
    let period = match inst.mode() {
        CycleMode::Uniform => inst.cycle_time().unwrap_or(1) as u64,
        CycleMode::NonUniform => inst.period(),
    };
    let capped = period > MAX_PERIOD_TERM;
    (max_start + 4 * (max_len + period.min(MAX_PERIOD_TERM)), capped)
}

/// Structural checks, then a simulation at the default horizon (or the given one).
pub fn validate(inst: &Instance, sol: &Solution, horizon: Option<u64>) -> Result<Validation, ValidationError> {
    if sol.paths.len() != inst.num_streams() {
        return Err(ValidationError::PathCount {
            expected: inst.num_streams(),
            found: sol.paths.len(),
        });
    }
    for (s, (path, stream)) in sol.paths.iter().zip(inst.streams()).enumerate() {
        path.check(inst.map(), stream.start, stream.goal)
            .map_err(|source| ValidationError::Structural { stream: s, source })?;
    }
    let (default, period_capped) = default_horizon(inst, sol);
    let horizon = horizon.unwrap_or(default);
    Ok(Validation {
        horizon,
        period_capped: period_capped && horizon == default,
        report: simulate(inst, sol, horizon),
    })
}
