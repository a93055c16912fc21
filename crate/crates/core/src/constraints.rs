//! Negative, cyclic and positive constraints and their step queries.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::grid::Vertex;
use crate::instance::{lcm, StreamPath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("stream {stream} has contradictory mandates at step {step}")]
    Inconsistent { stream: usize, step: u32 },
}

/// A single constraint. Steps are path indices `q`; edge steps are departure
/// steps (the stream is at `from` at `q` and at `to` at `q + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    /// Blocks `v` at every `q = residue (mod cycle)` except `q == exempt`.
    CyclicVertex {
        stream: usize,
        v: Vertex,
        residue: u32,
        exempt: Option<u32>,
        cycle: u32,
    },
    CyclicEdge {
        stream: usize,
        from: Vertex,
        to: Vertex,
        residue: u32,
        exempt: Option<u32>,
        cycle: u32,
    },
    Vertex {
        stream: usize,
        v: Vertex,
        step: u32,
    },
    Edge {
        stream: usize,
        from: Vertex,
        to: Vertex,
        step: u32,
    },
    /// The stream must be at `v` at `step`.
    PositiveVertex {
        stream: usize,
        v: Vertex,
        step: u32,
    },
    /// The stream must traverse `from -> to` departing at `step`.
    PositiveEdge {
        stream: usize,
        from: Vertex,
        to: Vertex,
        step: u32,
    },
}

impl Constraint {
    /// Cyclic vertex constraint; `q_r` is reduced modulo `cycle`.
    pub fn cyclic_vertex(stream: usize, v: Vertex, q_r: u64, exempt: Option<u32>, cycle: u32) -> Self {
        Constraint::CyclicVertex {
            stream,
            v,
            residue: (q_r % cycle as u64) as u32,
            exempt,
            cycle,
        }
    }

    pub fn cyclic_edge(
        stream: usize,
        from: Vertex,
        to: Vertex,
        q_r: u64,
        exempt: Option<u32>,
        cycle: u32,
    ) -> Self {
        Constraint::CyclicEdge {
            stream,
            from,
            to,
            residue: (q_r % cycle as u64) as u32,
            exempt,
            cycle,
        }
    }

    pub fn stream(&self) -> usize {
        match *self {
            Constraint::CyclicVertex { stream, .. }
            | Constraint::CyclicEdge { stream, .. }
            | Constraint::Vertex { stream, .. }
            | Constraint::Edge { stream, .. }
            | Constraint::PositiveVertex { stream, .. }
            | Constraint::PositiveEdge { stream, .. } => stream,
        }
    }

    pub fn is_cyclic(&self) -> bool {
        matches!(self, Constraint::CyclicVertex { .. } | Constraint::CyclicEdge { .. })
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Constraint::PositiveVertex { .. } | Constraint::PositiveEdge { .. })
    }
}

/// The location a positive constraint pins at its anchor step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mandate {
    Vertex(Vertex),
    Edge(Vertex, Vertex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CyclicRule {
    residue: u32,
    exempt: Option<u32>,
    cycle: u32,
}

impl CyclicRule {
    #[inline]
    fn blocks(&self, q: u32) -> bool {
        q % self.cycle == self.residue && Some(q) != self.exempt
    }
}

/// All constraints of one stream, indexed for per-step queries.
#[derive(Debug, Clone, Default)]
pub struct StreamConstraints {
    list: BTreeSet<Constraint>,
    plain_vertex: HashSet<(Vertex, u32)>,
    plain_edge: HashSet<(Vertex, Vertex, u32)>,
    cyclic_vertex: HashMap<Vertex, Vec<CyclicRule>>,
    cyclic_edge: HashMap<(Vertex, Vertex), Vec<CyclicRule>>,
    /// Positions forced by positive constraints (vertex mandates and both
    /// endpoints of edge mandates), keyed by step.
    positions: BTreeMap<u32, Vec<Vertex>>,
    positive_edges: BTreeMap<u32, Vec<(Vertex, Vertex)>>,
    positive_vertices: BTreeMap<u32, Vec<Vertex>>,
    horizon: Option<u32>,
    period: u32,
    fingerprint: u64,
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

impl StreamConstraints {
    fn empty() -> &'static StreamConstraints {
        static EMPTY: OnceLock<StreamConstraints> = OnceLock::new();
        EMPTY.get_or_init(|| StreamConstraints {
            period: 1,
            ..Default::default()
        })
    }

    fn insert(&mut self, c: Constraint) -> bool {
        if !self.list.insert(c) {
            return false;
        }
        if self.period == 0 {
            self.period = 1;
        }
        let touch = |h: &mut Option<u32>, step: u32| *h = Some(h.map_or(step, |x| x.max(step)));
        match c {
            Constraint::CyclicVertex {
                v,
                residue,
                exempt,
                cycle,
                ..
            } => {
                self.cyclic_vertex.entry(v).or_default().push(CyclicRule {
                    residue,
                    exempt,
                    cycle,
                });
                self.period = lcm(self.period as u64, cycle as u64) as u32;
                if let Some(e) = exempt {
                    touch(&mut self.horizon, e);
                }
            }
            Constraint::CyclicEdge {
                from,
                to,
                residue,
                exempt,
                cycle,
                ..
            } => {
                self.cyclic_edge.entry((from, to)).or_default().push(CyclicRule {
                    residue,
                    exempt,
                    cycle,
                });
                self.period = lcm(self.period as u64, cycle as u64) as u32;
                if let Some(e) = exempt {
                    touch(&mut self.horizon, e);
                }
            }
            Constraint::Vertex { v, step, .. } => {
                self.plain_vertex.insert((v, step));
                touch(&mut self.horizon, step);
            }
            Constraint::Edge { from, to, step, .. } => {
                self.plain_edge.insert((from, to, step));
                touch(&mut self.horizon, step);
            }
            Constraint::PositiveVertex { v, step, .. } => {
                push_unique(self.positions.entry(step).or_default(), v);
                push_unique(self.positive_vertices.entry(step).or_default(), v);
                touch(&mut self.horizon, step);
            }
            Constraint::PositiveEdge { from, to, step, .. } => {
                push_unique(self.positions.entry(step).or_default(), from);
                push_unique(self.positions.entry(step + 1).or_default(), to);
                push_unique(self.positive_edges.entry(step).or_default(), (from, to));
                touch(&mut self.horizon, step + 1);
            }
        }
        let mut h = DefaultHasher::new();
        self.list.hash(&mut h);
        self.fingerprint = h.finish();
        true
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.list.iter()
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    /// Hash of the constraint list; equal lists give equal fingerprints.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn same_constraints(&self, other: &StreamConstraints) -> bool {
        self.list == other.list
    }

    /// Largest finite step any constraint refers to.
    pub fn finite_horizon(&self) -> Option<u32> {
        self.horizon
    }

    /// First step from which the blocked predicates are periodic.
    pub fn fold_start(&self) -> u32 {
        self.horizon.map_or(0, |h| h + 1)
    }

    /// Lcm of the cycles of all cyclic constraints (1 if none).
    pub fn period(&self) -> u32 {
        self.period.max(1)
    }

    #[inline]
    pub fn blocked_vertex(&self, v: Vertex, q: u32) -> bool {
        if let Some(pos) = self.positions.get(&q) {
            if pos.iter().any(|&u| u != v) {
                return true;
            }
        }
        if self.plain_vertex.contains(&(v, q)) {
            return true;
        }
        self.cyclic_vertex
            .get(&v)
            .is_some_and(|rules| rules.iter().any(|r| r.blocks(q)))
    }

    /// Whether the move `from -> to` departing at `q` is forbidden. Waits
    /// (`from == to`) are governed by vertex constraints only.
    #[inline]
    pub fn blocked_edge(&self, from: Vertex, to: Vertex, q: u32) -> bool {
        if from == to {
            return false;
        }
        if let Some(edges) = self.positive_edges.get(&q) {
            if edges.iter().any(|&e| e != (from, to)) {
                return true;
            }
        }
        if self.plain_edge.contains(&(from, to, q)) {
            return true;
        }
        self.cyclic_edge
            .get(&(from, to))
            .is_some_and(|rules| rules.iter().any(|r| r.blocks(q)))
    }

    pub fn mandated_at(&self, stream: usize, q: u32) -> Result<Option<Mandate>, ConstraintError> {
        let inconsistent = ConstraintError::Inconsistent { stream, step: q };
        if self.positions.get(&q).is_some_and(|p| p.len() > 1) {
            return Err(inconsistent);
        }
        if let Some(edges) = self.positive_edges.get(&q) {
            if edges.len() > 1 {
                return Err(inconsistent);
            }
            return Ok(Some(Mandate::Edge(edges[0].0, edges[0].1)));
        }
        Ok(self
            .positive_vertices
            .get(&q)
            .map(|vs| Mandate::Vertex(vs[0])))
    }

    /// Step of the latest forced position, if any.
    pub fn last_mandate_step(&self) -> Option<u32> {
        self.positions.keys().next_back().copied()
    }

    /// Forced `(step, vertex)` positions in step order.
    pub fn mandated_positions(&self) -> impl Iterator<Item = (u32, Vertex)> + '_ {
        self.positions.iter().map(|(&q, vs)| (q, vs[0]))
    }

    /// Whether no positive constraint is contradicted by another constraint.
    pub fn check_consistent(&self, stream: usize) -> Result<(), ConstraintError> {
        for (&q, vs) in &self.positions {
            if vs.len() > 1 || self.blocked_vertex(vs[0], q) {
                return Err(ConstraintError::Inconsistent { stream, step: q });
            }
        }
        for (&q, es) in &self.positive_edges {
            if es.len() > 1 || self.blocked_edge(es[0].0, es[0].1, q) {
                return Err(ConstraintError::Inconsistent { stream, step: q });
            }
        }
        Ok(())
    }

    pub fn violates(&self, path: &StreamPath) -> bool {
        let vs = path.vertices();
        if vs
            .iter()
            .enumerate()
            .any(|(q, &v)| self.blocked_vertex(v, q as u32))
        {
            return true;
        }
        if vs
            .windows(2)
            .enumerate()
            .any(|(q, w)| self.blocked_edge(w[0], w[1], q as u32))
        {
            return true;
        }
        self.last_mandate_step()
            .is_some_and(|m| m as usize >= vs.len())
    }
}

/// Constraints of all streams. Cloning is cheap: per-stream tables are
/// shared until one of them is extended.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    streams: BTreeMap<usize, Arc<StreamConstraints>>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `c`; returns false if it was already present. No consistency
    /// check is made, see [`ConstraintSet::extended`].
    pub fn insert(&mut self, c: Constraint) -> bool {
        let entry = self.streams.entry(c.stream()).or_insert_with(|| {
            Arc::new(StreamConstraints {
                period: 1,
                ..Default::default()
            })
        });
        if entry.list.contains(&c) {
            return false;
        }
        Arc::make_mut(entry).insert(c)
    }

    /// A copy of `self` plus `added`, rejected if it makes any positive
    /// constraint unsatisfiable.
    pub fn extended(&self, added: &[Constraint]) -> Result<ConstraintSet, ConstraintError> {
        let mut next = self.clone();
        for &c in added {
            next.insert(c);
        }
        let touched: BTreeSet<usize> = added.iter().map(Constraint::stream).collect();
        for s in touched {
            next.for_stream(s).check_consistent(s)?;
        }
        Ok(next)
    }

    pub fn for_stream(&self, stream: usize) -> &StreamConstraints {
        self.streams
            .get(&stream)
            .map(|s| s.as_ref())
            .unwrap_or_else(|| StreamConstraints::empty())
    }

    pub fn shared_stream(&self, stream: usize) -> Option<Arc<StreamConstraints>> {
        self.streams.get(&stream).cloned()
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.streams.values().flat_map(|s| s.constraints())
    }

    pub fn blocked_vertex(&self, stream: usize, v: Vertex, q: u32) -> bool {
        self.for_stream(stream).blocked_vertex(v, q)
    }

    pub fn blocked_edge(&self, stream: usize, from: Vertex, to: Vertex, q: u32) -> bool {
        self.for_stream(stream).blocked_edge(from, to, q)
    }

    pub fn mandated_at(&self, stream: usize, q: u32) -> Result<Option<Mandate>, ConstraintError> {
        self.for_stream(stream).mandated_at(stream, q)
    }

    pub fn violates(&self, stream: usize, path: &StreamPath) -> bool {
        self.for_stream(stream).violates(path)
    }

    /// Largest finite step reference over all streams.
    pub fn finite_horizon(&self) -> Option<u32> {
        self.streams.values().filter_map(|s| s.finite_horizon()).max()
    }
}
