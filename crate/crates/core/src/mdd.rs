//! Multi-value decision diagrams over a stream's optimal constrained paths.

use std::collections::BTreeSet;

use crate::conflict::{Conflict, ConflictKind, Priority};
use crate::constraints::StreamConstraints;
use crate::grid::{GridMap, Vertex};
use crate::instance::Instance;

/// All constrained paths of exactly `layers.len()` vertices from start to
/// goal, as per-step vertex sets plus the moves joining consecutive sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mdd {
    layers: Vec<Vec<Vertex>>,
    edges: Vec<Vec<(Vertex, Vertex)>>,
}

impl Mdd {
    pub fn layers(&self) -> &[Vec<Vertex>] {
        &self.layers
    }

    /// Moves from layer `q` to layer `q + 1`, waits included.
    pub fn edges(&self, q: usize) -> &[(Vertex, Vertex)] {
        &self.edges[q]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().any(Vec::is_empty)
    }

    pub fn width(&self, q: usize) -> usize {
        self.layers.get(q).map_or(0, Vec::len)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn contains(&self, q: usize, v: Vertex) -> bool {
        self.layers
            .get(q)
            .is_some_and(|l| l.binary_search(&v).is_ok())
    }

    fn singleton(&self, q: usize, v: Vertex) -> bool {
        self.layers.get(q).is_some_and(|l| l.as_slice() == [v])
    }

    /// Whether this side of a conflict is forced: every optimal path is at
    /// `v` at step `q`, or takes the edge between steps `q` and `q + 1`.
    pub fn forces(&self, q: usize, location: ConflictKind) -> bool {
        match location {
            ConflictKind::Vertex(v) => self.singleton(q, v),
            ConflictKind::Edge { from, to } => self.singleton(q, from) && self.singleton(q + 1, to),
        }
    }
}

/// Layered reachability under `cs`, intersected forwards and backwards.
/// `len` is the number of path vertices (cost + 1).
pub fn build_mdd(
    map: &GridMap,
    start: Vertex,
    goal: Vertex,
    cs: &StreamConstraints,
    len: usize,
) -> Mdd {
    assert!(len >= 1, "an MDD needs at least one layer");
    let moves = |v: Vertex| map.neighbors(v).chain(std::iter::once(v));

    let mut forward: Vec<BTreeSet<Vertex>> = Vec::with_capacity(len);
    let first: BTreeSet<Vertex> = (!cs.blocked_vertex(start, 0))
        .then_some(start)
        .into_iter()
        .collect();
    forward.push(first);
    for q in 1..len {
        let t = (q - 1) as u32;
        let mut next = BTreeSet::new();
        for &v in &forward[q - 1] {
            for w in moves(v) {
                if !cs.blocked_edge(v, w, t) && !cs.blocked_vertex(w, q as u32) {
                    next.insert(w);
                }
            }
        }
        forward.push(next);
    }

    let mut layers: Vec<Vec<Vertex>> = vec![Vec::new(); len];
    let mut edges: Vec<Vec<(Vertex, Vertex)>> = vec![Vec::new(); len.saturating_sub(1)];
    if forward[len - 1].contains(&goal) {
        layers[len - 1].push(goal);
    }
    for q in (0..len - 1).rev() {
        let t = q as u32;
        let mut layer = Vec::new();
        for &v in &forward[q] {
            let mut kept = false;
            for w in moves(v) {
                if layers[q + 1].binary_search(&w).is_ok() && !cs.blocked_edge(v, w, t) {
                    edges[q].push((v, w));
                    kept = true;
                }
            }
            if kept {
                layer.push(v);
            }
        }
        edges[q].sort_unstable();
        layers[q] = layer;
    }
    Mdd { layers, edges }
}

pub fn build_stream_mdd(inst: &Instance, stream: usize, cs: &StreamConstraints, len: usize) -> Mdd {
    let s = inst.stream(stream);
    build_mdd(inst.map(), s.start, s.goal, cs, len)
}

/// Cardinality class from the number of forced sides.
pub fn classify(conf: &Conflict, mdd_i: &Mdd, mdd_j: &Mdd) -> Priority {
    let forced = usize::from(mdd_i.forces(conf.q_i, conf.side_location(false)))
        + usize::from(mdd_j.forces(conf.q_j, conf.side_location(true)));
    priority_of(forced)
}

pub fn priority_of(forced_sides: usize) -> Priority {
    match forced_sides {
        2 => Priority::Cardinal,
        1 => Priority::SemiCardinal,
        _ => Priority::NonCardinal,
    }
}
