//! Cyclic conflict detection between stream paths.
//!
//! Two agents of streams `i` and `j` meet when
//! `k_i * c_i + t_i + q_i == k_j * c_j + t_j + q_j` for some non-negative
//! `k_i, k_j` (with `k_i != k_j` when `i == j`). Shifting both spawn counts by
//! a common multiple of the periods never changes the difference, so the
//! existence question reduces to a divisibility test on the offset
//! difference: `gcd(c_i, c_j) | (t_j + q_j) - (t_i + q_i)`. For a shared
//! cycle this is the congruence `t_i + q_i = t_j + q_j (mod c)`.

use std::collections::HashMap;

use crate::grid::Vertex;
use crate::instance::{gcd, Instance, Solution};

/// Conflict classes used by conflict prioritization, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Priority {
    Cardinal,
    SemiCardinal,
    NonCardinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConflictKind {
    /// Both streams occupy `v` (steps `q_i` and `q_j`).
    Vertex(Vertex),
    /// Stream `i` moves `from -> to` at step `q_i` while stream `j` moves
    /// `to -> from` at step `q_j`.
    Edge { from: Vertex, to: Vertex },
}

/// A cyclic conflict `<i, j, q_i, q_j, location>` with `i <= j`, and
/// `q_i < q_j` when `i == j`. The derived order is the deterministic scan
/// order: `(i, j, q_i, q_j)` then vertex before edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Conflict {
    pub i: usize,
    pub j: usize,
    pub q_i: usize,
    pub q_j: usize,
    pub kind: ConflictKind,
    pub priority: Option<Priority>,
}

impl Conflict {
    pub fn is_same_stream(&self) -> bool {
        self.i == self.j
    }

    pub fn is_vertex(&self) -> bool {
        matches!(self.kind, ConflictKind::Vertex(_))
    }

    /// The conflict with its priority cleared, for tuple comparisons.
    pub fn tuple(&self) -> Conflict {
        Conflict {
            priority: None,
            ..*self
        }
    }

    /// Location as seen from side `i`: vertex, or the edge it traverses.
    pub fn side_location(&self, side_j: bool) -> ConflictKind {
        match self.kind {
            ConflictKind::Vertex(v) => ConflictKind::Vertex(v),
            ConflictKind::Edge { from, to } if side_j => ConflictKind::Edge { from: to, to: from },
            k => k,
        }
    }
}

/// Whether agents of two streams can be at steps `q_i` and `q_j` at the same
/// absolute time. `same_agent_excluded` rules out the witness `k_i == k_j`
/// (the same-stream case).
pub fn timing_compatible(
    t_i: u64,
    c_i: u64,
    q_i: u64,
    t_j: u64,
    c_j: u64,
    q_j: u64,
    same_agent_excluded: bool,
) -> bool {
    debug_assert!(c_i >= 1 && c_j >= 1);
    let a = t_i as i128 + q_i as i128;
    let b = t_j as i128 + q_j as i128;
    let diff = b - a;
    let g = gcd(c_i, c_j) as i128;
    if diff % g != 0 {
        return false;
    }
    if same_agent_excluded && diff == 0 {
        // k_i * c_i == k_j * c_j needs k_i != k_j, only possible for distinct cycles.
        return c_i != c_j;
    }
    true
}

fn compatible(inst: &Instance, i: usize, q_i: usize, j: usize, q_j: usize) -> bool {
    let (a, b) = (inst.stream(i), inst.stream(j));
    timing_compatible(
        a.t_start as u64,
        a.cycle as u64,
        q_i as u64,
        b.t_start as u64,
        b.cycle as u64,
        q_j as u64,
        i == j,
    )
}

/// Every cyclic vertex and edge conflict of `sol`, sorted in scan order.
pub fn find_conflicts(inst: &Instance, sol: &Solution) -> Vec<Conflict> {
    conflicts_matching(inst, sol, |_, _| true)
}

/// Conflicts whose pair involves at least one stream flagged in `involved`.
pub fn find_conflicts_involving(inst: &Instance, sol: &Solution, involved: &[bool]) -> Vec<Conflict> {
    conflicts_matching(inst, sol, |i, j| involved[i] || involved[j])
}

/// Conflicts of one stream with itself.
pub fn self_conflicts(inst: &Instance, sol: &Solution, stream: usize) -> Vec<Conflict> {
    conflicts_matching(inst, sol, |i, j| i == stream && j == stream)
}

/// Indexed detection: occupancies are bucketed by vertex (and residue when
/// the cycle is shared), so only co-located steps are ever compared.
fn conflicts_matching(
    inst: &Instance,
    sol: &Solution,
    include: impl Fn(usize, usize) -> bool,
) -> Vec<Conflict> {
    let map = inst.map();
    let residue = |stream: usize, q: usize| -> u64 {
        match inst.cycle_time() {
            Some(c) => (inst.stream(stream).t_start as u64 + q as u64) % c as u64,
            None => 0,
        }
    };

    let mut vertex_buckets: HashMap<(usize, u64), Vec<(usize, usize)>> = HashMap::new();
    let mut edge_buckets: HashMap<(usize, usize, u64), Vec<(usize, usize, Vertex, Vertex)>> =
        HashMap::new();
    for (s, path) in sol.paths.iter().enumerate() {
        let vs = path.vertices();
        for (q, &v) in vs.iter().enumerate() {
            vertex_buckets
                .entry((map.index(v), residue(s, q)))
                .or_default()
                .push((s, q));
        }
        for (q, w) in vs.windows(2).enumerate() {
            if w[0] == w[1] {
                continue;
            }
            let (a, b) = (map.index(w[0]), map.index(w[1]));
            edge_buckets
                .entry((a.min(b), a.max(b), residue(s, q)))
                .or_default()
                .push((s, q, w[0], w[1]));
        }
    }

    let mut out = Vec::new();
    for ((vid, _), entries) in &vertex_buckets {
        let v = map.vertex(*vid);
        for (x, &(i, q_i)) in entries.iter().enumerate() {
            for &(j, q_j) in &entries[x + 1..] {
                if include(i, j) && compatible(inst, i, q_i, j, q_j) {
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
    }
    for entries in edge_buckets.values() {
        for (x, &(i, q_i, from, to)) in entries.iter().enumerate() {
            for &(j, q_j, from_j, _) in &entries[x + 1..] {
                if from_j == to && include(i, j) && compatible(inst, i, q_i, j, q_j) {
                    out.push(Conflict {
                        i,
                        j,
                        q_i,
                        q_j,
                        kind: ConflictKind::Edge { from, to },
                        priority: None,
                    });
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Reference implementation: compares every step pair of every stream pair.
pub fn find_conflicts_exhaustive(inst: &Instance, sol: &Solution) -> Vec<Conflict> {
    let mut out = Vec::new();
    let n = sol.paths.len();
    for i in 0..n {
        for j in i..n {
            let (pi, pj) = (sol.paths[i].vertices(), sol.paths[j].vertices());
            for q_i in 0..pi.len() {
                let first_j = if i == j { q_i + 1 } else { 0 };
                for q_j in first_j..pj.len() {
                    if !compatible(inst, i, q_i, j, q_j) {
                        continue;
                    }
                    if pi[q_i] == pj[q_j] {
                        out.push(Conflict {
                            i,
                            j,
                            q_i,
                            q_j,
                            kind: ConflictKind::Vertex(pi[q_i]),
                            priority: None,
                        });
                    }
                    if q_i + 1 < pi.len()
                        && q_j + 1 < pj.len()
                        && pi[q_i] != pi[q_i + 1]
                        && pi[q_i] == pj[q_j + 1]
                        && pi[q_i + 1] == pj[q_j]
                    {
                        out.push(Conflict {
                            i,
                            j,
                            q_i,
                            q_j,
                            kind: ConflictKind::Edge {
                                from: pi[q_i],
                                to: pi[q_i + 1],
                            },
                            priority: None,
                        });
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Smallest lexicographic `(k_i, k_j)` realizing the conflict's timing.
///
/// Panics if the conflict's timing is not compatible.
pub fn conflict_witness(conf: &Conflict, inst: &Instance) -> (u64, u64) {
    let (a, b) = (inst.stream(conf.i), inst.stream(conf.j));
    let lhs0 = a.t_start as u64 + conf.q_i as u64;
    let rhs0 = b.t_start as u64 + conf.q_j as u64;
    let (c_i, c_j) = (a.cycle as u64, b.cycle as u64);
    // Any solution can be shifted down by lcm / c_i in k_i, so the search
    // range below always contains the smallest witness.
    let limit = rhs0 / c_i + c_j + 2;
    for k_i in 0..=limit {
        let lhs = k_i * c_i + lhs0;
        if lhs < rhs0 || (lhs - rhs0) % c_j != 0 {
            continue;
        }
        let k_j = (lhs - rhs0) / c_j;
        if conf.i == conf.j && k_i == k_j {
            continue;
        }
        return (k_i, k_j);
    }
    panic!("conflict {conf:?} has no timing witness");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMap;
    use crate::instance::{path_of, StreamPath};
    use std::sync::Arc;

    #[test]
    fn uniform_congruence() {
        assert!(timing_compatible(0, 3, 2, 1, 3, 1, false));
        assert!(!timing_compatible(0, 3, 2, 1, 3, 2, false));
    }

    #[test]
    fn gcd_criterion() {
        // offsets 5 and 8 differ by 3, gcd(4, 6) = 2
        assert!(!timing_compatible(0, 4, 5, 0, 6, 8, false));
        assert!(timing_compatible(0, 4, 5, 0, 6, 7, false));
    }

    #[test]
    fn same_agent_exclusion() {
        assert!(timing_compatible(0, 2, 0, 0, 2, 2, true));
        assert!(!timing_compatible(0, 2, 2, 0, 2, 2, true));
    }

    fn line_map() -> Arc<GridMap> {
        Arc::new(GridMap::open(5, 5))
    }

    #[test]
    fn self_revisit_conflict() {
        let m = line_map();
        let a = Vertex::new(0, 0);
        let inst = Instance::uniform(m.clone(), 2, vec![(a, a, 0)]).unwrap();
        let sol = Solution::new(vec![path_of(a, "RL", &m).unwrap()]);
        let got = find_conflicts(&inst, &sol);
        assert_eq!(
            got,
            vec![Conflict {
                i: 0,
                j: 0,
                q_i: 0,
                q_j: 2,
                kind: ConflictKind::Vertex(a),
                priority: None
            }]
        );
        assert_eq!(conflict_witness(&got[0], &inst), (1, 0));
    }

    #[test]
    fn cross_stream_vertex_conflict() {
        let m = line_map();
        let v = Vertex::new(1, 1);
        // stream 0 reaches v at step 1, stream 1 starts on v
        let inst = Instance::uniform(
            m.clone(),
            2,
            vec![(Vertex::new(1, 0), v, 0), (v, Vertex::new(1, 2), 1)],
        )
        .unwrap();
        let sol = Solution::new(vec![
            path_of(Vertex::new(1, 0), "R", &m).unwrap(),
            path_of(v, "R", &m).unwrap(),
        ]);
        let got = find_conflicts(&inst, &sol);
        assert_eq!(got.len(), 1);
        assert_eq!((got[0].q_i, got[0].q_j), (1, 0));
        assert_eq!(got[0].kind, ConflictKind::Vertex(v));
    }

    #[test]
    fn swap_edge_conflict() {
        let m = line_map();
        let (a, b) = (Vertex::new(2, 1), Vertex::new(2, 2));
        let inst = Instance::uniform(m.clone(), 3, vec![(a, b, 0), (b, a, 1)]).unwrap();
        // stream 0 moves a->b at q=1 (time 1), stream 1 moves b->a at q=0 (time 1)
        let sol = Solution::new(vec![
            StreamPath::new(vec![a, a, b]),
            StreamPath::new(vec![b, a]),
        ]);
        let got = find_conflicts(&inst, &sol);
        let edges: Vec<_> = got.iter().filter(|c| !c.is_vertex()).collect();
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].kind, ConflictKind::Edge { from: a, to: b });
        assert_eq!((edges[0].q_i, edges[0].q_j), (1, 0));
        assert_eq!(got, find_conflicts_exhaustive(&inst, &sol));
    }

    #[test]
    fn witness_examples() {
        let m = line_map();
        let v = Vertex::new(0, 0);
        let inst = Instance::uniform(m.clone(), 3, vec![(v, v, 0), (v, v, 1)]).unwrap();
        let conf = Conflict {
            i: 0,
            j: 1,
            q_i: 2,
            q_j: 1,
            kind: ConflictKind::Vertex(v),
            priority: None,
        };
        assert_eq!(conflict_witness(&conf, &inst), (0, 0));

        let nu = Instance::non_uniform(m, vec![(v, v, 1, 4), (v, v, 2, 6)]).unwrap();
        let conf = Conflict { q_i: 4, q_j: 5, ..conf };
        // offsets 5 and 7: 4k_i + 5 = 6k_j + 7
        let (ki, kj) = conflict_witness(&conf, &nu);
        assert_eq!(4 * ki + 5, 6 * kj + 7);
        assert_eq!((ki, kj), (2, 1));
    }
}
