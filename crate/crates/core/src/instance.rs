//! Streaming instances, stream paths, and the benchmark file formats.
//!
//! Scenario rows are read with the community convention that the fifth and
//! sixth fields are the start *column* and *row* (x before y). For example the
//! row
//!
//! ```text
//! 0	empty-8-8.map	8	8	5	1	2	6	8
//! ```
//!
//! describes a stream starting at row 1, column 5 and ending at row 6,
//! column 2.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridMap, MapError, Vertex};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("scenario line {line}: {reason}")]
    Scenario { line: usize, reason: String },
    #[error("requested {requested} streams but the scenario has only {available} rows")]
    TooManyStreams { requested: usize, available: usize },
    #[error("cycle time must be at least 1")]
    ZeroCycle,
    #[error("stream {stream}: {reason}")]
    Stream { stream: usize, reason: String },
    #[error("instance document: {0}")]
    Document(String),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("path starts at {found}, expected {expected}")]
    WrongStart { expected: Vertex, found: Vertex },
    #[error("path ends at {found}, expected {expected}")]
    WrongGoal { expected: Vertex, found: Vertex },
    #[error("step {step}: {vertex} is off the map or blocked")]
    Blocked { step: usize, vertex: Vertex },
    #[error("step {step}: {from} -> {to} is not a move or wait")]
    NotAdjacent { step: usize, from: Vertex, to: Vertex },
    #[error("step {step}: action leaves the map or enters a wall")]
    OffMap { step: usize },
    #[error("step {step}: unknown action {ch:?}")]
    UnknownAction { step: usize, ch: char },
}

/// One periodic source of agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStream {
    pub id: usize,
    pub start: Vertex,
    pub goal: Vertex,
    /// Release offset inside the first period, in `[0, cycle)`.
    pub t_start: u32,
    pub cycle: u32,
}

impl AgentStream {
    /// Spawn time of the `k`-th agent.
    pub fn spawn_time(&self, k: u64) -> u64 {
        k * self.cycle as u64 + self.t_start as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleMode {
    Uniform,
    #[serde(rename = "nonuniform")]
    NonUniform,
}

/// A streaming instance: map, cycle time(s), and the ordered streams.
#[derive(Debug, Clone)]
pub struct Instance {
    map: Arc<GridMap>,
    cycle_time: Option<u32>,
    streams: Vec<AgentStream>,
}

impl Instance {
    /// All streams share `cycle`. Stream ids are reassigned to `0..n`.
    pub fn uniform(
        map: Arc<GridMap>,
        cycle: u32,
        streams: Vec<(Vertex, Vertex, u32)>,
    ) -> Result<Self, InstanceError> {
        if cycle == 0 {
            return Err(InstanceError::ZeroCycle);
        }
        let streams = streams
            .into_iter()
            .enumerate()
            .map(|(id, (start, goal, t_start))| AgentStream {
                id,
                start,
                goal,
                t_start,
                cycle,
            })
            .collect();
        Instance::build(map, Some(cycle), streams)
    }

    /// Every stream carries its own cycle time: `(start, goal, t_start, cycle)`.
    pub fn non_uniform(
        map: Arc<GridMap>,
        streams: Vec<(Vertex, Vertex, u32, u32)>,
    ) -> Result<Self, InstanceError> {
        let streams = streams
            .into_iter()
            .enumerate()
            .map(|(id, (start, goal, t_start, cycle))| AgentStream {
                id,
                start,
                goal,
                t_start,
                cycle,
            })
            .collect();
        Instance::build(map, None, streams)
    }

    fn build(
        map: Arc<GridMap>,
        cycle_time: Option<u32>,
        streams: Vec<AgentStream>,
    ) -> Result<Self, InstanceError> {
        for s in &streams {
            let fail = |reason: String| InstanceError::Stream {
                stream: s.id,
                reason,
            };
            if s.cycle == 0 {
                return Err(InstanceError::ZeroCycle);
            }
            if s.t_start >= s.cycle {
                return Err(fail(format!(
                    "t_start {} outside [0, {}]",
                    s.t_start,
                    s.cycle - 1
                )));
            }
            if !map.is_passable(s.start) {
                return Err(fail(format!("start {} is not passable", s.start)));
            }
            if !map.is_passable(s.goal) {
                return Err(fail(format!("goal {} is not passable", s.goal)));
            }
        }
        Ok(Instance {
            map,
            cycle_time,
            streams,
        })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn shared_map(&self) -> Arc<GridMap> {
        Arc::clone(&self.map)
    }

    /// The shared cycle time, `None` in non-uniform mode.
    pub fn cycle_time(&self) -> Option<u32> {
        self.cycle_time
    }

    pub fn mode(&self) -> CycleMode {
        if self.cycle_time.is_some() {
            CycleMode::Uniform
        } else {
            CycleMode::NonUniform
        }
    }

    pub fn streams(&self) -> &[AgentStream] {
        &self.streams
    }

    pub fn stream(&self, id: usize) -> &AgentStream {
        &self.streams[id]
    }

    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    /// Largest cycle time, or the lcm of all cycles in non-uniform mode.
    pub fn period(&self) -> u64 {
        match self.cycle_time {
            Some(c) => c as u64,
            None => self
                .streams
                .iter()
                .fold(1u64, |acc, s| lcm(acc, s.cycle as u64)),
        }
    }

    /// Serializable form; `map_path` is written verbatim into the document.
    pub fn to_doc(&self, map_path: &str) -> InstanceDoc {
        InstanceDoc {
            map: map_path.to_string(),
            mode: self.mode(),
            cycle_time: self.cycle_time,
            streams: self
                .streams
                .iter()
                .map(|s| StreamDoc {
                    id: s.id,
                    start: [s.start.row, s.start.col],
                    goal: [s.goal.row, s.goal.col],
                    t_start: s.t_start,
                    cycle: self.cycle_time.is_none().then_some(s.cycle),
                })
                .collect(),
        }
    }

    pub fn from_doc(doc: &InstanceDoc, map: Arc<GridMap>) -> Result<Self, InstanceError> {
        for (i, s) in doc.streams.iter().enumerate() {
            if s.id != i {
                return Err(InstanceError::Document(format!(
                    "stream ids must be 0..n in order, found {} at position {i}",
                    s.id
                )));
            }
        }
        let vertex = |p: [u32; 2]| Vertex::new(p[0], p[1]);
        match doc.mode {
            CycleMode::Uniform => {
                let c = doc.cycle_time.ok_or_else(|| {
                    InstanceError::Document("uniform mode requires cycle_time".into())
                })?;
                Instance::uniform(
                    map,
                    c,
                    doc.streams
                        .iter()
                        .map(|s| (vertex(s.start), vertex(s.goal), s.t_start))
                        .collect(),
                )
            }
            CycleMode::NonUniform => {
                let streams = doc
                    .streams
                    .iter()
                    .map(|s| {
                        let c = s.cycle.ok_or_else(|| {
                            InstanceError::Document(format!("stream {} is missing `cycle`", s.id))
                        })?;
                        Ok((vertex(s.start), vertex(s.goal), s.t_start, c))
                    })
                    .collect::<Result<Vec<_>, InstanceError>>()?;
                Instance::non_uniform(map, streams)
            }
        }
    }
}

pub(crate) fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// A vertex sequence `[p^0, ..., p^{l-1}]`, one entry per time step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamPath(Vec<Vertex>);

impl StreamPath {
    pub fn new(vertices: Vec<Vertex>) -> Self {
        StreamPath(vertices)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.0
    }

    /// Number of vertices `l` (cost is `l - 1`).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cost(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn at(&self, step: usize) -> Vertex {
        self.0[step]
    }

    pub fn first(&self) -> Option<Vertex> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Vertex> {
        self.0.last().copied()
    }

    /// Checks the path endpoints and that every step is a move or a wait.
    pub fn check(&self, map: &GridMap, start: Vertex, goal: Vertex) -> Result<(), PathError> {
        let first = self.first().ok_or(PathError::Empty)?;
        if first != start {
            return Err(PathError::WrongStart {
                expected: start,
                found: first,
            });
        }
        for (step, &v) in self.0.iter().enumerate() {
            if !map.is_passable(v) {
                return Err(PathError::Blocked { step, vertex: v });
            }
        }
        for (step, w) in self.0.windows(2).enumerate() {
            if w[0] != w[1] && !map.are_adjacent(w[0], w[1]) {
                return Err(PathError::NotAdjacent {
                    step,
                    from: w[0],
                    to: w[1],
                });
            }
        }
        let last = self.last().expect("non-empty");
        if last != goal {
            return Err(PathError::WrongGoal {
                expected: goal,
                found: last,
            });
        }
        Ok(())
    }
}

/// One path per stream, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub paths: Vec<StreamPath>,
}

impl Solution {
    pub fn new(paths: Vec<StreamPath>) -> Self {
        Solution { paths }
    }

    pub fn soc(&self) -> u64 {
        soc(self)
    }

    pub fn max_len(&self) -> usize {
        self.paths.iter().map(StreamPath::len).max().unwrap_or(0)
    }

    pub fn to_doc(&self, inst: &Instance) -> SolutionDoc {
        SolutionDoc {
            cycle_time: inst.cycle_time(),
            soc: self.soc(),
            streams: inst
                .streams()
                .iter()
                .zip(&self.paths)
                .map(|(s, p)| SolutionStreamDoc {
                    id: s.id,
                    t_start: s.t_start,
                    cycle: inst.cycle_time().is_none().then_some(s.cycle),
                    start: [s.start.row, s.start.col],
                    actions: actions_of(p),
                })
                .collect(),
        }
    }

    /// Rebuilds paths from action strings. Does not check endpoints against
    /// the instance; see [`crate::simulator::validate`] for that.
    pub fn from_doc(doc: &SolutionDoc, map: &GridMap) -> Result<Self, (usize, PathError)> {
        doc.streams
            .iter()
            .enumerate()
            .map(|(i, s)| {
                path_of(Vertex::new(s.start[0], s.start[1]), &s.actions, map).map_err(|e| (i, e))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Solution::new)
    }
}

/// Sum of costs: `sum(l_i - 1)`.
pub fn soc(solution: &Solution) -> u64 {
    solution.paths.iter().map(|p| p.cost() as u64).sum()
}

/// Grid actions. Up decreases the row, right increases the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Wait,
}

impl Action {
    /// Search order used for deterministic tie-breaking.
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Wait];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Wait => (0, 0),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
            Action::Wait => 'W',
        }
    }

    pub fn from_letter(ch: char) -> Option<Action> {
        Some(match ch {
            'U' => Action::Up,
            'D' => Action::Down,
            'L' => Action::Left,
            'R' => Action::Right,
            'W' => Action::Wait,
            _ => return None,
        })
    }

    /// The action moving `from` to `to`, if they are equal or orthogonally adjacent.
    pub fn between(from: Vertex, to: Vertex) -> Option<Action> {
        let dr = to.row as i64 - from.row as i64;
        let dc = to.col as i64 - from.col as i64;
        Action::ALL.into_iter().find(|a| a.delta() == (dr, dc))
    }

    pub fn apply(self, map: &GridMap, v: Vertex) -> Option<Vertex> {
        let (dr, dc) = self.delta();
        map.passable_at(v.row as i64 + dr, v.col as i64 + dc)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Encode a path as a `UDLRW` string of length `l - 1`.
///
/// Panics if two consecutive vertices are neither equal nor adjacent.
pub fn actions_of(path: &StreamPath) -> String {
    path.vertices()
        .windows(2)
        .map(|w| {
            Action::between(w[0], w[1])
                .unwrap_or_else(|| panic!("{} -> {} is not a grid move", w[0], w[1]))
                .letter()
        })
        .collect()
}

/// Decode an action string from `start`. Errors carry the 0-based step index.
pub fn path_of(start: Vertex, actions: &str, map: &GridMap) -> Result<StreamPath, PathError> {
    if !map.is_passable(start) {
        return Err(PathError::Blocked {
            step: 0,
            vertex: start,
        });
    }
    let mut vertices = Vec::with_capacity(actions.len() + 1);
    vertices.push(start);
    let mut cur = start;
    for (step, ch) in actions.chars().enumerate() {
        let action = Action::from_letter(ch).ok_or(PathError::UnknownAction { step, ch })?;
        cur = action.apply(map, cur).ok_or(PathError::OffMap { step })?;
        vertices.push(cur);
    }
    Ok(StreamPath(vertices))
}

/// One row of a `.scen` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioRow {
    pub bucket: u32,
    pub map_name: String,
    pub map_width: usize,
    pub map_height: usize,
    pub start: Vertex,
    pub goal: Vertex,
}

/// Parse the rows of a version-1 scenario file.
pub fn parse_scenario_rows(text: &str) -> Result<Vec<ScenarioRow>, InstanceError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, l)) if l.split_whitespace().collect::<Vec<_>>() == ["version", "1"] => {}
        Some((line, l)) => {
            return Err(InstanceError::Scenario {
                line,
                reason: format!("expected `version 1`, found {l:?}"),
            })
        }
        None => {
            return Err(InstanceError::Scenario {
                line: 1,
                reason: "empty scenario file".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (line, content) in lines {
        if content.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 9 {
            return Err(InstanceError::Scenario {
                line,
                reason: format!("expected 9 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize, name: &str| -> Result<u32, InstanceError> {
            fields[idx].trim().parse().map_err(|_| InstanceError::Scenario {
                line,
                reason: format!("invalid {name} {:?}", fields[idx]),
            })
        };
        fields[8].trim().parse::<f64>().map_err(|_| InstanceError::Scenario {
            line,
            reason: format!("invalid optimal distance {:?}", fields[8]),
        })?;
        rows.push(ScenarioRow {
            bucket: num(0, "bucket")?,
            map_name: fields[1].to_string(),
            map_width: num(2, "map width")? as usize,
            map_height: num(3, "map height")? as usize,
            start: Vertex::new(num(5, "start row")?, num(4, "start column")?),
            goal: Vertex::new(num(7, "goal row")?, num(6, "goal column")?),
        });
    }
    Ok(rows)
}

/// Build a uniform instance from the first `n` scenario rows, drawing each
/// `t_start` uniformly from `[0, c)` with a ChaCha8 generator seeded by `seed`.
pub fn parse_scen(
    text: &str,
    map: Arc<GridMap>,
    n: usize,
    c: u32,
    seed: u64,
) -> Result<Instance, InstanceError> {
    if c == 0 {
        return Err(InstanceError::ZeroCycle);
    }
    let rows = parse_scenario_rows(text)?;
    if n > rows.len() {
        return Err(InstanceError::TooManyStreams {
            requested: n,
            available: rows.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut streams = Vec::with_capacity(n);
    for (i, row) in rows.iter().take(n).enumerate() {
        // Data lines start at file line 2.
        let line = i + 2;
        for (what, v) in [("start", row.start), ("goal", row.goal)] {
            if v.row as usize >= map.height() || v.col as usize >= map.width() {
                return Err(InstanceError::Scenario {
                    line,
                    reason: format!("{what} {v} is outside the {}x{} map", map.width(), map.height()),
                });
            }
            if !map.is_passable(v) {
                return Err(InstanceError::Scenario {
                    line,
                    reason: format!("{what} {v} is not passable"),
                });
            }
        }
        streams.push((row.start, row.goal, rng.gen_range(0..c)));
    }
    Instance::uniform(map, c, streams)
}

/// Generate a scenario with `rows` random tasks: pairwise-distinct starts,
/// pairwise-distinct goals, each goal reachable from its start.
pub fn generate_scenario(map: &GridMap, map_name: &str, rows: usize, seed: u64) -> String {
    let cells: Vec<Vertex> = map.passable_vertices().collect();
    assert!(rows <= cells.len(), "not enough passable cells for {rows} rows");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used_starts = std::collections::HashSet::new();
    let mut used_goals = std::collections::HashSet::new();
    let mut out = String::from("version 1\n");
    let mut produced = 0;
    let mut attempts = 0;
    while produced < rows {
        attempts += 1;
        assert!(attempts < 1_000_000, "could not place {rows} tasks");
        let s = cells[rng.gen_range(0..cells.len())];
        let g = cells[rng.gen_range(0..cells.len())];
        if s == g || used_starts.contains(&s) || used_goals.contains(&g) {
            continue;
        }
        let Some(d) = map.distance_field(g).get(s) else {
            continue;
        };
        used_starts.insert(s);
        used_goals.insert(g);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            produced / 10,
            map_name,
            map.width(),
            map.height(),
            s.col,
            s.row,
            g.col,
            g.row,
            d
        ));
        produced += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDoc {
    pub id: usize,
    pub start: [u32; 2],
    pub goal: [u32; 2],
    pub t_start: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<u32>,
}

/// Instance JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub map: String,
    pub mode: CycleMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_time: Option<u32>,
    pub streams: Vec<StreamDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionStreamDoc {
    pub id: usize,
    pub t_start: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<u32>,
    pub start: [u32; 2],
    pub actions: String,
}

/// Solution JSON document. `cycle_time` is `null` for non-uniform instances,
/// whose streams then carry their own `cycle`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub cycle_time: Option<u32>,
    pub soc: u64,
    pub streams: Vec<SolutionStreamDoc>,
}

pub fn read_file(path: &Path) -> Result<String, InstanceError> {
    std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_map(path: &Path) -> Result<GridMap, InstanceError> {
    Ok(GridMap::parse(&read_file(path)?)?)
}

/// Load an instance document. A relative `map` path is resolved against the
/// directory containing the document.
pub fn load_instance(path: &Path) -> Result<Instance, InstanceError> {
    let doc: InstanceDoc = serde_json::from_str(&read_file(path)?)?;
    let map_path = Path::new(&doc.map);
    let map_path = if map_path.is_relative() {
        path.parent().unwrap_or(Path::new(".")).join(map_path)
    } else {
        map_path.to_path_buf()
    };
    let map = Arc::new(load_map(&map_path)?);
    Instance::from_doc(&doc, map)
}
