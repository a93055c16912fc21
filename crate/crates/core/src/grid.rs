//! 4-connected grid graphs parsed from benchmark `.map` files.
//!
//! The map format is the one used by the MovingAI benchmark set:
//!
//! ```text
//! type octile
//! height H
//! width W
//! map
//! <H rows of W characters>
//! ```
//!
//! `.` and `G` are passable. `@`, `O`, `T`, `S` and `W` are impassable; the
//! swamp (`S`) and water (`W`) variants are treated as walls so that parsing
//! never depends on terrain costs. Moves are orthogonal only, matching the
//! up/down/left/right/wait action alphabet.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: {reason}")]
    Header { line: usize, reason: String },
    #[error("line {line}: expected {expected} map rows, found {found}")]
    MissingRows {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: row has {found} cells, expected {expected}")]
    RowWidth {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown cell character {ch:?}")]
    UnknownCell { line: usize, ch: char },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
}

/// A grid cell, addressed by row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub row: u32,
    pub col: u32,
}

impl Vertex {
    pub const fn new(row: u32, col: u32) -> Self {
        Vertex { row, col }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Immutable passability grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    passable: Vec<bool>,
}

/// Sentinel for cells that cannot reach the goal.
pub const UNREACHABLE: u32 = u32::MAX;

/// Exact BFS distances to a single goal, indexed by [`GridMap::index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    goal: Vertex,
    dist: Vec<u32>,
    width: usize,
}

impl DistanceField {
    pub fn goal(&self) -> Vertex {
        self.goal
    }

    /// Distance from `v` to the goal, `None` if disconnected.
    pub fn get(&self, v: Vertex) -> Option<u32> {
        let d = self.dist[v.row as usize * self.width + v.col as usize];
        (d != UNREACHABLE).then_some(d)
    }

    /// Raw distance with [`UNREACHABLE`] as sentinel.
    #[inline]
    pub fn raw(&self, id: usize) -> u32 {
        self.dist[id]
    }
}

impl GridMap {
    /// Build a grid from a row-major passability vector.
    pub fn new(width: usize, height: usize, passable: Vec<bool>) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::EmptyGrid { width, height });
        }
        assert_eq!(passable.len(), width * height, "passable must have width*height cells");
        Ok(GridMap {
            width,
            height,
            passable,
        })
    }

    /// An obstacle-free `width` x `height` grid.
    pub fn open(width: usize, height: usize) -> Self {
        GridMap::new(width, height, vec![true; width * height]).expect("positive dimensions")
    }

    /// Parse a benchmark map file. Errors name the 1-based line number.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

        let mut header = |key: &str| -> Result<(usize, String), MapError> {
            let (line, content) = lines.next().ok_or(MapError::Header {
                line: 0,
                reason: format!("missing `{key}` line"),
            })?;
            let mut parts = content.split_whitespace();
            match parts.next() {
                Some(k) if k == key => Ok((line, parts.collect::<Vec<_>>().join(" "))),
                _ => Err(MapError::Header {
                    line,
                    reason: format!("expected `{key}`, found {content:?}"),
                }),
            }
        };

        let (line, kind) = header("type")?;
        if kind.is_empty() {
            return Err(MapError::Header {
                line,
                reason: "missing map type".into(),
            });
        }
        let parse_dim = |(line, value): (usize, String), key: &str| -> Result<usize, MapError> {
            value.parse::<usize>().map_err(|_| MapError::Header {
                line,
                reason: format!("invalid {key} {value:?}"),
            })
        };
        let height = parse_dim(header("height")?, "height")?;
        let width = parse_dim(header("width")?, "width")?;
        let (_, rest) = header("map")?;
        if !rest.is_empty() {
            return Err(MapError::Header {
                line: 4,
                reason: "unexpected text after `map`".into(),
            });
        }
        if width == 0 || height == 0 {
            return Err(MapError::EmptyGrid { width, height });
        }

        let mut passable = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (line, content) in lines.by_ref().take(height) {
            let cells: Vec<char> = content.chars().collect();
            if cells.len() != width {
                return Err(MapError::RowWidth {
                    line,
                    expected: width,
                    found: cells.len(),
                });
            }
            for ch in cells {
                passable.push(match ch {
                    '.' | 'G' => true,
                    '@' | 'O' | 'T' | 'S' | 'W' => false,
                    _ => return Err(MapError::UnknownCell { line, ch }),
                });
            }
            rows += 1;
        }
        if rows < height {
            return Err(MapError::MissingRows {
                line: 5 + rows,
                expected: height,
                found: rows,
            });
        }
        GridMap::new(width, height, passable)
    }

    /// Serialize back to the benchmark format (passable as `.`, walls as `@`).
    pub fn to_map_string(&self) -> String {
        let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", self.height, self.width);
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.passable[row * self.width + col] { '.' } else { '@' });
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn num_passable(&self) -> usize {
        self.passable.iter().filter(|&&p| p).count()
    }

    /// Canonical scalar id `row * width + col`.
    #[inline]
    pub fn index(&self, v: Vertex) -> usize {
        v.row as usize * self.width + v.col as usize
    }

    #[inline]
    pub fn vertex(&self, index: usize) -> Vertex {
        Vertex::new((index / self.width) as u32, (index % self.width) as u32)
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn is_passable(&self, v: Vertex) -> bool {
        (v.row as usize) < self.height
            && (v.col as usize) < self.width
            && self.passable[self.index(v)]
    }

    /// Passable cell at signed coordinates, if any.
    pub fn passable_at(&self, row: i64, col: i64) -> Option<Vertex> {
        if !self.in_bounds(row, col) {
            return None;
        }
        let v = Vertex::new(row as u32, col as u32);
        self.passable[self.index(v)].then_some(v)
    }

    pub fn passable_vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.num_cells())
            .filter(|&i| self.passable[i])
            .map(|i| self.vertex(i))
    }

    /// Passable orthogonal neighbours in up, down, left, right order.
    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = Vertex> + '_ {
        const DELTAS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        DELTAS
            .iter()
            .filter_map(move |&(dr, dc)| self.passable_at(v.row as i64 + dr, v.col as i64 + dc))
    }

    pub fn are_adjacent(&self, a: Vertex, b: Vertex) -> bool {
        a.row.abs_diff(b.row) + a.col.abs_diff(b.col) == 1 && self.is_passable(a) && self.is_passable(b)
    }

    /// BFS distances from every passable cell to `goal`.
    pub fn distance_field(&self, goal: Vertex) -> DistanceField {
        let mut dist = vec![UNREACHABLE; self.num_cells()];
        let mut queue = VecDeque::new();
        if self.is_passable(goal) {
            dist[self.index(goal)] = 0;
            queue.push_back(goal);
        }
        while let Some(v) = queue.pop_front() {
            let d = dist[self.index(v)];
            for u in self.neighbors(v) {
                let slot = &mut dist[self.index(u)];
                if *slot == UNREACHABLE {
                    *slot = d + 1;
                    queue.push_back(u);
                }
            }
        }
        DistanceField {
            goal,
            dist,
            width: self.width,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(rows: &[&str]) -> GridMap {
        let text = format!(
            "type octile\nheight {}\nwidth {}\nmap\n{}\n",
            rows.len(),
            rows[0].len(),
            rows.join("\n")
        );
        GridMap::parse(&text).unwrap()
    }

    #[test]
    fn parses_open_map() {
        let m = map(&["..", ".."]);
        assert_eq!(m.num_passable(), 4);
        assert_eq!((m.width(), m.height()), (2, 2));
    }

    #[test]
    fn parses_diagonal_walls() {
        let m = map(&[".@", "@."]);
        let cells: Vec<_> = m.passable_vertices().collect();
        assert_eq!(cells, vec![Vertex::new(0, 0), Vertex::new(1, 1)]);
    }

    #[test]
    fn terrain_variants() {
        let m = map(&["G.@OTSW"]);
        let cells: Vec<_> = m.passable_vertices().map(|v| v.col).collect();
        assert_eq!(cells, vec![0, 1]);
    }

    #[test]
    fn missing_row_reports_line() {
        let err = GridMap::parse("type octile\nheight 3\nwidth 2\nmap\n..\n..\n").unwrap_err();
        assert_eq!(
            err,
            MapError::MissingRows {
                line: 7,
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            GridMap::parse("type octile\nheight x\nwidth 2\nmap\n"),
            Err(MapError::Header { line: 2, .. })
        ));
        assert!(matches!(
            GridMap::parse("type octile\nwidth 2\nheight 2\nmap\n"),
            Err(MapError::Header { line: 2, .. })
        ));
        assert!(matches!(
            GridMap::parse("type octile\nheight 1\nwidth 2\nmap\n...\n"),
            Err(MapError::RowWidth { line: 5, .. })
        ));
        assert!(matches!(
            GridMap::parse("type octile\nheight 1\nwidth 2\nmap\n.x\n"),
            Err(MapError::UnknownCell { line: 5, ch: 'x' })
        ));
    }

    #[test]
    fn round_trips_through_text() {
        let m = map(&[".@.", "...", "@@."]);
        assert_eq!(GridMap::parse(&m.to_map_string()).unwrap(), m);
    }

    #[test]
    fn neighbor_counts() {
        let m = GridMap::open(3, 3);
        assert_eq!(m.neighbors(Vertex::new(1, 1)).count(), 4);
        assert_eq!(m.neighbors(Vertex::new(0, 0)).count(), 2);
        let walled = map(&[".@.", "@.@", ".@."]);
        assert_eq!(walled.neighbors(Vertex::new(1, 1)).count(), 0);
        assert!(m.neighbors(Vertex::new(1, 1)).all(|u| u != Vertex::new(1, 1)));
    }

    #[test]
    fn corridor_distances() {
        let m = GridMap::open(3, 1);
        let d = m.distance_field(Vertex::new(0, 2));
        let got: Vec<_> = (0..3).map(|c| d.get(Vertex::new(0, c))).collect();
        assert_eq!(got, vec![Some(2), Some(1), Some(0)]);
    }

    #[test]
    fn disconnected_is_unreachable() {
        let m = map(&[".@."]);
        let d = m.distance_field(Vertex::new(0, 2));
        assert_eq!(d.get(Vertex::new(0, 0)), None);
        assert_eq!(d.get(Vertex::new(0, 2)), Some(0));
    }
}
