//! Optimal path planning for periodic agent streams on grid maps.
//!
//! Every stream spawns a new agent at its start cell every `c` steps, and all
//! agents of a stream follow the same path. [`high_level::solve`] finds one
//! path per stream such that no two agents, of the same or different streams,
//! ever collide, minimizing the sum of path costs.

pub mod baseline;
pub mod bench;
pub mod conflict;
pub mod constraints;
pub mod grid;
pub mod high_level;
pub mod instance;
pub mod low_level;
pub mod mdd;
pub mod simulator;

pub use conflict::{find_conflicts, Conflict, ConflictKind, Priority};
pub use constraints::{Constraint, ConstraintSet};
pub use grid::{GridMap, Vertex};
pub use high_level::{solve, Outcome, SolveReport, SolverConfig, Variant};
pub use instance::{AgentStream, CycleMode, Instance, Solution, StreamPath};
pub use simulator::{simulate, validate};
