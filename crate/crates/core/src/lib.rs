//! Distributed Dykstra splitting for consensus optimization on graphs, the
//! subset dual-ascent method for resource allocation, and an accelerated dual
//! proximal-gradient solver.

// comparisons are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apg;
pub mod bench;
pub mod dual_ascent;
pub mod engine;
pub mod error;
pub mod funcs;
pub mod graph;
pub mod linalg;
pub mod scalar;
pub mod schedules;

pub use engine::{Block, DykstraState, Problem, StopRule};
pub use error::{Error, Result};
pub use funcs::{stationary_solve, ConvexFunction};
pub use graph::{Edge, EdgeDual, Graph};
pub use linalg::BlockVector;
pub use scalar::{Scalar, Tolerances};
pub use schedules::{CycleSchedule, ScheduleKind, ScheduleSource};

pub type ProblemF64 = Problem<f64>;
pub type DykstraStateF64 = DykstraState<f64>;
pub type ConvexFunctionF64 = ConvexFunction<f64>;
pub type BlockVectorF64 = BlockVector<f64>;
pub type ProblemF32 = Problem<f32>;
pub type DykstraStateF32 = DykstraState<f32>;
