//! Configuration-space distance function (CDF) barriers for planar robot arms.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece:
//! kinematics, the exhaustive contact-database oracle, the neural CDF
//! approximators, barrier assembly, the ADMM convex solver, bubble-graph and
//! RRT planners, Bezier trajectory smoothing, the governor/CBF/DR-CBF
//! controllers and the 2-D simulation world. File formats, the CLI and
//! benchmark orchestration live in the `bubblecdf` crate.

#![no_std]

extern crate alloc;

pub mod arm;
pub mod barrier;
pub mod control;
mod error;
pub mod math;
pub mod neural;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod trajopt;

pub use error::{Error, Result};

/// Value returned for workspace points that no configuration can reach, and
/// for empty self-collision databases.
pub const UNREACHABLE: f64 = 1e9;
