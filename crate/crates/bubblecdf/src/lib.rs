//! Std companion to `bubblecdf-core`: versioned file formats, database
//! builds, training runs, the benchmark harness and the command-line tool.

pub mod bench;
pub mod config;
pub mod data;
pub mod episode;
pub mod formats;

pub use bubblecdf_core as core;
