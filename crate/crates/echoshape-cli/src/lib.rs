//! Shared plumbing for the `echoshape` command line tool: dataset
//! generation and storage, benchmark orchestration, hyperparameter
//! presets, and the supporting studies.

pub mod bench;
pub mod dataset;
pub mod presets;
pub mod studies;
