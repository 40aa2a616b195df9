//! Library side of the `twocultures` command: data loading, artifact
//! writing, model persistence and the experiment registry.

pub mod artifacts;
pub mod commands;
pub mod data;
pub mod experiments;
pub mod format;
pub mod modeling;
