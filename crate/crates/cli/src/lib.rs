//! Artifact writing, summaries and report tables for the `jointloc` runner.

pub mod artifacts;
pub mod report;
pub mod summary;
