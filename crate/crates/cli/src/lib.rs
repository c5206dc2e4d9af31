//! Std companion to `recap-core`: toy tasks, file formats, the
//! experiment harness, and the report builder behind the `recap`
//! binary.

pub mod checkpoint;
pub mod config;
pub mod harness;
pub mod io;
pub mod report;
pub mod tasks;
pub mod vocab;
