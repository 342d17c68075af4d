//! File formats, verification suites and the command line front end for
//! `parametrix-core`.
#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod error;
pub mod problem_file;
pub mod report;
pub mod suites;

pub use error::CliError;
