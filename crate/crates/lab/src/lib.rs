//! Command-line driver, scenario files and CSV export for [`homlab_core`].

pub mod cli;
pub mod config;
pub mod output;
pub mod parallel;
