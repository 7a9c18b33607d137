//! Files and the command line.

pub mod cli;
pub mod config;
pub mod ir_file;
pub mod report;
