//! Library side of the `hairpin` command-line tool: configuration, file
//! formats, and the subcommand implementations. The binary in `main.rs` is a
//! thin argument-parsing shell over this crate.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod io_util;
pub mod rates_io;
pub mod samples_io;
pub mod svg;
