//! Command-line frontend and file formats for `ozadp-core`.

pub mod cli;
pub mod io;
pub mod lists;
pub mod selftest;
pub mod trace;

pub use ozadp_core as core;
