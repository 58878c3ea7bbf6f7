//! File formats, run configuration and the command-line pipeline around
//! `smogcast-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv;
pub mod format;
pub mod smgd;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
