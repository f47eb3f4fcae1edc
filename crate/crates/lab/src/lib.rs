//! Std companion to `hyperwalk-core`: experiment configuration, on-disk
//! caches, versioned outputs, the acceptance suite and the CLI commands.

pub mod acceptance;
pub mod cache;
pub mod config;
pub mod output;
pub mod commands;
