//! Command-line front end and HTTP service for the `npcolor` pipeline.
//!
//! Both are thin adapters: every computation goes through the library, so
//! the CLI and the service return the same results for the same inputs.

pub mod cli;
pub mod config;
pub mod files;
pub mod service;
pub mod session;
