//! Command line and HTTP sidecar over `itr-core`.

pub mod cli;
pub mod config;
pub mod model;
pub mod service;
