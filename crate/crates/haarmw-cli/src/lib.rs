//! Batch harness around the `haarmw` core: deterministic instance
//! generation, certificate sweeps, and reporting.

pub mod config;
pub mod formats;
pub mod instance;
pub mod report;
pub mod runner;
