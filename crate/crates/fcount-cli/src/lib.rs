//! Configuration, orchestration and artifact writing for trajectory
//! experiments.

pub mod config;
pub mod experiment;
pub mod oracle_check;
