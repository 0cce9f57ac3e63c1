//! Configuration and stage orchestration behind the `impact` binary.

pub mod config;
pub mod pipeline;
