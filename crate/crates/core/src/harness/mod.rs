//! Data ingestion, toy scenes, configuration and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod toy;
pub mod run;
