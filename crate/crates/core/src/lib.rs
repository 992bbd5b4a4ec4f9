//! Target-length generation toolkit: length buckets and metrics, dataset
//! builders, chat templates, a batched generation driver, a mock
//! inference server and result tables.

pub mod error;
pub mod length;
pub mod metrics;

pub use error::{Error, Result};
pub mod backend;
pub mod dataset;
pub mod dmlt;
pub mod jsonl;
pub mod mock;
pub mod orchestrator;
pub mod report;
pub mod template;
