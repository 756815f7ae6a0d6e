//! Asynchronous job gateway over the `itsgw-core` pipelines: bounded queue,
//! worker pool, append-only job log with replay, and the HTTP API.

pub mod config;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod http;
pub mod joblog;
pub mod metrics;
pub mod profile;

pub use config::GatewayConfig;
pub use error::{Result, ServiceError};
pub use gateway::Gateway;
