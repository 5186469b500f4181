//! The gateway: one HTTPS port serving embedded delegation and the job API,
//! authenticated by delegated proxies and authorized by VO policy.

pub mod api;
pub mod client;
pub mod config;
pub mod policy;
pub mod server;
pub mod tokens;
pub mod views;

pub use api::{AppState, Authorized, Clock, ConnectionContext, PendingSessions};
pub use client::{ApiClientError, Delegated, GatewayClient, Output};
pub use config::{ConfigError, GatewayConfig, DEFAULT_PORT, STATE_ROOT_ENV};
pub use policy::{DenyReason, Operation, VoPolicy};
pub use server::{Gateway, GatewaySettings, StartError};
pub use tokens::{ApiSession, TokenTable};
