//! HTTP service for supervised FMEA studies.
//!
//! [`app`] builds the router; [`AppState`] holds the database, vector store
//! and providers; [`Config`] reads the `FMEA_*` environment variables. The
//! `fmea` binary wraps these with `serve` and `evaluate` commands.

pub mod config;
pub mod error;
pub mod providers;
pub mod routes;
pub mod state;

pub use config::{Config, Providers};
pub use error::{ApiError, ErrorCode};
pub use routes::{router as app, StagedResult, StudyView, OPENAPI_JSON};
pub use state::AppState;
