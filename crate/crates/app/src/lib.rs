//! Command line and HTTP front end for `trafficgen`.

pub mod cli;
pub mod request;
pub mod service;

pub use request::{FieldError, SceneRequest, ValidScene};
pub use service::{router, AppState};
