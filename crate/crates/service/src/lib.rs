//! Network front end for the control plane: an HTTP API for registration
//! and sessions, a JSON-lines TCP stream for coefficient updates and
//! feedback, and a blocking client that speaks both.

pub mod client;
pub mod server;

pub use client::Remote;
pub use server::{http_router, Server, Shared};
