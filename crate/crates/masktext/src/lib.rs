//! File formats, scene manifests and batch pipelines around
//! [`masktext_core`].
//!
//! Loaders map malformed input to [`Error::Format`] / [`Error::Read`] (exit
//! code 2) and violated cross-input contracts to [`Error::Contract`] (exit
//! code 3). Every writer emits canonical bytes, so repeated runs and runs with
//! different thread counts produce identical files.

pub mod commands;
pub mod depth;
pub mod emb;
mod error;
pub mod json;
pub mod ply;
pub mod records;

pub use error::{Error, Result};
pub use masktext_core as core;
