//! File formats, the timed training driver and the command-line interface
//! built on `desklm-core`.

pub mod arpa;
mod bin;
pub mod checkpoint;
pub mod cli;
pub mod driver;
pub mod error;
pub mod io;
pub mod manifest;
pub mod nbest;
pub mod text;

pub use error::{Error, Result};
