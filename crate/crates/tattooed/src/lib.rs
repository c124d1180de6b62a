//! File formats, key handling and the command-line front end for
//! [`tattooed_core`].

#![warn(missing_docs)]

pub mod cli;
mod error;
pub mod keyfile;
pub mod model_io;
pub mod record;
pub mod table;

pub use error::{Result, ToolError, EXIT_NEGATIVE};
