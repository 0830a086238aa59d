//! File formats, configuration and the command-line front end for
//! [`wban_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;

pub use error::{Error, Result};
