//! File formats, parallel sweeps, reports and the command-line front end for
//! [`halvinglab_core`].

pub mod cli;
pub mod curves_csv;
pub mod error;
pub mod formats;
pub mod report;
pub mod sweep;

pub use error::{AppError, Result};
