//! File formats, report writers and experiment drivers around
//! [`wnll_core`], plus the `wnll` command-line tool.

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiments;
pub mod idx;
pub mod report;
pub mod table;

pub use error::{Error, Result};
