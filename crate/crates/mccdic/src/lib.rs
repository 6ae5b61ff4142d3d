//! File formats, k-space degradations, parallel execution and the
//! experiment pipeline around [`mccdic_core`].

pub mod corpus;
pub mod degrade;
pub mod dictdir;
pub mod error;
pub mod exec;
pub mod io;
pub mod keyvalue;
pub mod manifest;
pub mod pipeline;

pub use error::{Error, Result};
