//! File formats, the correlated-wager benchmark and the command-line front
//! end for `ddcc-core`.

pub mod bench;
pub mod cli;
pub mod dump;
pub mod error;
pub mod io;

pub use error::{Error, Result};
