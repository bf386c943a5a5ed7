//! File formats, PNG IO and the `fsood` command line on top of `fsood-core`.

pub mod cli;
pub mod dota;
pub mod error;
pub mod formats;
pub mod raster;

pub use error::{Error, Result};
