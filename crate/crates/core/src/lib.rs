pub mod error;
pub mod geometry;
pub mod ingest;
pub mod pdf;
pub mod clustering;
pub mod flowmodel;
pub mod model;
pub mod proximity;
pub mod simulate;
pub mod pipeline;

pub use error::{Error, Result};
