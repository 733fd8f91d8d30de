pub mod ablation;
pub mod attention;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod rng;
pub mod schedule;
pub mod token_space;

pub use error::{Error, Result};
