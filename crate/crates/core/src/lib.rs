pub mod classifier;
pub mod coherence;
pub mod corpus;
pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod semisup;
pub mod synthetic;
pub mod vampire;

pub use error::{Error, Result};
