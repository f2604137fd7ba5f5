pub mod error;
pub mod metrics;
pub mod netdef;
pub mod nnops;
pub mod phantom;
pub mod pipeline;
pub mod tensor;
pub mod voxgrid;
pub mod weights;

pub use error::{Error, Result};
