//! Cross-view recognition pipeline built from three stages: shared-feature
//! learning against a sample-affinity-weighted denoising objective,
//! transferable dictionary learning with shared sparse codes, and joint
//! marginal/conditional distribution adaptation solved as a generalized
//! eigenproblem with iterative pseudo-labeling. A nearest-neighbor harness
//! evaluates the result under a leave-one-class-out protocol.

pub mod affinity;
pub mod corpus;
pub mod error;
pub mod shared;
pub mod sparse;

pub use error::{Error, Result};
