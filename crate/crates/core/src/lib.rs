//! Contexts, the spectral presheaf, probability measures and KMS conditions for
//! finite-dimensional quantum systems.

pub mod algebra;
pub mod cli;
pub mod error;
pub mod kms_external;
pub mod kms_internal;
pub mod measure;
pub mod modular;
pub mod numerics;
pub mod presheaf;
pub mod report;
pub mod sampling;

pub use error::{Error, Result};
