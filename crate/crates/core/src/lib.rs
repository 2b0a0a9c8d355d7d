//! Nonequilibrium symmetric simple exclusion process laboratory: an
//! event-driven stirring simulator on a finite window, exact mean-field and
//! small-system oracles, and numerical evaluators for the limiting Gaussian
//! covariances of current, occupation time and density field.

pub mod error;
pub mod limits;
pub mod meanfield;
pub mod profile;
pub mod quad;
pub mod seed;
pub mod special;
pub mod testfn;

pub use error::{Error, Result};
pub use profile::{chi, Profile, ProfileKind};
