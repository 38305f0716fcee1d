//! Finite-dimensional observer-based boundary output-feedback stabilization
//! of parabolic PDEs on boxes.
//!
//! The pipeline runs [`spectral`] → [`lifting`] → [`synthesis`] →
//! [`certification`], with [`simulation`] closing the loop on a truncated
//! modal model.

pub mod certification;
pub mod error;
pub mod lifting;
pub mod linalg;
pub mod plant;
pub mod quadrature;
pub mod simulation;
pub mod spectral;
pub mod synthesis;

pub use error::{Error, Result};
pub use plant::{Face, PlantConfig, Side};
pub use spectral::{BasisProvider, Eigenpair, SeparableBasis};
