//! Boundary-controlled linearized shallow-water channel under parameter
//! uncertainty: full-order simulation, a space-time reduced-basis metamodel
//! with certified error bounds, and pick-freeze Sobol sensitivity analysis.

pub mod channel;
pub mod cli;
pub mod error;
pub mod pde;
pub mod rb;
pub mod uq;

pub use error::{Error, Result};
