//! Numerical library for anisotropic nonlocal phase-field dislocation
//! energies: dyadic layer kernels, the quadratic interaction form, line
//! tensions and their relaxation upper bounds, and multiscale analysis of
//! slip fields.

pub mod energy;
pub mod error;
pub mod field;
pub mod harness;
pub mod kernels;
pub mod line_tension;
pub mod multiscale;
pub mod quad;
pub mod relaxation;

pub use error::{Error, Result};
