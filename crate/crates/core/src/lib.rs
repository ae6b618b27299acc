//! Simulation and inversion toolkit for two-dimensional magnetoacoustic
//! tomography with magnetic induction.

pub mod acoustic;
pub mod current;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod inversion;
pub(crate) mod io;
pub mod mesh;
pub mod sparse;

pub use error::{MatmiError, Result};
