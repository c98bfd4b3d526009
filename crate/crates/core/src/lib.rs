//! Simulation workbench for comparing SAR measurement pipelines: a
//! single-probe scanning system and a probe array with plane-wave-expansion
//! field reconstruction, checked against an analytic dipole-array oracle.

pub mod cli;
pub mod em;
pub mod error;
pub mod fft2;
pub mod grid;
pub mod interp;
pub mod parallel;
pub mod pwe;
pub mod rng;
pub mod sar;
pub mod source;
pub mod traditional;
pub mod uncertainty;

pub use error::{Error, Result};
