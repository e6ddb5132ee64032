//! Causal variational principles on matrix-valued measures.
//!
//! Evaluation and minimization of the causal action over discrete measures, the spectral
//! theory of the f = 2 continuum operator, moment measures, discrete fermion systems and
//! homogeneous momentum-space systems.

pub mod causal;
pub mod examples;
pub mod fermion;
pub mod homogeneous;
pub mod io;
pub mod matlin;
pub mod measure;
pub mod optimize;
pub mod quad;
pub mod spectral;

pub use matlin::{CMatrix, Spectrum, C64};
