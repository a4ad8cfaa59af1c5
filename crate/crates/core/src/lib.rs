//! Spectral measures on the unit circle and their Verblunsky coefficients.
//!
//! The crate connects three pictures of the same object: a probability
//! measure on the circle, its recursion coefficients, and the unitary
//! matrices (CMV and GGT) built from those coefficients.  On top of that
//! sit sum rules tying relative entropy of a measure to series in the
//! coefficients, symbolic expansion of matrix-power traces, membership
//! classifiers for coefficient sequences, and a circular-ensemble sampler.

pub mod ensemble;
pub mod error;
pub mod ladder;
pub mod measures;
pub mod opmatrix;
pub mod seqcond;
pub mod sumrules;
pub mod tracepoly;
pub mod verblunsky;

pub use error::{Error, Result};
