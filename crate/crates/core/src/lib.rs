//! Trace-minimizing decompositions of even-degree polynomials: moment relaxations,
//! semidefinite solving, point extraction and uniqueness certificates.

pub mod certificates;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod moment;
pub mod monomial;
pub mod poly;
pub mod relaxation;
pub mod sdp;

pub use error::{GramianError, Result};
pub use monomial::{MonomialBasis, MultiIndex};
pub use poly::{Decomposition, MomentSequence, Polynomial, SymmetricTensor};
