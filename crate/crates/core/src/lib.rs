//! Lie-algebraic discrete-time systems: structure-constant algebras,
//! quotient machinery, word-series dynamics, stability certificates and
//! sampled-data transforms.

pub mod algebra;
pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod quotient;
pub mod sampling;
pub mod scenario;
pub mod stability;

pub use algebra::{ChainKind, Element, IdealChain, LieAlgebra, MuKind, Subspace};
pub use error::{Error, Result};
pub use nalgebra;
