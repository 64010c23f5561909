//! Numerical first-order calculus on cable systems and tree-like fractals.
//!
//! The crate covers exact metric-tree geometry ([`tree`]), reference measures
//! and volume profiles ([`measure`]), example spaces ([`generators`]),
//! piecewise-linear calculus ([`calculus`]), bump functions and partitions of
//! unity ([`partition`]), energy functionals ([`functionals`]) and the heat
//! semigroup of the Kirchhoff Laplacian ([`heat`]).

pub mod calculus;
pub mod error;
pub mod functionals;
pub mod generators;
pub mod heat;
pub mod measure;
pub mod partition;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use tree::{CableSystem, CableSystemBuilder, EdgePiece, PathSegment, TreePoint};
pub use calculus::PlFunction;
pub use generators::{generate, GeneratorSpec};
pub use measure::{MeasureWeights, VolumeProfile};
