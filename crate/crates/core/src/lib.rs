//! Finite ultrametric measure spaces and the depth-indexed semigroup
//! calculus on them: canonical forms, concatenation, truncation and prime
//! decomposition, distance-matrix polynomials, and seeded samplers for
//! infinitely divisible random forests.

pub mod dec;
pub mod dendrogram;
pub mod error;
pub mod forest;
pub mod generate;
pub mod io;
pub mod marked;
pub mod metric;
pub mod polynomial;
pub mod rng;
pub mod semigroup;
pub mod surrogate;
pub mod transport;

pub use dec::Dec;
pub use dendrogram::{canonicalize, is_isomorphic, validate, CanonicalEncoding, Dendrogram, Mark, Node};
pub use error::{Error, Result};
