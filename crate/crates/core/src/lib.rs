//! Property A(J,p) witness families, dyadic L^p embeddings, Poincaré
//! certificates and distortion oracles on finite metric measure spaces.
//!
//! The modules build on each other in this order:
//!
//! - [`space`]: finite metric measure spaces, balls, volumes, growth.
//! - [`generators`]: benchmark graphs (trees, cycles, Laakso, expanders, ...).
//! - [`property_a`]: witness families `ψ_{n,x}` and their profiles `J`.
//! - [`embed`]: dyadic embeddings and their compression/dilation profiles.
//! - [`poincare`]: Poincaré certificates and the lower bounds they imply.
//! - [`oracle`]: independent distortion brackets for cross-checking.

pub mod embed;
pub mod generators;
pub mod oracle;
pub mod poincare;
pub mod property_a;
pub mod space;
pub mod util;

pub use space::{FiniteSpace, Graph};
