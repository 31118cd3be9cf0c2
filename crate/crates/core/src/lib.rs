//! Bayesian analysis of set-valued data.
//!
//! Each observation is a size-`n` subset of a finite universe. The crate
//! models observations through their Hamming distance to a consensus subset,
//! infers that consensus together with a dispersion parameter, scores each
//! observation with a posterior p-value, and fits a two-level model in which
//! every laboratory has its own latent consensus.

pub mod alpha;
pub mod combinatorics;
pub mod distributions;
pub mod error;
pub mod math;
pub mod model;
pub mod one_stage;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod simulate;
pub mod subset;
pub mod two_stage;

pub use distributions::{
    BernoulliPair, DispersionFamily, FamilyKind, HammingModel, Monotonicity,
};
pub use error::{Error, Result};
pub use model::ModelSpec;
pub use prior::DispersionPrior;
pub use subset::{GroundSet, Subset};
