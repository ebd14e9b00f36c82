//! Exact analysis of finite non-sequential stochastic teams.
//!
//! A model is a finite intrinsic model: exogenous signals with an exact
//! rational prior, per-DM action and measurement alphabets, measurement maps
//! that may read other DMs' actions, and a cost. The crate decides the
//! information-structure properties (solvability, deadlock-freeness, causal
//! implementability, causality, random causal sequentiality), builds the
//! imaginary sequential model and static reductions, and certifies each
//! construction by exhaustive enumeration.

pub mod dsl;
pub mod fixtures;
pub mod generate;
pub mod model;
pub mod optimize;
pub mod ordering;
pub mod properties;
pub mod reduction;
pub mod sigma;
pub mod simulate;

pub type Rational = num_rational::BigRational;

pub use model::{validate, IntrinsicModel, ModelSpec, PolicyProfile, Scope};
pub use ordering::OrderingFunction;
