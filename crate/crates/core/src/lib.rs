//! Planning-guided preference optimization for text agents at desk scale.
//!
//! The crate covers the whole loop: pseudocode plans ([`plan`]), plan
//! distillation from ReAct-style trajectories ([`distill`]), seeded text
//! environments ([`env`]), an exact-likelihood sequence policy ([`policy`]),
//! planning-oriented rewards ([`reward`]), contrastive pair collection
//! ([`collect`]), the DPO/SFT loss stack ([`optimize`]) and the iterative
//! training harness ([`harness`]).
//!
//! Numerical code is generic over [`Scalar`] (`f32`/`f64`); rewards are exact
//! rationals ([`Reward`]).

pub mod collect;
pub mod distill;
pub mod env;
mod error;
pub mod harness;
pub(crate) mod http;
pub mod optimize;
pub mod plan;
pub mod policy;
pub mod reward;
mod scalar;
pub mod trajectory;

pub use error::Error;
pub use scalar::Scalar;

/// Exact outcome reward in [0, 1].
pub type Reward = num_rational::Rational64;

/// Policy parameters in double precision, the default everywhere in the harness.
pub type Policy = policy::PolicyParams<f64>;
/// Single-precision policy parameters.
pub type Policy32 = policy::PolicyParams<f32>;
/// Sparse gradient in double precision.
pub type Gradient = policy::SparseGrad<f64>;
