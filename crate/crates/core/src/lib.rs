//! Deciding whether a social choice function over a finite type space can be
//! implemented by a sequential-move mechanism, and building one when it can.
//!
//! Five solution notions are supported: weak dominance (SP), μ-perfect
//! Bayesian equilibrium, max-min equilibrium, obvious dominance (OSP) and
//! strong-obvious dominance (SOSP). The additive notions reduce to a finite
//! inequality system on the direct mechanism; the monotonic ones reduce to
//! achievability of a canonical disclosure operator, from which a round-based
//! disclosure game is synthesized. Every positive verdict is re-checked
//! against the definitional game-theoretic condition.
//!
//! Everything is generic over an exact [`Scalar`]; the aliases below fix the
//! usual choice of arbitrary-precision rationals.

pub mod canonical;
pub mod cli;
pub mod deciders;
pub mod game;
pub mod model;
pub mod notions;
pub mod oracle;
pub mod scalar;
pub mod synthesis;

pub mod fixtures;

pub use model::{ConditionalBelief, Diagnostic, Environment, EnvironmentFile, ModelError, PlayerId, State, StateSet};
pub use notions::{NotionId, NotionProperties};
pub use scalar::Scalar;

/// Arbitrary-precision rationals.
pub type Rational = num_rational::BigRational;
/// Machine-word rationals, for callers that know their utilities stay small.
pub type SmallRational = num_rational::Ratio<i64>;
pub type RationalEnvironment = Environment<Rational>;
