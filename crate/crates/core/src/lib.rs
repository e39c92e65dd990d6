//! Boosting variational inference over mixtures of mean-field Gaussian or
//! Laplace components, with Frank-Wolfe, away-step and pairwise updates and
//! a Monte-Carlo approximate backtracking step size.

pub mod corrective;
pub mod density;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod exec;
pub mod lmo;
pub mod mixture;
pub mod rng;
pub mod stepsize;
pub mod targets;

pub use corrective::{DirectionChoice, DirectionKind, Variant};
pub use density::{Component, Family};
pub use engine::{boost, finite_atom_boost, BoostOutcome, IterationTrace, RunConfig, StepEngine};
pub use error::{BviError, Result};
pub use estimators::{Growth, McBudget};
pub use exec::Exec;
pub use lmo::LmoConfig;
pub use mixture::Mixture;
pub use rng::SeedTree;
pub use stepsize::{BacktrackState, LineSearchConfig, StepKind, SurrogateMode};
pub use targets::Target;
