//! Structured backward errors on matrix manifolds by penalty continuation
//! and Riemannian trust region.

pub mod ambient;
pub mod continuation;
pub mod manifold;
pub mod precond;
pub mod problem;
pub mod trust_region;

pub use ambient::{Ambient, Pattern};
pub use continuation::{penalty_continuation, penalty_continuation_bundle, ContinuationReport, RiemannOptions, StageLog};
pub use manifold::{Manifold, Point, Tangent};
pub use problem::{HessianMode, PenaltyProblem};
pub use trust_region::{trust_region_minimize, TrOptions, TrReport, TrStop};
