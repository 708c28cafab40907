//! Incremental policy evaluation with sketched linear systems.
//!
//! The crate provides TD(λ), LSTD(λ), feature-sketched LSTD (LSTD-P),
//! left-sketched LSTD (LSTD-L) and the two quasi-Newton ATD variants
//! (ATD-L, ATD-SVD), together with the sketch families, feature encoders,
//! benchmark environments and the evaluation harness used to compare them.

pub mod agents;
pub mod envs;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod sketch;

pub use agents::{build_agent, Agent, AgentConfig, AgentError, Algorithm};
pub use envs::{Mdp, Policy, Transition};
pub use features::{FeatureMap, FeatureSpec, FeatureVector, StateBounds};
pub use linalg::DenseMatrix;
pub use sketch::{SketchFamily, SketchMatrix, SketchSpec};
