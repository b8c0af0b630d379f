//! Counterfactual failure synthesis for manipulation rollouts: a kinematic surrogate
//! world, keyframe-local perturbations, a four-part verifier gate, structured fix
//! labels, correction replay and text/correction metrics.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`). The aliases below
//! fix the scalar to `f64`, which is what the pipeline and the surrogate use.

pub mod eval;
pub mod label;
pub mod model;
pub mod perturb;
pub mod pipeline;
pub mod recovery;
pub mod scalar;
pub mod stats;
pub mod transport;
pub mod verify;
pub mod world;

pub use scalar::Scalar;

pub type Rollout = model::Rollout<f64>;
pub type Action = model::Action<f64>;
pub type EndEffectorState = model::EndEffectorState<f64>;
pub type JointTrace = model::JointTrace<f64>;
pub type TrackSet = model::TrackSet<f64>;

pub type RolloutF32 = model::Rollout<f32>;
pub type TrackSetF32 = model::TrackSet<f32>;
