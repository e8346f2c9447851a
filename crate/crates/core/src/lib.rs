//! Action-conditional video prediction with label-routed capsules.
//!
//! [`Model`] holds either the capsule network or the concatenation baseline;
//! [`train`] fits it on simulator datasets, [`eval`] scores rollouts and
//! [`session`] keeps branching rollout trees for interactive use.

pub mod baseline;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod session;
pub mod train;

pub use config::{ModelConfig, ModelKind};
pub use error::{CoreError, Result};
pub use model::{frames_tensor, tensor_frames, HiddenState, Model, SlotState};
