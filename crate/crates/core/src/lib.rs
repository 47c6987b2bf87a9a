//! Chance-constrained model-based reinforcement learning with a separated
//! proportional-integral Lagrange multiplier controller.
//!
//! The crate is `no_std` (with `alloc`): it contains only the numerical
//! core — dynamics, networks, taped differentiation, rollouts, the
//! multiplier controller and the training loop. File formats, CSV logs and
//! the experiment CLI live in the companion `spil-cli` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod controller;
pub mod env;
pub mod error;
pub mod matrix;
pub mod net;
pub mod rng;
pub mod rollout;
pub mod surrogate;
pub mod tape;
pub mod trainer;

pub use controller::{ControlMode, ControllerGains, MultiplierState};
pub use env::{EnvParams, SystemState};
pub use error::{CoreError, CoreResult};
pub use net::{GradientAccumulator, NetworkParams};
pub use rng::StreamRng;
pub use rollout::{RolloutBatch, StreamKey};
pub use surrogate::SurrogateParams;
pub use trainer::{LogRow, TrainConfig, TrainError, TrainLog, TrainOutput};
