//! Guidance agent, adversarial attacks, attribution and attack detection for
//! a drone flying through a 2D LiDAR arena.
//!
//! The pipeline: [`sim`] renders depth images for an arena, [`ddpg`] trains an
//! actor-critic agent (optionally shaped by [`apf`]), [`attack`] perturbs its
//! depth input, [`xai`] attributes its yaw decisions, and [`detectors`] learn
//! to flag attacked steps from those attributions. [`harness`] ties the stages
//! together behind configs, seeds and manifests.

pub mod apf;
pub mod attack;
pub mod ddpg;
pub mod detectors;
mod error;
pub mod harness;
pub mod records;
pub mod runner;
pub mod seed;
pub mod sim;
pub mod xai;

pub use error::Error;
pub use uavxai_nn::exec::Exec;

pub type Result<T, E = Error> = std::result::Result<T, E>;
