//! Learning to stabilize a non-stationary opponent.
//!
//! An ego agent repeatedly interacts with a scripted opponent whose hidden
//! strategy evolves between interactions. The crate provides the pieces
//! needed to learn a latent model of that strategy, reward the ego agent
//! for keeping it fixed, and train a soft actor-critic policy on top:
//!
//! - [`types`] and [`replay`]: trajectories, latent strategies and interaction storage.
//! - [`nn`]: dense networks with reverse-mode gradients and Adam.
//! - [`latent`]: trajectory encoder, dynamics/reward decoder, straight-through Gumbel sampling.
//! - [`stability`]: stability rewards and the task/stability blend.
//! - [`agents`]: soft actor-critic and the agent configurations built on it.
//! - [`envs`]: hidden-parameter environments with scripted opponents.
//! - [`trainer`]: the per-seed interaction loop and evaluation.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agents;
pub mod envs;
pub mod fixtures;
mod error;
pub mod latent;
pub mod linalg;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod stability;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
