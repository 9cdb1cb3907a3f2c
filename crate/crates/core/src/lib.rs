//! Core of the Policy Resonance laboratory.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure computation:
//!
//! - [`env`]: the FME diagnostic environment (Lv-A static action, Lv-B team
//!   bandit, Lv-C capacity-limited responsibility assignment).
//! - [`policy`]: a shared one-hidden-layer softmax policy over
//!   `level one-hot ⊕ agent one-hot` inputs with hand-derived gradients.
//! - [`resonance`]: the Policy Resonance sampling plugin and its `η` schedule.
//! - [`trainers`]: a PPO-style multi-agent trainer, an additive value
//!   decomposition baseline with ε-greedy exploration, and the two-stage loop.
//! - [`oracles`]: closed-form and brute-force expectations used to diagnose
//!   diffusion of responsibility.
//!
//! All randomness flows through explicitly seeded [`rng::LabRng`] streams, so
//! every run is a pure function of its inputs.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod env;
pub mod error;
pub mod math;
pub mod oracles;
pub mod policy;
pub mod resonance;
pub mod rng;
pub mod trainers;

pub use error::{Error, Result};
