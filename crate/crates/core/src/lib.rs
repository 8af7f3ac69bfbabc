//! Slotted simulation of a caching-enabled IoT status-update system and a
//! tabular expected-Sarsa learner that decides when the edge caching node
//! (ECN) should ask its sensor for a fresh update.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: Rayleigh-fading outage model of the sensor to ECN link.
//! * [`environment`]: request generation, AoI evolution, cost and reward.
//! * [`qtable`]: dense action-value storage with mixed-radix state indexing
//!   and a binary persistence format.
//! * [`learner`]: the EAU training loop (expected Sarsa, annealed exploration).
//! * [`policies`]: baseline and learned decision rules.
//! * [`harness`]: seeded evaluation, parameter sweeps and CSV output.
//!
//! AoI is carried in integer slot units everywhere except costs and reports,
//! where it is converted to seconds. Energy is expressed in millijoules.

pub mod channel;
pub mod config;
pub mod environment;
pub mod error;
pub mod harness;
pub mod learner;
pub mod policies;
pub mod qtable;
pub mod streams;
pub mod units;

pub use error::{Error, Result};
