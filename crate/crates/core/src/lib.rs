//! ISAC-driven digital twin for an autonomous guided vehicle.
//!
//! The crate models one access point that senses a vehicle with an OFDM radar
//! and serves it over an mmWave downlink, splitting a fixed subcarrier budget
//! between the two functions every query interval (QI). A reinforcement
//! learning controller drives the vehicle (the continuous mountain-car plant)
//! from the twin's belief and chooses how accurate that belief must be.
//!
//! Modules, bottom-up:
//!
//! - [`dynamics`]: the plant, its goal test and base reward.
//! - [`sensing`]: radar link budget, synthetic frames, periodogram estimation, CRBs.
//! - [`comms`]: large-scale fading, MMSE pilot estimation, rate and rate-driven demand.
//! - [`uncertainty`]: polar-to-position moment propagation and sensing demand.
//! - [`allocator`]: communication-priority / sensing-priority / equal splits.
//! - [`agent`]: squashed-Gaussian actor-critic trained with clipped PPO.
//! - [`sim`]: the per-QI loop, batch experiments and their file formats.

pub mod agent;
pub mod allocator;
pub mod comms;
pub mod dynamics;
pub mod error;
pub mod sensing;
pub mod sim;
pub mod uncertainty;
pub mod units;

pub use error::{Error, Result};
