//! Cooperative data sampling for robot fleets.
//!
//! A fleet of robots observes class-labeled data through imperfect perception
//! and uploads a bounded number of samples per round to a shared cloud
//! dataset. The goal is to steer the cloud's per-class counts toward a target
//! composition. This crate provides:
//!
//! - the fleet model: class distributions, confusion channels, and the
//!   per-robot feasible data matrix that maps predicted-label picks to
//!   expected true-label contributions ([`model`]);
//! - a projected-gradient solver for least-squares problems over budgeted
//!   nonnegative allocations, for one robot or a whole fleet ([`solver`]);
//! - sampling policies from naive to fully coordinated, including a
//!   best-response scheme in which robots exchange planned contributions and
//!   iterate to a joint optimum ([`policies`]);
//! - a message transport that tallies the communication cost of coordination
//!   under broadcast and ring topologies ([`message`]);
//! - a deterministic round-based simulator ([`sim`]) with scenario
//!   configuration ([`config`]), metrics emission ([`metrics`]), and
//!   round-by-round checks of the coordination guarantees ([`verify`]).

pub mod config;
pub mod error;
pub mod message;
pub mod metrics;
pub mod model;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod solver;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
