//! Post-storm distribution restoration toolkit.
//!
//! The crate covers the full loop from hazard to dispatch benchmark:
//!
//! - [`hazard`]: wind/flood surrogates, fragility curves, correlated failure
//!   draws, progressive ticket arrivals, and repair-time priors, compiled
//!   into replayable [`hazard::HazardScenario`] files.
//! - [`feeder`]: radial feeder and road-graph models, energization and
//!   capacity screening, travel times, and the per-crew feasibility mask.
//! - [`env`]: the event-driven restoration environment (clock, joint crew
//!   actions, dense reward, episode metrics, trajectory traces).
//! - [`policy`]: a recurrent actor-critic over padded entity slates with
//!   feasibility-masked categorical heads.
//! - [`trainer`]: masked PPO with GAE, a hand-rolled Adam step, gradient
//!   verification, and a train/evaluate loop.
//! - [`baselines`]: value-per-time heuristics and a short-horizon exact
//!   enumeration oracle.
//! - [`harness`]: scenario generation, benchmark evaluation, and
//!   median/IQR reporting behind the `stormcrew` CLI.

pub mod baselines;
pub mod env;
pub mod error;
pub mod feeder;
pub mod harness;
pub mod hazard;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
