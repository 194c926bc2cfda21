//! Discrete-time simulator for online placement, processing and routing of
//! service chains over a VM platform with random prices and arrivals.
//!
//! Decisions come from stochastic dual gradients on the queue backlogs
//! ([`Policy::Alg1`]), a learn-and-adapt variant that adds a learned
//! multiplier ([`Policy::Alg2`]), or a mean-price heuristic ([`Policy::Heu`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod algorithms;
pub mod bounds;
pub mod config;
pub mod dual;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod report;

pub use config::Scenario;
pub use engine::{run, Simulation, Trace};
pub use error::{Error, Result};
pub use model::{ChainSet, Distributions, PlacementMode, Policy, SimConfig, Topology};
