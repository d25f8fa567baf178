//! Distributed hypothesis testing over directed, possibly time-varying
//! networks.
//!
//! Agents hold a private Bayesian *local* belief and a broadcast *actual*
//! belief. The min-rule lets low beliefs on a false hypothesis propagate
//! from the agents able to rule it out; its local-filtering variant trims
//! extreme neighbor values to tolerate `f`-local Byzantine agents. Linear and
//! log-linear opinion pooling are included as baselines.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod error;
pub mod graphs;
pub mod logmath;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod rng;
pub mod rules;

pub use adversary::{f_local, AdversarySpec, Strategy};
pub use engine::{run, sweep, sweep_map, Priors, RecordSpec, Simulation, SimulationConfig, TrajectoryRecord};
pub use error::{Error, Result};
pub use graphs::{certify, CertificationReport, CertifyMode, DirectedGraph, GraphSchedule};
pub use model::{AgentLikelihood, HypothesisSet, ObservationModel};
pub use rules::{BeliefState, ConsensusWeights, InboxMessage, Rule};
