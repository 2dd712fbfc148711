//! Thermal-aware task scheduling for NoC-based mesh multicores.
//!
//! The crate bundles a discrete-event simulator of a tiled mesh chip (stochastic
//! Poisson arrivals, random inter-task pairings over xy routes, a lumped RC
//! thermal lattice), the semi-Markov average-reward Q-learning schedulers with
//! RBF function approximation (`DVFS-Enabled` and `IR`), the four baselines
//! (RAND, TBO, LCT, LDT), an exact relative value iteration solver for small
//! SMDPs, and the experiment plumbing that drives sweeps and writes artifacts.

pub mod error;
pub mod experiment;
pub mod features;
pub mod levels;
pub mod metrics;
pub mod oracle;
pub mod schedulers;
pub mod sim;
pub mod thermal;
pub mod topology;
pub mod workload;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, SchedulerKind};
pub use features::{FeatureVector, RbfBank};
pub use levels::{VfLevel, VfLevels};
pub use metrics::RunSummary;
pub use sim::{Action, SystemState, TransitionRecord};
pub use thermal::{ThermalField, ThermalParams};
pub use topology::{Mesh, Route};
pub use workload::{TaskTypeTable, TaskInstance};
