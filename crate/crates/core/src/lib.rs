//! Posterior-assisted evolutionary dynamic optimization for the online
//! calibration of agent-based simulators.
//!
//! A conditional masked autoregressive flow learns `p(θ | summary statistics)`
//! offline. During online calibration the posterior flags regime changes in
//! the observed stream (a Monte-Carlo KL test between the posterior given the
//! latest window and given the segment history) and re-seeds a multi-swarm
//! PSO with a diverse subset of posterior draws.
//!
//! Module map:
//! - [`data`], [`stats`]: windows, parameter boxes, summary statistics, discrepancy;
//! - [`simulators`]: Brock–Hommes and the PGPS limit-order-book model;
//! - [`flow`]: the conditional MAF with hand-written reverse-mode gradients;
//! - [`edo`]: multi-swarm PSO plus the DBD/FBCD detectors and Rand/Arch adaptation;
//! - [`calibrator`]: KL change detection, posterior adaptation, the online loop;
//! - [`bench`]: instances, metrics, detection densities, experiment matrix;
//! - [`config`]: the JSON run configuration.

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod calibrator;
pub mod config;
pub mod data;
pub mod edo;
pub mod error;
pub mod flow;
pub mod seed;
pub mod simulators;
pub mod stats;

pub use bench::{InstanceSpec, MatrixReport};
pub use calibrator::{run_online, CalibrationRecord, CalibratorConfig, RunSeeds, Variant};
pub use config::RunConfig;
pub use data::{ObservationStream, ParamSpace, ParamVector, TimeSeriesWindow};
pub use error::{Error, Result};
pub use flow::{FlowModel, TrainConfig};
pub use simulators::{SimulatorKind, SimulatorSpec};
pub use stats::{discrepancy, summary_stats, SummaryStats};
