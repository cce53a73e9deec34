//! Evolutionary dynamic optimization engine and baseline strategies.

pub mod adapt;
pub mod detect;
pub mod pso;

pub use adapt::{arch_adapt, rand_adapt, Archive, ArchiveEntry};
pub use detect::{fbcd_detect, latin_hypercube, DetectorProbe};
pub use pso::{optimize, Evaluation, Objective, OptimizeOutcome, Particle, PsoConfig, SwarmSet};
