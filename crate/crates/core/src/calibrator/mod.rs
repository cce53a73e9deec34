//! Online calibration: posterior-based change detection and adaptation
//! driving the multi-swarm optimizer over a stream of observations.

pub mod adapt;
pub mod kl;
pub mod online;
pub mod pretrain;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ParamVector;
use crate::edo::PsoConfig;
use crate::error::{Error, Result};
use crate::flow::TrainConfig;
use crate::simulators::SimulatorKind;

pub use adapt::{diverse_select, diverse_select_from, posterior_adapt};
pub use kl::{exceeds, kl_between, kl_divergence, kl_from_logs, KlEstimator};
pub use online::{run_online, segment_objective, OnlineOutcome, RunSeeds};
pub use pretrain::{build_pretrain_dataset, draw_span, pretrain_flow, PretrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "PosEDO")]
    PosEdo,
    #[serde(rename = "PosEDO-CD")]
    PosEdoCd,
    #[serde(rename = "PosEDO-Pre")]
    PosEdoPre,
    #[serde(rename = "DBD-Rand")]
    DbdRand,
    #[serde(rename = "FBCD-Rand")]
    FbcdRand,
    #[serde(rename = "FBCD-Arch")]
    FbcdArch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    Posterior,
    Dbd,
    Fbcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptation {
    Posterior,
    Rand,
    Arch,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::PosEdo,
        Variant::PosEdoCd,
        Variant::PosEdoPre,
        Variant::DbdRand,
        Variant::FbcdRand,
        Variant::FbcdArch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PosEdo => "PosEDO",
            Variant::PosEdoCd => "PosEDO-CD",
            Variant::PosEdoPre => "PosEDO-Pre",
            Variant::DbdRand => "DBD-Rand",
            Variant::FbcdRand => "FBCD-Rand",
            Variant::FbcdArch => "FBCD-Arch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown variant {s:?}")))
    }

    pub fn detection(self) -> Detection {
        match self {
            Variant::PosEdo | Variant::PosEdoCd | Variant::PosEdoPre => Detection::Posterior,
            Variant::DbdRand => Detection::Dbd,
            Variant::FbcdRand | Variant::FbcdArch => Detection::Fbcd,
        }
    }

    pub fn adaptation(self) -> Adaptation {
        match self {
            Variant::PosEdo | Variant::PosEdoPre => Adaptation::Posterior,
            Variant::PosEdoCd | Variant::DbdRand | Variant::FbcdRand => Adaptation::Rand,
            Variant::FbcdArch => Adaptation::Arch,
        }
    }

    pub fn finetunes(self) -> bool {
        matches!(self, Variant::PosEdo | Variant::PosEdoCd)
    }

    pub fn needs_model(self) -> bool {
        self.detection() == Detection::Posterior || self.adaptation() == Adaptation::Posterior
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibratorConfig {
    /// KL threshold.
    pub epsilon: f64,
    /// Posterior draws for the KL estimate and for adaptation candidates.
    pub kl_samples: usize,
    pub estimator: KlEstimator,
    /// Population size at start and after each adaptation.
    pub lambda: usize,
    /// Optimizer iterations per observation step.
    pub iterations: usize,
    pub finetune: TrainConfig,
    pub pso: PsoConfig,
    pub dbd_probes: usize,
    pub fbcd_window: usize,
    pub archive_capacity: usize,
}

impl CalibratorConfig {
    pub fn for_kind(kind: SimulatorKind) -> Self {
        let epsilon = match kind {
            SimulatorKind::BrockHommes => 30.0,
            SimulatorKind::Pgps => 2.0,
        };
        Self {
            epsilon,
            kl_samples: 2000,
            estimator: KlEstimator::MeanLogRatio,
            lambda: 40,
            iterations: 10,
            finetune: TrainConfig {
                max_epochs: 50,
                ..TrainConfig::finetune(0)
            },
            pso: PsoConfig::default(),
            dbd_probes: 5,
            fbcd_window: 3,
            archive_capacity: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::ConfigInvalid("epsilon must be >= 0".into()));
        }
        if self.lambda == 0 || self.iterations == 0 || self.kl_samples == 0 {
            return Err(Error::ConfigInvalid(
                "lambda, iterations and kl_samples must be >= 1".into(),
            ));
        }
        if self.kl_samples < self.lambda {
            return Err(Error::ConfigInvalid("kl_samples must be >= lambda".into()));
        }
        if self.lambda > self.pso.max_particles {
            return Err(Error::ConfigInvalid(format!(
                "lambda {} exceeds the particle cap {}",
                self.lambda, self.pso.max_particles
            )));
        }
        if self.dbd_probes == 0 || self.fbcd_window == 0 {
            return Err(Error::ConfigInvalid("dbd_probes and fbcd_window must be >= 1".into()));
        }
        self.finetune.validate()?;
        self.pso.validate()
    }
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        Self::for_kind(SimulatorKind::BrockHommes)
    }
}

/// One row of the per-iteration fitness log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub observation_step: usize,
    pub iteration: usize,
    pub best_fitness: f64,
    /// Objective evaluations used so far in the run.
    pub evals_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRecord {
    pub observation_step: usize,
    /// `None` when a log-density was not finite (counted as a change).
    pub value: Option<f64>,
}

/// A detected segment `start..=end` and its calibrated parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub start: usize,
    pub end: usize,
    pub theta: ParamVector,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub instance_id: String,
    pub variant: Variant,
    pub seed: u64,
    pub epsilon: f64,
    /// Detected change points (first steps of new segments), increasing.
    pub change_points: Vec<usize>,
    pub segments: Vec<SegmentRecord>,
    /// Best parameter found at each observation step.
    pub held_thetas: Vec<ParamVector>,
    pub held_fitness: Vec<f64>,
    pub kl_trace: Vec<KlRecord>,
    pub trace: Vec<TraceRow>,
    /// Optimizer evaluations per observation step.
    pub step_evals: Vec<usize>,
    /// Extra evaluations spent by probe-based detection.
    pub detector_evals: usize,
    pub step_seconds: Vec<f64>,
}

impl CalibrationRecord {
    pub fn horizon(&self) -> usize {
        self.held_thetas.len()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fitness log with columns
    /// `observation_step,iteration,best_fitness,evals_used`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
        let mut r = csv::Reader::from_reader(input);
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }

    /// Change points a replay of the KL trace at threshold `epsilon` yields.
    pub fn replay_change_points(&self, epsilon: f64) -> Vec<usize> {
        self.kl_trace
            .iter()
            .filter(|k| k.value.is_none_or(|v| exceeds(v, epsilon)))
            .map(|k| k.observation_step)
            .collect()
    }
}
