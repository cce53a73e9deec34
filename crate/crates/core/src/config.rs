//! JSON run configuration.
//!
//! Every field has a default. Defaults depend on `simulator.kind`, so a
//! document is read by first building the defaults for its kind, overlaying
//! the document key by key (arrays replace, objects merge), and then decoding
//! strictly: unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::standard_suite;
use crate::calibrator::{CalibratorConfig, Variant};
use crate::data::ParamSpace;
use crate::error::{Error, Result};
use crate::flow::{TrainConfig, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use crate::seed::{self, tag};
use crate::simulators::{SimulatorKind, SimulatorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    pub hidden: usize,
    pub layers: usize,
    /// Number of simulated `(θ, statistics)` pairs.
    pub pretrain_count: usize,
    /// Observation horizon the pretraining spans are drawn from.
    pub pretrain_horizon: usize,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchBlock {
    /// Instance file (JSON array). When absent the standard suite is generated.
    pub instances: Option<PathBuf>,
    /// Generated instances per change count.
    pub per_count: usize,
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    /// Thresholds of the detection sweep.
    pub epsilons: Vec<f64>,
}

/// Named base seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsBlock {
    /// Instance schedules and observed-stream noise.
    pub stream: u64,
    /// Pretraining data, flow initialization and permutations.
    pub flow: u64,
    /// Single calibration runs: optimizer, detection and fine-tuning streams
    /// derive from it.
    pub run: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsBlock {
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Defaults to `<output_dir>/pretrain_dataset.csv`.
    pub pretrain_data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub simulator: SimulatorSpec,
    pub flow: FlowBlock,
    pub calibrator: CalibratorConfig,
    pub bench: BenchBlock,
    pub seeds: SeedsBlock,
    pub paths: PathsBlock,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl RunConfig {
    pub fn for_kind(kind: SimulatorKind) -> Self {
        let (horizon, _) = standard_suite(kind);
        Self {
            simulator: SimulatorSpec::new(kind),
            flow: FlowBlock {
                hidden: DEFAULT_HIDDEN,
                layers: DEFAULT_LAYERS,
                pretrain_count: 100_000,
                pretrain_horizon: horizon,
                train: TrainConfig::pretrain(0),
            },
            calibrator: CalibratorConfig::for_kind(kind),
            bench: BenchBlock {
                instances: None,
                per_count: 3,
                variants: Variant::ALL.to_vec(),
                repetitions: 10,
                epsilons: vec![5.0, 15.0, 30.0, 100.0, 120.0],
            },
            seeds: SeedsBlock {
                stream: 1,
                flow: 2,
                run: 3,
            },
            paths: PathsBlock {
                output_dir: PathBuf::from("out"),
                checkpoint: None,
                pretrain_data: None,
            },
            workers: 0,
        }
    }

    /// Decodes a document over the defaults of its simulator kind.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let Value::Object(ref top) = doc else {
            return Err(Error::ConfigInvalid("config must be a JSON object".into()));
        };
        let kind = match top.get("simulator").and_then(|s| s.get("kind")) {
            None => SimulatorKind::BrockHommes,
            Some(k) => {
                serde_json::from_value(k.clone()).map_err(|e| Error::ConfigInvalid(format!("simulator.kind: {e}")))?
            }
        };
        let mut merged = serde_json::to_value(Self::for_kind(kind))?;
        overlay(&mut merged, doc);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulator;
        ParamSpace::new(sim.param_space.lower.clone(), sim.param_space.upper.clone())
            .map_err(|e| Error::ConfigInvalid(format!("simulator.param_space: {e}")))?;
        if sim.dims() != sim.kind.dims() {
            return Err(Error::ConfigInvalid(format!(
                "simulator.param_space: {} needs {} bounds, got {}",
                sim.kind.name(),
                sim.kind.dims(),
                sim.dims()
            )));
        }
        if sim.window_len < 2 || sim.vars == 0 {
            return Err(Error::ConfigInvalid(
                "simulator.window_len must be >= 2 and vars >= 1".into(),
            ));
        }
        if self.flow.hidden == 0 || self.flow.layers == 0 {
            return Err(Error::ConfigInvalid("flow.hidden and flow.layers must be >= 1".into()));
        }
        if self.flow.pretrain_count == 0 || self.flow.pretrain_horizon < 2 {
            return Err(Error::ConfigInvalid(
                "flow.pretrain_count must be >= 1 and pretrain_horizon >= 2".into(),
            ));
        }
        self.flow.train.validate()?;
        self.calibrator.validate()?;
        if self.bench.variants.is_empty() {
            return Err(Error::ConfigInvalid("bench.variants must not be empty".into()));
        }
        if self.bench.repetitions == 0 || self.bench.per_count == 0 {
            return Err(Error::ConfigInvalid(
                "bench.repetitions and bench.per_count must be >= 1".into(),
            ));
        }
        if self.bench.epsilons.is_empty() {
            return Err(Error::ConfigInvalid("bench.epsilons must not be empty".into()));
        }
        if self.bench.epsilons.iter().any(|e| e.is_nan() || *e < 0.0) {
            return Err(Error::ConfigInvalid("bench.epsilons must be >= 0".into()));
        }
        Ok(())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("checkpoint.json"))
    }

    pub fn pretrain_data_path(&self) -> PathBuf {
        self.paths
            .pretrain_data
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("pretrain_dataset.csv"))
    }

    /// Seed of the pretraining simulations.
    pub fn pretrain_data_seed(&self) -> u64 {
        seed::derive(self.seeds.flow, tag::PRETRAIN)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_kind(SimulatorKind::BrockHommes)
    }
}

fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
