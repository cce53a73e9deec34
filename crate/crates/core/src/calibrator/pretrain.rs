//! Offline pretraining: simulate `(θ, R(simulated span))` pairs over random
//! spans and fit the flow.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{train, Dataset, FlowModel, Sample, TrainConfig, TrainReport};
use crate::seed;
use crate::simulators::{simulate_stats, SimulatorSpec};
use crate::stats::{CondNorm, N_STATS};

/// Longest simulated span, in observation steps.
pub const MAX_SPAN: usize = 8;

/// `(start, end)` with `start ~ U{1..T−1}` and length `~ U{1..min(8, T−start)}`.
pub fn draw_span<R: Rng + ?Sized>(horizon: usize, rng: &mut R) -> (usize, usize) {
    let start = rng.random_range(1..horizon);
    let len = rng.random_range(1..=MAX_SPAN.min(horizon - start));
    (start, start + len - 1)
}

/// `count` pairs with `θ` uniform over the box. Sample `m` depends only on
/// `(seed, m)`, so the set is reproducible regardless of thread count.
pub fn build_pretrain_dataset(spec: &SimulatorSpec, count: usize, horizon: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::ConfigInvalid("pretrain count must be >= 1".into()));
    }
    if horizon < 2 {
        return Err(Error::ConfigInvalid("pretrain horizon must be >= 2".into()));
    }
    let samples = (0..count)
        .into_par_iter()
        .map(|m| {
            let mut rng = seed::rng_from(seed, m as u64);
            for _ in 0..100 {
                let theta = spec.param_space.sample_uniform(&mut rng);
                let (start, end) = draw_span(horizon, &mut rng);
                let sim_seed: u64 = rng.random();
                match simulate_stats(spec, &theta, start, end, sim_seed) {
                    Ok(s) if s.is_finite() => return Ok(Sample::pretrain(theta.0, s.0.to_vec())),
                    Ok(_) | Err(Error::BhDiverged { .. }) | Err(Error::NonFiniteInput) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::ConfigInvalid(format!(
                "pretrain sample {m}: simulator kept diverging"
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(samples))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: FlowModel,
    pub dataset: Dataset,
    pub report: TrainReport,
}

/// Fits the condition normalization on `dataset`, initializes a flow with
/// `flow_seed` and trains it.
pub fn pretrain_flow(
    dataset: Dataset,
    d: usize,
    hidden: usize,
    n_layers: usize,
    flow_seed: u64,
    train_cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    let mut rng = seed::rng_from(flow_seed, 0);
    let mut model = FlowModel::new(d, N_STATS, hidden, n_layers, seed::derive(flow_seed, 1), &mut rng);
    model.set_cond_norm(CondNorm::fit(dataset.conditions(), N_STATS));
    let report = train(&mut model, &dataset, train_cfg)?;
    Ok(PretrainOutcome { model, dataset, report })
}
