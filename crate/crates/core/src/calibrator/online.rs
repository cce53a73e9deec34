//! The online loop. Per observation step `T_c` with open segment `τ..T_c`:
//!
//! 1. optimize the discrepancy over windows `τ..=T_c` (fixed evaluation seed);
//! 2. fine-tune the flow on the pairs simulated in step 1 (if enabled);
//! 3. if `T_c ≠ τ`, run the variant's detector; on a change, close segment
//!    `τ..T_c−1` with its held parameter, archive it, start a new segment at
//!    `T_c` and re-initialize the population with the variant's adaptation.
//!
//! Every step spends exactly `population × iterations` optimizer evaluations
//! whatever the variant; probe-based detection is accounted separately.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adapt::posterior_adapt;
use super::kl::{exceeds, kl_divergence};
use super::{Adaptation, CalibrationRecord, CalibratorConfig, Detection, KlRecord, SegmentRecord, TraceRow, Variant};
use crate::data::{ObservationStream, ParamVector};
use crate::edo::{
    arch_adapt, fbcd_detect, optimize, rand_adapt, Archive, ArchiveEntry, DetectorProbe, Evaluation, SwarmSet,
};
use crate::error::{Error, Result};
use crate::flow::{train, Dataset, FlowModel, Sample, TrainConfig};
use crate::seed::{self, tag};
use crate::simulators::{simulate_stats, SimulatorSpec, DIVERGED_FITNESS};
use crate::stats::{stats_distance, summary_stats, N_STATS};

/// Seeds of one run. `evaluation` is shared by all variants on an instance
/// (common random numbers); the other streams derive from `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub evaluation: u64,
}

impl RunSeeds {
    pub fn new(run: u64, evaluation: u64) -> Self {
        Self { run, evaluation }
    }

    pub fn optimizer(&self) -> u64 {
        seed::derive(self.run, tag::OPTIMIZER)
    }

    pub fn detection(&self) -> u64 {
        seed::derive(self.run, tag::DETECTION)
    }

    pub fn flow(&self) -> u64 {
        seed::derive(self.run, tag::FLOW)
    }
}

/// Discrepancy objective for observed windows `start..=end`. Simulations
/// that diverge score [`DIVERGED_FITNESS`] and carry no statistics.
pub fn segment_objective<'a>(
    spec: &'a SimulatorSpec,
    stream: &ObservationStream,
    start: usize,
    end: usize,
    eval_seed: u64,
) -> Result<impl Fn(&ParamVector) -> Evaluation + Sync + 'a> {
    let observed = summary_stats(stream.span(start, end))?;
    Ok(
        move |theta: &ParamVector| match simulate_stats(spec, theta, start, end, eval_seed) {
            Ok(s) if s.is_finite() => Evaluation {
                fitness: stats_distance(&s, &observed),
                stats: Some(s),
            },
            _ => Evaluation::fitness_only(DIVERGED_FITNESS),
        },
    )
}

#[derive(Debug, Clone)]
pub struct OnlineOutcome {
    pub record: CalibrationRecord,
    /// The flow after the run (fine-tuned when the variant allows it).
    pub model: Option<FlowModel>,
}

pub fn run_online(
    stream: &ObservationStream,
    spec: &SimulatorSpec,
    model: Option<FlowModel>,
    cfg: &CalibratorConfig,
    variant: Variant,
    seeds: RunSeeds,
    instance_id: &str,
) -> Result<OnlineOutcome> {
    cfg.validate()?;
    let mut model = model;
    if variant.needs_model() {
        let m = model
            .as_ref()
            .ok_or_else(|| Error::CheckpointRequired(variant.name().into()))?;
        if m.dims() != spec.dims() {
            return Err(Error::corrupt(format!(
                "d = {} but the simulator has {} parameters",
                m.dims(),
                spec.dims()
            )));
        }
        if m.cond_dims() != N_STATS {
            return Err(Error::corrupt(format!("k = {}", m.cond_dims())));
        }
    }
    let space = &spec.param_space;
    let horizon = stream.horizon();
    let mut rng_opt = seed::rng(seeds.optimizer());
    let mut rng_det = seed::rng(seeds.detection());

    let mut swarms = SwarmSet::uniform(space.clone(), cfg.pso.clone(), cfg.lambda, &mut rng_opt)?;
    let mut archive = Archive::new(cfg.archive_capacity);
    let mut probes =
        (variant.detection() == Detection::Dbd).then(|| DetectorProbe::latin(space, cfg.dbd_probes, &mut rng_det));
    let mut fbcd_history: Vec<f64> = Vec::new();

    let mut rec = CalibrationRecord {
        instance_id: instance_id.to_string(),
        variant,
        seed: seeds.run,
        epsilon: cfg.epsilon,
        change_points: Vec::new(),
        segments: Vec::new(),
        held_thetas: Vec::with_capacity(horizon),
        held_fitness: Vec::with_capacity(horizon),
        kl_trace: Vec::new(),
        trace: Vec::new(),
        step_evals: Vec::with_capacity(horizon),
        detector_evals: 0,
        step_seconds: Vec::with_capacity(horizon),
    };

    let mut tau = 1usize;
    let mut seg_theta: Option<(ParamVector, f64)> = None;
    let mut evals_used = 0usize;

    for t_c in 1..=horizon {
        let clock = Instant::now();
        let objective = segment_objective(spec, stream, tau, t_c, seeds.evaluation)?;

        let mut pairs = Vec::new();
        let out = optimize(&mut swarms, &objective, cfg.iterations, &mut rng_opt, &mut pairs);
        let per_iter = out.evals / cfg.iterations;
        for (j, &best) in out.trace.iter().enumerate() {
            rec.trace.push(TraceRow {
                observation_step: t_c,
                iteration: j + 1,
                best_fitness: best,
                evals_used: evals_used + (j + 1) * per_iter,
            });
        }
        evals_used += out.evals;
        rec.step_evals.push(out.evals);

        if variant.finetunes() && !pairs.is_empty() {
            let m = model.as_mut().expect("checked above");
            let data = Dataset::new(
                pairs
                    .into_iter()
                    .map(|(theta, s)| Sample::finetune(theta.0, s.0.to_vec()))
                    .collect(),
            );
            let tc = TrainConfig {
                seed: seed::derive(seeds.flow(), t_c as u64),
                ..cfg.finetune.clone()
            };
            train(m, &data, &tc)?;
        }

        let dbd_flag = match probes.as_mut() {
            Some(p) => {
                rec.detector_evals += p.len();
                p.detect(&objective)
            }
            None => false,
        };
        fbcd_history.push(out.best_fitness);

        let mut changed = false;
        if t_c != tau {
            changed = match variant.detection() {
                Detection::Posterior => {
                    let m = model.as_ref().expect("checked above");
                    let kl = kl_divergence(
                        m,
                        stream.span(tau, t_c - 1),
                        stream.at(t_c),
                        cfg.kl_samples,
                        cfg.estimator,
                        &mut rng_det,
                    );
                    match kl {
                        Ok(v) => {
                            rec.kl_trace.push(KlRecord {
                                observation_step: t_c,
                                value: Some(v),
                            });
                            exceeds(v, cfg.epsilon)
                        }
                        Err(Error::DensityUnderflow) => {
                            rec.kl_trace.push(KlRecord {
                                observation_step: t_c,
                                value: None,
                            });
                            true
                        }
                        Err(e) => return Err(e),
                    }
                }
                Detection::Dbd => dbd_flag,
                Detection::Fbcd => fbcd_detect(&fbcd_history, cfg.fbcd_window),
            };
        }

        if changed {
            let (theta, fitness) = seg_theta.take().expect("segment has a held parameter");
            archive.push(ArchiveEntry {
                segment: rec.segments.len(),
                theta: theta.clone(),
                fitness,
            });
            rec.segments.push(SegmentRecord {
                start: tau,
                end: t_c - 1,
                theta,
                fitness,
            });
            rec.change_points.push(t_c);
            tau = t_c;
            fbcd_history.clear();
            let population = match variant.adaptation() {
                Adaptation::Posterior => posterior_adapt(
                    model.as_ref().expect("checked above"),
                    stream.at(t_c),
                    space,
                    cfg.lambda,
                    cfg.kl_samples,
                    &mut rng_det,
                )?,
                Adaptation::Rand => rand_adapt(space, cfg.lambda, &mut rng_opt),
                Adaptation::Arch => arch_adapt(&archive, space, cfg.lambda, &mut rng_opt),
            };
            swarms.replace_population(population);
        }
        seg_theta = Some((out.best.clone(), out.best_fitness));
        rec.held_thetas.push(out.best);
        rec.held_fitness.push(out.best_fitness);
        rec.step_seconds.push(clock.elapsed().as_secs_f64());
    }

    let (theta, fitness) = seg_theta.expect("nonempty stream");
    rec.segments.push(SegmentRecord {
        start: tau,
        end: horizon,
        theta,
        fitness,
    });
    Ok(OnlineOutcome { record: rec, model })
}
