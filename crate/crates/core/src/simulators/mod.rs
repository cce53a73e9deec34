//! Calibration targets behind a single interface `M(θ, t_start, t_end)`.
//!
//! Simulators are prefix-consistent: a run always starts from the initial
//! state at observation step 1 with the given seed, and `simulate` returns the
//! slice `t_start..=t_end` of that trajectory.

pub mod brock_hommes;
pub mod pgps;

use serde::{Deserialize, Serialize};

use crate::data::{ParamSpace, ParamVector, TimeSeriesWindow};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{summary_stats_of, SummaryStats};

pub use brock_hommes::{bh_step, BhConstants, BhState, BrockHommes};
pub use pgps::{pgps_step, OrderBook, Pgps, PgpsConstants, PgpsParams, PgpsState};

/// Fitness assigned to a simulation that diverged.
pub const DIVERGED_FITNESS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorKind {
    BrockHommes,
    Pgps,
}

impl SimulatorKind {
    pub fn default_space(self) -> ParamSpace {
        match self {
            SimulatorKind::BrockHommes => ParamSpace {
                lower: vec![0.5, 0.0],
                upper: vec![1.0, 1.0],
            },
            SimulatorKind::Pgps => ParamSpace {
                lower: vec![0.05, 0.01, 0.005, 0.0005, 50.0, 1.0],
                upper: vec![0.35, 0.1, 0.05, 0.005, 300.0, 20.0],
            },
        }
    }

    pub fn window_len(self) -> usize {
        match self {
            SimulatorKind::BrockHommes => 50,
            SimulatorKind::Pgps => 200,
        }
    }

    pub fn dims(self) -> usize {
        match self {
            SimulatorKind::BrockHommes => 2,
            SimulatorKind::Pgps => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SimulatorKind::BrockHommes => "brock_hommes",
            SimulatorKind::Pgps => "pgps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSpec {
    pub kind: SimulatorKind,
    pub param_space: ParamSpace,
    pub window_len: usize,
    pub vars: usize,
    /// Recorded with the spec only; simulations take their seed from the
    /// caller (instance stream seed or run evaluation seed).
    pub noise_seed: u64,
    pub bh: BhConstants,
    pub pgps: PgpsConstants,
}

impl SimulatorSpec {
    pub fn new(kind: SimulatorKind) -> Self {
        Self {
            kind,
            param_space: kind.default_space(),
            window_len: kind.window_len(),
            vars: 1,
            noise_seed: 0,
            bh: BhConstants::default(),
            pgps: PgpsConstants::default(),
        }
    }

    pub fn brock_hommes() -> Self {
        Self::new(SimulatorKind::BrockHommes)
    }

    pub fn pgps() -> Self {
        Self::new(SimulatorKind::Pgps)
    }

    pub fn dims(&self) -> usize {
        self.param_space.dims()
    }
}

enum Engine {
    Bh(BrockHommes),
    Pgps(Box<Pgps>),
}

impl Engine {
    fn new(spec: &SimulatorSpec, theta: &[f64]) -> Self {
        match spec.kind {
            SimulatorKind::BrockHommes => Engine::Bh(BrockHommes::new(theta, spec.bh)),
            SimulatorKind::Pgps => Engine::Pgps(Box::new(Pgps::new(theta, spec.pgps))),
        }
    }

    fn fill(&mut self, out: &mut [f64], rng: &mut seed::Rng) -> Result<()> {
        match self {
            Engine::Bh(m) => m.fill(out, rng),
            Engine::Pgps(m) => {
                m.fill(out, rng);
                Ok(())
            }
        }
    }
}

/// Runs the simulator from step 1 and calls `keep` on every window in
/// `t_start..=t_end`.
fn run<F>(spec: &SimulatorSpec, theta: &[f64], t_start: usize, t_end: usize, seed: u64, mut keep: F) -> Result<()>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    if t_start > t_end {
        return Err(Error::BadRange {
            start: t_start,
            end: t_end,
        });
    }
    if t_start == 0 {
        return Err(Error::BadRange {
            start: t_start,
            end: t_end,
        });
    }
    spec.param_space.check(theta)?;
    let mut rng = seed::rng(seed);
    let mut engine = Engine::new(spec, theta);
    let mut buf = vec![0.0; spec.window_len * spec.vars];
    for t in 1..=t_end {
        engine.fill(&mut buf, &mut rng)?;
        if t >= t_start {
            keep(t, &buf)?;
        }
    }
    Ok(())
}

/// `M(θ, t_start, t_end)`: windows `t_start..=t_end` of the trajectory
/// generated under `seed`.
pub fn simulate(
    spec: &SimulatorSpec,
    theta: &ParamVector,
    t_start: usize,
    t_end: usize,
    seed: u64,
) -> Result<Vec<TimeSeriesWindow>> {
    let mut out = Vec::with_capacity(t_end.saturating_sub(t_start) + 1);
    run(spec, &theta.0, t_start, t_end, seed, |t, buf| {
        out.push(TimeSeriesWindow::new(t, spec.window_len, spec.vars, buf.to_vec())?);
        Ok(())
    })?;
    Ok(out)
}

/// Summary statistics of `M(θ, t_start, t_end)` without materializing windows.
pub fn simulate_stats(
    spec: &SimulatorSpec,
    theta: &ParamVector,
    t_start: usize,
    t_end: usize,
    seed: u64,
) -> Result<SummaryStats> {
    let mut pooled = Vec::with_capacity((t_end.saturating_sub(t_start) + 1) * spec.window_len);
    run(spec, &theta.0, t_start, t_end, seed, |_, buf| {
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        pooled.extend_from_slice(buf);
        Ok(())
    })?;
    summary_stats_of(pooled)
}

/// The first `steps` observation windows.
pub fn price_series(
    spec: &SimulatorSpec,
    theta: &ParamVector,
    steps: usize,
    seed: u64,
) -> Result<Vec<TimeSeriesWindow>> {
    simulate(spec, theta, 1, steps, seed)
}
