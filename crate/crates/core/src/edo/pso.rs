//! Multi-swarm constriction PSO.
//!
//! Particles are grouped into sub-swarms of (up to) `swarm_size` by greedy
//! nearest-neighbour clustering at the start of every [`optimize`] call. Each
//! iteration evaluates every particle, refreshes personal and swarm bests,
//! applies exclusion (the worse of two swarms whose bests are closer than the
//! exclusion radius is re-randomized) and then moves all particles:
//!
//! ```text
//! v ← χ v + c1 r1 (p − x) + c2 r2 (g − x),   |v_j| ≤ v_max_j
//! x ← x + v,   reflected at the walls with the offending velocity zeroed
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{euclidean, ParamSpace, ParamVector};
use crate::error::{Error, Result};
use crate::stats::SummaryStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub chi: f64,
    pub c1: f64,
    pub c2: f64,
    /// Velocity cap as a fraction of each dimension's range.
    pub vmax_frac: f64,
    pub swarm_size: usize,
    pub max_particles: usize,
    /// Exclusion radius as a fraction of the box diagonal.
    pub exclusion_frac: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        let chi = 0.729;
        Self {
            chi,
            c1: 2.05 * chi,
            c2: 2.05 * chi,
            vmax_frac: 0.5,
            swarm_size: 8,
            max_particles: 80,
            exclusion_frac: 0.05,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 || self.max_particles == 0 {
            return Err(Error::ConfigInvalid("swarm sizes must be >= 1".into()));
        }
        if !(self.chi > 0.0 && self.c1 >= 0.0 && self.c2 >= 0.0 && self.vmax_frac > 0.0) {
            return Err(Error::ConfigInvalid("PSO coefficients must be positive".into()));
        }
        if self.exclusion_frac < 0.0 {
            return Err(Error::ConfigInvalid("exclusion_frac must be >= 0".into()));
        }
        Ok(())
    }
}

/// Result of one objective evaluation. `stats` carries the simulated data
/// summary used for fine-tuning; it is `None` when the simulation diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub stats: Option<SummaryStats>,
}

impl Evaluation {
    pub fn fitness_only(fitness: f64) -> Self {
        Self { fitness, stats: None }
    }
}

pub trait Objective: Sync {
    fn evaluate(&self, theta: &ParamVector) -> Evaluation;
}

impl<F> Objective for F
where
    F: Fn(&ParamVector) -> Evaluation + Sync,
{
    fn evaluate(&self, theta: &ParamVector) -> Evaluation {
        self(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: ParamVector,
    pub velocity: Vec<f64>,
    pub best_position: ParamVector,
    /// `+∞` when stale (no evaluation under the current objective).
    pub best_fitness: f64,
}

impl Particle {
    pub fn at(position: ParamVector) -> Self {
        let d = position.dims();
        Self {
            best_position: position.clone(),
            position,
            velocity: vec![0.0; d],
            best_fitness: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmSet {
    pub space: ParamSpace,
    pub config: PsoConfig,
    pub swarms: Vec<Vec<Particle>>,
}

/// Outcome of one [`optimize`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub best: ParamVector,
    pub best_fitness: f64,
    /// Best-so-far fitness after each iteration.
    pub trace: Vec<f64>,
    pub evals: usize,
}

impl SwarmSet {
    /// A single swarm holding the given positions; clustering happens on the
    /// next [`optimize`] call.
    pub fn from_positions(space: ParamSpace, config: PsoConfig, positions: Vec<ParamVector>) -> Result<Self> {
        config.validate()?;
        if positions.len() > config.max_particles {
            return Err(Error::ConfigInvalid(format!(
                "population {} exceeds the particle cap {}",
                positions.len(),
                config.max_particles
            )));
        }
        let mut s = Self {
            space,
            config,
            swarms: Vec::new(),
        };
        s.replace_population(positions);
        Ok(s)
    }

    pub fn uniform<R: Rng + ?Sized>(space: ParamSpace, config: PsoConfig, n: usize, rng: &mut R) -> Result<Self> {
        let pos = (0..n).map(|_| space.sample_uniform(rng)).collect();
        Self::from_positions(space, config, pos)
    }

    /// Replaces every particle; velocities zero, personal bests stale.
    pub fn replace_population(&mut self, positions: Vec<ParamVector>) {
        let parts = positions
            .into_iter()
            .map(|mut p| {
                self.space.clamp(&mut p.0);
                Particle::at(p)
            })
            .collect();
        self.swarms = vec![parts];
    }

    pub fn len(&self) -> usize {
        self.swarms.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn particles(&self) -> impl Iterator<Item = &Particle> {
        self.swarms.iter().flatten()
    }

    pub fn positions(&self) -> Vec<ParamVector> {
        self.particles().map(|p| p.position.clone()).collect()
    }

    /// Marks every personal best stale; used when the objective changes.
    pub fn reset_memory(&mut self) {
        for p in self.swarms.iter_mut().flatten() {
            p.best_fitness = f64::INFINITY;
            p.best_position = p.position.clone();
        }
    }

    /// Greedy nearest-neighbour clustering: the first unassigned particle
    /// and its `swarm_size − 1` nearest unassigned neighbours form a swarm.
    pub fn regroup(&mut self) {
        let mut pool: Vec<Particle> = self.swarms.drain(..).flatten().collect();
        let size = self.config.swarm_size;
        while !pool.is_empty() {
            let seed = pool.remove(0);
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.sort_by(|&a, &b| {
                let da = euclidean(&pool[a].position.0, &seed.position.0);
                let db = euclidean(&pool[b].position.0, &seed.position.0);
                da.total_cmp(&db).then(a.cmp(&b))
            });
            let mut take: Vec<usize> = idx.into_iter().take(size - 1).collect();
            take.sort_unstable_by(|a, b| b.cmp(a));
            let mut swarm = vec![seed];
            let mut members: Vec<Particle> = take.into_iter().map(|i| pool.remove(i)).collect();
            members.reverse();
            swarm.extend(members);
            self.swarms.push(swarm);
        }
    }

    fn swarm_best(swarm: &[Particle]) -> Option<(usize, f64)> {
        swarm
            .iter()
            .enumerate()
            .filter(|(_, p)| p.best_fitness.is_finite())
            .min_by(|a, b| a.1.best_fitness.total_cmp(&b.1.best_fitness).then(a.0.cmp(&b.0)))
            .map(|(i, p)| (i, p.best_fitness))
    }

    /// Re-randomizes the worse of every pair of swarms whose bests lie
    /// within the exclusion radius.
    pub fn apply_exclusion<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let radius = self.config.exclusion_frac * self.space.diagonal();
        let n = self.swarms.len();
        for a in 0..n {
            for b in a + 1..n {
                let (Some((ia, fa)), Some((ib, fb))) =
                    (Self::swarm_best(&self.swarms[a]), Self::swarm_best(&self.swarms[b]))
                else {
                    continue;
                };
                let dist = euclidean(&self.swarms[a][ia].best_position.0, &self.swarms[b][ib].best_position.0);
                if dist < radius {
                    let worse = if fb >= fa { b } else { a };
                    for p in &mut self.swarms[worse] {
                        *p = Particle::at(self.space.sample_uniform(rng));
                    }
                }
            }
        }
    }

    /// One velocity/position update of every particle.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let d = self.space.dims();
        let cfg = self.config.clone();
        let vmax: Vec<f64> = (0..d).map(|j| cfg.vmax_frac * self.space.range(j)).collect();
        for swarm in &mut self.swarms {
            let g = Self::swarm_best(swarm).map(|(i, _)| swarm[i].best_position.clone());
            for p in swarm.iter_mut() {
                let g = g.as_ref().unwrap_or(&p.best_position).clone();
                for j in 0..d {
                    let r1: f64 = rng.random();
                    let r2: f64 = rng.random();
                    let x = p.position.0[j];
                    let mut v =
                        cfg.chi * p.velocity[j] + cfg.c1 * r1 * (p.best_position.0[j] - x) + cfg.c2 * r2 * (g.0[j] - x);
                    v = v.clamp(-vmax[j], vmax[j]);
                    let (lo, hi) = (self.space.lower[j], self.space.upper[j]);
                    let mut nx = x + v;
                    if nx < lo || nx > hi {
                        nx = if nx < lo { lo + (lo - nx) } else { hi - (nx - hi) };
                        nx = nx.clamp(lo, hi);
                        v = 0.0;
                    }
                    p.position.0[j] = nx;
                    p.velocity[j] = v;
                }
            }
        }
    }
}

/// Runs `iterations` rounds of evaluate → bookkeeping → move.
///
/// Personal bests are reset first because the objective is new. Every
/// evaluation with simulated statistics is appended to `sink`. Exactly
/// `swarms.len() × iterations` objective calls are made.
pub fn optimize<O, R>(
    swarms: &mut SwarmSet,
    objective: &O,
    iterations: usize,
    rng: &mut R,
    sink: &mut Vec<(ParamVector, SummaryStats)>,
) -> OptimizeOutcome
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    assert!(iterations >= 1, "at least one iteration");
    assert!(!swarms.is_empty(), "empty population");
    swarms.reset_memory();
    swarms.regroup();
    let mut best: Option<(ParamVector, f64)> = None;
    let mut trace = Vec::with_capacity(iterations);
    let mut evals = 0;
    for _ in 0..iterations {
        let positions = swarms.positions();
        let results: Vec<Evaluation> = positions.par_iter().map(|p| objective.evaluate(p)).collect();
        evals += results.len();
        for (pos, ev) in swarms.particles().zip(&results).map(|(p, e)| (p.position.clone(), e)) {
            if let Some(s) = ev.stats {
                sink.push((pos, s));
            }
        }
        for (p, ev) in swarms.swarms.iter_mut().flatten().zip(&results) {
            let f = ev.fitness;
            if f < p.best_fitness {
                p.best_fitness = f;
                p.best_position = p.position.clone();
            }
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((p.position.clone(), f));
            }
        }
        trace.push(best.as_ref().unwrap().1);
        swarms.apply_exclusion(rng);
        swarms.update(rng);
    }
    let (best, best_fitness) = best.unwrap();
    OptimizeOutcome {
        best,
        best_fitness,
        trace,
        evals,
    }
}
