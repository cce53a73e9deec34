//! Baseline change detectors.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pso::Objective;
use crate::data::{ParamSpace, ParamVector};

/// Fitness change above which a probe reports a change.
pub const DBD_TOLERANCE: f64 = 1e-9;
/// Minimum improvement counted by the stall detector.
pub const FBCD_TOLERANCE: f64 = 1e-12;

/// `n` Latin-hypercube points in the box.
pub fn latin_hypercube<R: Rng + ?Sized>(space: &ParamSpace, n: usize, rng: &mut R) -> Vec<ParamVector> {
    let d = space.dims();
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            let u: f64 = rng.random();
            pts[i][j] = space.lower[j] + (s as f64 + u) / n as f64 * space.range(j);
        }
    }
    pts.into_iter().map(ParamVector).collect()
}

/// Fixed probes re-evaluated to spot fitness shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProbe {
    pub positions: Vec<ParamVector>,
    pub fitness: Option<Vec<f64>>,
}

impl DetectorProbe {
    pub fn new(positions: Vec<ParamVector>) -> Self {
        Self {
            positions,
            fitness: None,
        }
    }

    pub fn latin<R: Rng + ?Sized>(space: &ParamSpace, n: usize, rng: &mut R) -> Self {
        Self::new(latin_hypercube(space, n, rng))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Re-evaluates every probe and stores the new fitness values. Returns
    /// whether any probe moved by more than [`DBD_TOLERANCE`]; the first call
    /// only records a baseline and returns `false`.
    pub fn detect<O: Objective + ?Sized>(&mut self, objective: &O) -> bool {
        let new: Vec<f64> = self.positions.iter().map(|p| objective.evaluate(p).fitness).collect();
        let flag = match &self.fitness {
            Some(old) => old
                .iter()
                .zip(&new)
                .any(|(a, b)| (a - b).abs() > DBD_TOLERANCE || a.is_nan() != b.is_nan()),
            None => false,
        };
        self.fitness = Some(new);
        flag
    }
}

/// True when the last `window` best-fitness entries show no improvement:
/// the oldest of them minus the best of the rest is at most
/// [`FBCD_TOLERANCE`].
pub fn fbcd_detect(history: &[f64], window: usize) -> bool {
    let window = window.max(1);
    if history.len() < window {
        return false;
    }
    let recent = &history[history.len() - window..];
    let later = recent[1..].iter().copied().fold(f64::INFINITY, f64::min);
    if window == 1 {
        return true;
    }
    recent[0] - later <= FBCD_TOLERANCE
}
