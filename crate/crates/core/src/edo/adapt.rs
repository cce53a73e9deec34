//! Baseline population re-initialization: uniform restart and
//! archive-seeded restart.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ParamSpace, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub segment: usize,
    pub theta: ParamVector,
    pub fitness: f64,
}

/// Ring buffer of past segment elites, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    capacity: usize,
    entries: VecDeque<ArchiveEntry>,
}

impl Default for Archive {
    fn default() -> Self {
        Self::new(20)
    }
}

impl Archive {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, entry: ArchiveEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> impl DoubleEndedIterator<Item = &ArchiveEntry> {
        self.entries.iter()
    }
}

/// `lambda` i.i.d. uniform draws over the box.
pub fn rand_adapt<R: Rng + ?Sized>(space: &ParamSpace, lambda: usize, rng: &mut R) -> Vec<ParamVector> {
    (0..lambda).map(|_| space.sample_uniform(rng)).collect()
}

/// Seeds `min(lambda / 2, |archive|)` particles at the most recent elites
/// with Gaussian jitter (std 1% of each range, clamped), then fills the rest
/// uniformly.
pub fn arch_adapt<R: Rng + ?Sized>(
    archive: &Archive,
    space: &ParamSpace,
    lambda: usize,
    rng: &mut R,
) -> Vec<ParamVector> {
    let seeded = (lambda / 2).min(archive.len());
    let mut out = Vec::with_capacity(lambda);
    for e in archive.entries().rev().take(seeded) {
        let mut t: Vec<f64> = e
            .theta
            .0
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let z: f64 = StandardNormal.sample(rng);
                v + 0.01 * space.range(j) * z
            })
            .collect();
        space.clamp(&mut t);
        out.push(ParamVector(t));
    }
    out.extend(rand_adapt(space, lambda - seeded, rng));
    out
}
