//! Diverse re-initialization from posterior draws.

use rand::Rng;

use crate::data::{euclidean, ParamSpace, ParamVector, TimeSeriesWindow};
use crate::error::Result;
use crate::flow::FlowModel;
use crate::stats::summary_stats;

/// Greedy max-sum-distance subset: a uniformly random first pick, then
/// repeatedly the candidate with the largest summed distance to everything
/// chosen so far (lowest index on ties). Returns candidate indices in pick
/// order.
pub fn diverse_select<R: Rng + ?Sized>(candidates: &[ParamVector], lambda: usize, rng: &mut R) -> Vec<usize> {
    let n = candidates.len();
    assert!(lambda <= n, "cannot select {lambda} of {n} candidates");
    if lambda == 0 {
        return Vec::new();
    }
    let first = rng.random_range(0..n);
    diverse_select_from(candidates, lambda, first)
}

/// [`diverse_select`] with the first pick fixed.
pub fn diverse_select_from(candidates: &[ParamVector], lambda: usize, first: usize) -> Vec<usize> {
    let n = candidates.len();
    let mut chosen = vec![false; n];
    let mut sum = vec![0.0; n];
    let mut picks = Vec::with_capacity(lambda);
    let add = |i: usize, chosen: &mut Vec<bool>, sum: &mut Vec<f64>, picks: &mut Vec<usize>| {
        chosen[i] = true;
        picks.push(i);
        for (j, s) in sum.iter_mut().enumerate() {
            if !chosen[j] {
                *s += euclidean(&candidates[i].0, &candidates[j].0);
            }
        }
    };
    add(first, &mut chosen, &mut sum, &mut picks);
    while picks.len() < lambda {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if !chosen[j] && best.is_none_or(|b| sum[j] > sum[b]) {
                best = Some(j);
            }
        }
        add(best.unwrap(), &mut chosen, &mut sum, &mut picks);
    }
    picks
}

/// Draws `n` clamped posterior samples given the latest window and keeps a
/// diverse subset of `lambda`.
pub fn posterior_adapt<R: Rng + ?Sized>(
    model: &FlowModel,
    latest: &TimeSeriesWindow,
    space: &ParamSpace,
    lambda: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ParamVector>> {
    let cond = summary_stats(std::slice::from_ref(latest))?;
    let draws = model.posterior_sample(cond.as_slice(), n.max(lambda), space, rng)?;
    let cands: Vec<ParamVector> = draws.into_iter().map(|d| d.theta).collect();
    let picks = diverse_select(&cands, lambda, rng);
    Ok(picks.into_iter().map(|i| cands[i].clone()).collect())
}
