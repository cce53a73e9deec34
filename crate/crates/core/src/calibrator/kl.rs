//! Monte-Carlo KL divergence between two flow conditionals and the
//! threshold test built on it.

use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesWindow;
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::stats::summary_stats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlEstimator {
    /// `(1/N) Σ [log p(θ_n | latest) − log p(θ_n | history)]`.
    #[default]
    MeanLogRatio,
    /// Same log-ratios weighted by self-normalized `p(θ_n | latest)`.
    Weighted,
}

/// Combines per-sample log densities under the latest (`logp`) and history
/// (`logq`) conditionals. The result is floored at zero.
pub fn kl_from_logs(logp: &[f64], logq: &[f64], estimator: KlEstimator) -> Result<f64> {
    assert_eq!(logp.len(), logq.len());
    assert!(!logp.is_empty(), "at least one sample");
    if logp.iter().chain(logq).any(|v| !v.is_finite()) {
        return Err(Error::DensityUnderflow);
    }
    let value = match estimator {
        KlEstimator::MeanLogRatio => logp.iter().zip(logq).map(|(p, q)| p - q).sum::<f64>() / logp.len() as f64,
        KlEstimator::Weighted => {
            let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logp.iter().map(|p| (p - m).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter()
                .zip(logp.iter().zip(logq))
                .map(|(wi, (p, q))| wi / z * (p - q))
                .sum()
        }
    };
    if !value.is_finite() {
        return Err(Error::DensityUnderflow);
    }
    Ok(value.max(0.0))
}

/// KL divergence between the posterior given the latest window and the
/// posterior given the preceding windows of the segment, estimated from
/// `n` unclamped draws of the former.
pub fn kl_divergence<R: rand::Rng + ?Sized>(
    model: &FlowModel,
    history: &[TimeSeriesWindow],
    latest: &TimeSeriesWindow,
    n: usize,
    estimator: KlEstimator,
    rng: &mut R,
) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::EmptySeries);
    }
    let r_latest = summary_stats(std::slice::from_ref(latest))?;
    let r_history = summary_stats(history)?;
    kl_between(model, r_latest.as_slice(), r_history.as_slice(), n, estimator, rng)
}

/// KL estimate between `p(· | cond_p)` and `p(· | cond_q)` from draws of the
/// former.
pub fn kl_between<R: rand::Rng + ?Sized>(
    model: &FlowModel,
    cond_p: &[f64],
    cond_q: &[f64],
    n: usize,
    estimator: KlEstimator,
    rng: &mut R,
) -> Result<f64> {
    assert!(n >= 1, "at least one sample");
    let p = model.conditioned(cond_p)?;
    let q = model.conditioned(cond_q)?;
    let mut logp = Vec::with_capacity(n);
    let mut logq = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = p.sample_with(rng);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::DensityUnderflow);
        }
        logp.push(p.log_prob(&theta)?);
        logq.push(q.log_prob(&theta)?);
    }
    kl_from_logs(&logp, &logq, estimator)
}

/// Threshold test: a change is flagged when the divergence reaches `epsilon`.
pub fn exceeds(kl: f64, epsilon: f64) -> bool {
    kl >= epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn single_sample_arithmetic() {
        assert_eq!(kl_from_logs(&[-1.0], &[-3.0], KlEstimator::MeanLogRatio).unwrap(), 2.0);
        assert_eq!(kl_from_logs(&[-1.0], &[-3.0], KlEstimator::Weighted).unwrap(), 2.0);
        assert_eq!(kl_from_logs(&[-3.0], &[-1.0], KlEstimator::MeanLogRatio).unwrap(), 0.0);
        assert!(matches!(
            kl_from_logs(&[f64::NEG_INFINITY], &[0.0], KlEstimator::MeanLogRatio),
            Err(Error::DensityUnderflow)
        ));
    }

    #[test]
    fn weighted_form_uses_normalized_weights() {
        let logp = [0.0, (3.0f64).ln()];
        let logq = [-1.0, -2.0];
        // weights 1/4, 3/4; ratios 1, ln3 + 2
        let expect = 0.25 * 1.0 + 0.75 * ((3.0f64).ln() + 2.0);
        let got = kl_from_logs(&logp, &logq, KlEstimator::Weighted).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn identical_conditions_give_zero() {
        let mut rng = seed::rng(1);
        let mut m = FlowModel::new(2, 9, 8, 3, 1, &mut rng);
        m.perturb(0.3, &mut rng);
        let w = TimeSeriesWindow::univariate(1, (0..50).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let kl = kl_divergence(
            &m,
            std::slice::from_ref(&w),
            &w,
            200,
            KlEstimator::MeanLogRatio,
            &mut rng,
        )
        .unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(!exceeds(0.0, 30.0));
        assert!(exceeds(30.0, 30.0));
    }
}
