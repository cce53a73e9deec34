//! Length-invariant summary statistics and the moment-matching discrepancy.
//!
//! Conventions:
//! - variance is the population variance (divide by `n`);
//! - skewness is `m3 / m2^{3/2}` and kurtosis is the excess form `m4 / m2^2 - 3`,
//!   both set to 0 when `m2 < 1e-24`;
//! - median and quartiles interpolate linearly between closest ranks
//!   (`h = (n - 1) p`, the "type 7" rule).

use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesWindow;
use crate::error::{Error, Result};

/// Number of summary statistics.
pub const N_STATS: usize = 9;

const DEGENERATE_VARIANCE: f64 = 1e-24;

/// `[mean, median, variance, range, min, max, skewness, kurtosis, IQR]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummaryStats(pub [f64; N_STATS]);

impl SummaryStats {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn mean(&self) -> f64 {
        self.0[0]
    }
    pub fn median(&self) -> f64 {
        self.0[1]
    }
    pub fn variance(&self) -> f64 {
        self.0[2]
    }
    pub fn iqr(&self) -> f64 {
        self.0[8]
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Statistics of the pooled values of all windows in `series`.
pub fn summary_stats(series: &[TimeSeriesWindow]) -> Result<SummaryStats> {
    let total: usize = series.iter().map(|w| w.values.len()).sum();
    let mut pooled = Vec::with_capacity(total);
    // Per-variable concatenation; the statistics are order-free so the layout
    // only matters for readability.
    let vars = series.first().map_or(1, |w| w.vars);
    for j in 0..vars {
        for w in series {
            pooled.extend(w.column(j));
        }
    }
    summary_stats_of(pooled)
}

/// Statistics of a flat sample. Takes ownership to sort in place.
pub fn summary_stats_of(mut values: Vec<f64>) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in &values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 < DEGENERATE_VARIANCE {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };

    values.sort_unstable_by(f64::total_cmp);
    let min = values[0];
    let max = values[values.len() - 1];
    let median = quantile_sorted(&values, 0.5);
    let iqr = quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25);

    Ok(SummaryStats([
        mean,
        median,
        m2,
        max - min,
        min,
        max,
        skew,
        kurt,
        iqr.max(0.0),
    ]))
}

/// Linear-interpolation quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Scaled squared distance between two statistics vectors.
pub fn stats_distance(a: &SummaryStats, b: &SummaryStats) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / N_STATS as f64
}

/// Method-of-simulated-moments discrepancy between two window sequences.
pub fn discrepancy(observed: &[TimeSeriesWindow], simulated: &[TimeSeriesWindow]) -> Result<f64> {
    let a = summary_stats(observed)?;
    let b = summary_stats(simulated)?;
    Ok(stats_distance(&a, &b))
}

/// Per-component location/scale used to standardize conditioning vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CondNorm {
    pub fn identity(k: usize) -> Self {
        Self {
            mean: vec![0.0; k],
            std: vec![1.0; k],
        }
    }

    /// Population mean/std per component over `rows`.
    pub fn fit<'a, I>(rows: I, k: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if n == 0 {
            return Self::identity(k);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        for r in &rows {
            for j in 0..k {
                let d = r[j] - mean[j];
                sq[j] += d * d;
            }
        }
        let std = sq.iter().map(|s| (s / n as f64).sqrt()).collect();
        Self { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `(x - mean) / std`; components with zero std pass through unscaled.
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let c = v - self.mean[j];
                if self.std[j] > 0.0 {
                    c / self.std[j]
                } else {
                    c
                }
            })
            .collect()
    }

    pub fn unstandardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let c = if self.std[j] > 0.0 { v * self.std[j] } else { *v };
                c + self.mean[j]
            })
            .collect()
    }
}

pub fn standardize_stats(stats: &SummaryStats, norm: &CondNorm) -> SummaryStats {
    let v = norm.standardize(&stats.0);
    let mut out = [0.0; N_STATS];
    out.copy_from_slice(&v);
    SummaryStats(out)
}

pub fn unstandardize_stats(stats: &SummaryStats, norm: &CondNorm) -> SummaryStats {
    let v = norm.unstandardize(&stats.0);
    let mut out = [0.0; N_STATS];
    out.copy_from_slice(&v);
    SummaryStats(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Textbook statistics computed from raw power sums and 1-based ranks,
    /// independent of the sorting/central-moment path above.
    fn oracle(x: &[f64]) -> [f64; 9] {
        let n = x.len() as f64;
        let s1: f64 = x.iter().sum();
        let mean = s1 / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let c3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let c4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let (skew, kurt) = if var < 1e-24 {
            (0.0, 0.0)
        } else {
            (c3 / var.sqrt().powi(3), c4 / var.powi(2) - 3.0)
        };
        let mut s = x.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            // 1-based position h = (n-1)p + 1
            let h = (n - 1.0) * p + 1.0;
            let k = h.floor();
            let i = k as usize;
            if i >= s.len() {
                s[s.len() - 1]
            } else {
                s[i - 1] + (h - k) * (s[i] - s[i - 1])
            }
        };
        let mn = s[0];
        let mx = s[s.len() - 1];
        [mean, q(0.5), var, mx - mn, mn, mx, skew, kurt, q(0.75) - q(0.25)]
    }

    #[test]
    fn constant_series() {
        let s = summary_stats_of(vec![5.0; 4]).unwrap();
        assert_eq!(s.0, [5.0, 5.0, 0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_to_four() {
        let s = summary_stats_of(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let o = oracle(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean(), 2.5);
        assert_eq!(s.median(), 2.5);
        assert_eq!(s.variance(), 1.25);
        assert_eq!(s.0[3], 3.0);
        assert_eq!(s.0[4], 1.0);
        assert_eq!(s.0[5], 4.0);
        assert!(s.0[6].abs() < 1e-15);
        // Frozen from the oracle: excess kurtosis -1.36, IQR 1.5.
        assert!((s.0[7] - (-1.36)).abs() < 1e-12);
        assert!((s.iqr() - 1.5).abs() < 1e-12);
        for j in 0..9 {
            assert!((s.0[j] - o[j]).abs() < 1e-12, "component {j}");
        }
    }

    #[test]
    fn uniform_sample_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let s = summary_stats_of(x.clone()).unwrap();
        let o = oracle(&x);
        for j in 0..9 {
            assert!((s.0[j] - o[j]).abs() < 1e-12, "component {j}: {} vs {}", s.0[j], o[j]);
        }
    }

    #[test]
    fn empty_series_errors() {
        assert!(matches!(summary_stats_of(vec![]), Err(Error::EmptySeries)));
        assert!(matches!(summary_stats(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn discrepancy_examples() {
        let w = |t, v: Vec<f64>| TimeSeriesWindow::univariate(t, v).unwrap();
        let a = vec![w(1, vec![1.0, 3.0, 2.0]), w(2, vec![0.5, 9.0, 4.0])];
        assert_eq!(discrepancy(&a, &a).unwrap(), 0.0);

        let s = SummaryStats([0.0; 9]);
        let t = SummaryStats([1.0; 9]);
        assert_eq!(stats_distance(&s, &t), 1.0);
        assert!(matches!(discrepancy(&[], &a), Err(Error::EmptySeries)));
    }

    #[test]
    fn discrepancy_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xa: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 3.0).collect();
        let xb: Vec<f64> = (0..80).map(|_| rng.random::<f64>().powi(2)).collect();
        let wa = vec![
            TimeSeriesWindow::univariate(1, xa[..60].to_vec()).unwrap(),
            TimeSeriesWindow::univariate(2, xa[60..].to_vec()).unwrap(),
        ];
        let wb = vec![TimeSeriesWindow::univariate(1, xb.clone()).unwrap()];
        let (oa, ob) = (oracle(&xa), oracle(&xb));
        let expect = oa.iter().zip(&ob).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / 9.0;
        let got = discrepancy(&wa, &wb).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn standardize_examples() {
        let stats = SummaryStats([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let norm = CondNorm {
            mean: stats.0.to_vec(),
            std: vec![2.0; 9],
        };
        assert_eq!(standardize_stats(&stats, &norm).0, [0.0; 9]);
        let id = CondNorm::identity(9);
        assert_eq!(standardize_stats(&stats, &id), stats);
        let mut zero_std = norm.clone();
        zero_std.std[3] = 0.0;
        let z = standardize_stats(&stats, &zero_std);
        assert_eq!(z.0[3], 0.0);
    }

    proptest! {
        #[test]
        fn shuffle_invariant(mut xs in prop::collection::vec(-1e3f64..1e3, 1..200), seed in any::<u64>()) {
            let a = summary_stats_of(xs.clone()).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            xs.shuffle(&mut rng);
            let b = summary_stats_of(xs).unwrap();
            for j in [1usize, 3, 4, 5, 8] {
                prop_assert_eq!(a.0[j], b.0[j]);
            }
            for j in [0usize, 2, 6, 7] {
                prop_assert!((a.0[j] - b.0[j]).abs() <= 1e-9 * (1.0 + a.0[j].abs()));
            }
            prop_assert!(a.variance() >= 0.0 && a.0[3] >= 0.0 && a.iqr() >= 0.0);
        }

        #[test]
        fn discrepancy_symmetric(xs in prop::collection::vec(-50f64..50.0, 1..60),
                                 ys in prop::collection::vec(-50f64..50.0, 1..60)) {
            let a = [TimeSeriesWindow::univariate(1, xs).unwrap()];
            let b = [TimeSeriesWindow::univariate(1, ys).unwrap()];
            prop_assert_eq!(discrepancy(&a, &b).unwrap(), discrepancy(&b, &a).unwrap());
            prop_assert_eq!(discrepancy(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn standardize_round_trip(v in prop::array::uniform9(-1e3f64..1e3),
                                  m in prop::array::uniform9(-10f64..10.0),
                                  s in prop::array::uniform9(0.01f64..10.0)) {
            let norm = CondNorm { mean: m.to_vec(), std: s.to_vec() };
            let x = SummaryStats(v);
            let back = unstandardize_stats(&standardize_stats(&x, &norm), &norm);
            for j in 0..9 {
                prop_assert!((back.0[j] - v[j]).abs() <= 1e-12 * (1.0 + v[j].abs()));
            }
        }
    }
}
