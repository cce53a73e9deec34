//! Calibration error, convergence and detection-density metrics.

use serde::{Deserialize, Serialize};

use super::instances::InstanceSpec;
use crate::calibrator::TraceRow;
use crate::data::{ObservationStream, ParamVector};
use crate::error::{Error, Result};
use crate::simulators::{simulate_stats, SimulatorSpec};
use crate::stats::{stats_distance, summary_stats};

/// Discrepancy of `theta` on true segment `i`, simulated over that segment
/// with `eval_seed`.
pub fn subproblem_error(
    spec: &SimulatorSpec,
    instance: &InstanceSpec,
    stream: &ObservationStream,
    theta: &ParamVector,
    i: usize,
    eval_seed: u64,
) -> Result<f64> {
    let (start, end) = instance.segment_bounds()[i];
    let sim = simulate_stats(spec, theta, start, end, eval_seed)?;
    let obs = summary_stats(stream.span(start, end))?;
    Ok(stats_distance(&sim, &obs))
}

/// Parameter attributed to each true segment: the one held at the
/// segment's final observation step.
pub fn attributed_thetas(instance: &InstanceSpec, held: &[ParamVector]) -> Result<Vec<ParamVector>> {
    if held.len() != instance.horizon {
        return Err(Error::DimensionMismatch {
            expected: instance.horizon,
            got: held.len(),
        });
    }
    Ok(instance
        .segment_bounds()
        .iter()
        .map(|&(_, end)| held[end - 1].clone())
        .collect())
}

/// Mean calibration error.
pub fn mce(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Average best-so-far fitness. Iterations of all observation steps in a true
/// segment are pooled in order; shorter segments are padded with their final
/// value to the longest segment's iteration count.
pub fn pcon(trace: &[TraceRow], segments: &[(usize, usize)]) -> Result<f64> {
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(segments.len());
    for &(a, b) in segments {
        let mut rows: Vec<&TraceRow> = trace.iter().filter(|r| (a..=b).contains(&r.observation_step)).collect();
        rows.sort_by_key(|r| (r.observation_step, r.iteration));
        let mut best = f64::INFINITY;
        let curve: Vec<f64> = rows
            .iter()
            .map(|r| {
                best = best.min(r.best_fitness);
                best
            })
            .collect();
        if !curve.is_empty() {
            curves.push(curve);
        }
    }
    if curves.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n_iter = curves.iter().map(Vec::len).max().unwrap();
    let total: f64 = curves
        .iter()
        .map(|c| {
            let last = *c.last().unwrap();
            c.iter().sum::<f64>() + last * (n_iter - c.len()) as f64
        })
        .sum();
    Ok(total / (curves.len() * n_iter) as f64)
}

/// Detection density on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

pub const DENSITY_GRID: usize = 512;

/// Silverman's rule `1.06 σ̂ n^{−1/5}` (sample std); 1 when `σ̂ = 0`.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 1.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        1.06 * sd * n.powf(-0.2)
    } else {
        1.0
    }
}

pub fn trapezoid(grid: &[f64], y: &[f64]) -> f64 {
    grid.windows(2)
        .zip(y.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Gaussian KDE of pooled detections on 512 points over `[1, horizon]`,
/// rescaled so its trapezoid integral over the grid is 1 (mass outside the
/// observation range is folded back in). No detections gives zeros.
pub fn detection_density(detections: &[f64], horizon: usize, bandwidth: Option<f64>) -> DensityCurve {
    let hi = horizon.max(2) as f64;
    let grid: Vec<f64> = (0..DENSITY_GRID)
        .map(|g| 1.0 + (hi - 1.0) * g as f64 / (DENSITY_GRID - 1) as f64)
        .collect();
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(detections));
    if detections.is_empty() {
        return DensityCurve {
            density: vec![0.0; grid.len()],
            grid,
            bandwidth: h,
        };
    }
    let norm = 1.0 / (detections.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&t| {
            norm * detections
                .iter()
                .map(|&x| (-0.5 * ((t - x) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    if mass > 0.0 {
        density.iter_mut().for_each(|v| *v /= mass);
    }
    DensityCurve {
        grid,
        density,
        bandwidth: h,
    }
}
