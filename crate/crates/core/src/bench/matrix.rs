//! Experiment matrix: instances × variants × repetitions, persisted run logs
//! and metrics recomputed from those logs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instances::InstanceSpec;
use super::metrics::{attributed_thetas, detection_density, mce, pcon, subproblem_error, DensityCurve};
use crate::calibrator::{run_online, CalibrationRecord, CalibratorConfig, RunSeeds, Variant};
use crate::data::ObservationStream;
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::seed::{self, tag};
use crate::simulators::SimulatorSpec;

/// Seeds of repetition `rep` on `instance`. The evaluation seed is shared by
/// every variant and never equals the stream's noise seed.
pub fn run_seeds(instance: &InstanceSpec, rep: usize) -> RunSeeds {
    let run = seed::derive(instance.seed, 0x1000 + rep as u64);
    let mut evaluation = seed::derive(seed::derive(instance.seed, tag::EVALUATION), rep as u64);
    if evaluation == instance.stream_seed {
        evaluation = seed::derive(evaluation, 1);
    }
    RunSeeds::new(run, evaluation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub instance: String,
    pub variant: Variant,
    pub rep: usize,
    pub errors: Vec<f64>,
    pub mce: f64,
    pub pcon: f64,
    pub change_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instance: String,
    pub variant: Variant,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub instance: String,
    pub variant: Variant,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub runs: Vec<RunMetrics>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<RunFailure>,
}

impl MatrixReport {
    pub fn aggregate(&self, instance: &str, variant: Variant, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.instance == instance && a.variant == variant && a.metric == metric)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn run_paths(out_dir: &Path, instance: &str, variant: Variant, rep: usize) -> (PathBuf, PathBuf) {
    let dir = out_dir.join("runs").join(instance).join(variant.name());
    (
        dir.join(format!("rep{rep}.json")),
        dir.join(format!("rep{rep}_trace.csv")),
    )
}

/// Writes the JSON record and the CSV fitness log of one run.
pub fn persist_run(rec: &CalibrationRecord, json: &Path, csv_path: &Path) -> Result<()> {
    if let Some(dir) = json.parent() {
        fs::create_dir_all(dir)?;
    }
    rec.write_json(json)?;
    let f = fs::File::create(csv_path)?;
    rec.write_trace_csv(std::io::BufWriter::new(f))
}

/// Metrics of one run, read back from its persisted files.
pub fn metrics_from_files(
    spec: &SimulatorSpec,
    instance: &InstanceSpec,
    stream: &ObservationStream,
    rep: usize,
    json: &Path,
    csv_path: &Path,
) -> Result<RunMetrics> {
    let rec = CalibrationRecord::read_json(json)?;
    let trace = CalibrationRecord::read_trace_csv(std::io::BufReader::new(fs::File::open(csv_path)?))?;
    let seeds = run_seeds(instance, rep);
    let thetas = attributed_thetas(instance, &rec.held_thetas)?;
    let errors = thetas
        .iter()
        .enumerate()
        .map(|(i, th)| subproblem_error(spec, instance, stream, th, i, seeds.evaluation))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunMetrics {
        instance: instance.id.clone(),
        variant: rec.variant,
        rep,
        mce: mce(&errors)?,
        pcon: pcon(&trace, &instance.segment_bounds())?,
        errors,
        change_points: rec.change_points,
    })
}

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    pub out_dir: PathBuf,
}

/// Runs every cell, persists its logs, then aggregates metrics computed from
/// the files on disk. Failed cells are reported and excluded from the means.
pub fn run_matrix(
    spec: &SimulatorSpec,
    instances: &[InstanceSpec],
    model: Option<&FlowModel>,
    cfg: &CalibratorConfig,
    mc: &MatrixConfig,
) -> Result<MatrixReport> {
    if mc.repetitions == 0 {
        return Err(Error::ConfigInvalid("repetitions must be >= 1".into()));
    }
    fs::create_dir_all(&mc.out_dir)?;
    let streams = instances.iter().map(|i| i.observe(spec)).collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, Variant, usize)> = (0..instances.len())
        .flat_map(|i| {
            mc.variants
                .iter()
                .flat_map(move |&v| (0..mc.repetitions).map(move |r| (i, v, r)))
        })
        .collect();

    let outcomes: Vec<std::result::Result<RunMetrics, RunFailure>> = cells
        .par_iter()
        .map(|&(i, v, r)| {
            let inst = &instances[i];
            let fail = |e: Error| RunFailure {
                instance: inst.id.clone(),
                variant: v,
                rep: r,
                error: e.to_string(),
            };
            let (json, csv_path) = run_paths(&mc.out_dir, &inst.id, v, r);
            let out =
                run_online(&streams[i], spec, model.cloned(), cfg, v, run_seeds(inst, r), &inst.id).map_err(fail)?;
            persist_run(&out.record, &json, &csv_path).map_err(fail)?;
            metrics_from_files(spec, inst, &streams[i], r, &json, &csv_path).map_err(fail)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(m) => runs.push(m),
            Err(f) => failures.push(f),
        }
    }

    let mut aggregates = Vec::new();
    for inst in instances {
        for &v in &mc.variants {
            let cell: Vec<&RunMetrics> = runs
                .iter()
                .filter(|m| m.instance == inst.id && m.variant == v)
                .collect();
            let failed = failures
                .iter()
                .filter(|f| f.instance == inst.id && f.variant == v)
                .count();
            for (metric, vals) in [
                ("mce", cell.iter().map(|m| m.mce).collect::<Vec<_>>()),
                ("pcon", cell.iter().map(|m| m.pcon).collect()),
            ] {
                let (mean, std) = mean_std(&vals);
                aggregates.push(Aggregate {
                    instance: inst.id.clone(),
                    variant: v,
                    metric: metric.into(),
                    mean,
                    std,
                    runs: vals.len(),
                    failures: failed,
                });
            }
            let detections: Vec<f64> = cell
                .iter()
                .flat_map(|m| m.change_points.iter().map(|&c| c as f64))
                .collect();
            let curve = detection_density(&detections, inst.horizon, None);
            let dir = mc.out_dir.join("densities");
            fs::create_dir_all(&dir)?;
            write_density_csv(&curve, &dir.join(format!("{}_{}.csv", inst.id, v.name())))?;
        }
    }
    let report = MatrixReport {
        runs,
        aggregates,
        failures,
    };
    write_results_csv(&report, &mc.out_dir.join("results.csv"))?;
    let f = fs::File::create(mc.out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &report)?;
    Ok(report)
}

/// Columns `instance,variant,metric,mean,std`, values ×100.
pub fn write_results_csv(report: &MatrixReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance", "variant", "metric", "mean", "std"])?;
    for a in &report.aggregates {
        w.write_record([
            a.instance.clone(),
            a.variant.name().to_string(),
            a.metric.clone(),
            format!("{:.6}", a.mean * 100.0),
            format!("{:.6}", a.std * 100.0),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_density_csv(curve: &DensityCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["grid_t", "density"])?;
    for (t, d) in curve.grid.iter().zip(&curve.density) {
        w.write_record([format!("{t:?}"), format!("{d:?}")])?;
    }
    w.flush()?;
    Ok(())
}
