use std::fs;
use std::path::{Path, PathBuf};

use posedo::bench::{
    detection_density, make_instances, persist_run, run_matrix, standard_suite, write_density_csv, InstanceSpec,
    MatrixConfig,
};
use posedo::calibrator::{build_pretrain_dataset, pretrain_flow, run_online, Detection, RunSeeds, Variant};
use posedo::data::save_windows;
use posedo::flow::{load_model, save_model, FlowModel};
use posedo::seed::{self, tag};
use posedo::simulators::SimulatorKind;
use posedo::{Error, RunConfig};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ConfigInvalid(_)
            | Error::InfeasibleSchedule(_)
            | Error::CheckpointRequired(_)
            | Error::ParamOutOfBounds { .. } => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn load_config(path: &Option<PathBuf>, out: &Option<PathBuf>, workers: Option<usize>) -> CliResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| CliError::validation(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(o) = out {
        cfg.paths.output_dir = o.clone();
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        // fails only if a pool already exists, which is harmless here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    Ok(cfg)
}

pub fn parse_variant(name: &str) -> CliResult<Variant> {
    Variant::parse(name).map_err(|e| CliError::validation(e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PretrainManifest {
    simulator: &'static str,
    count: usize,
    horizon: usize,
    data_seed: u64,
    flow_seed: u64,
    bounds_sha256: String,
    dataset: String,
    dataset_sha256: String,
}

pub fn pretrain(cfg: &RunConfig) -> CliResult {
    let spec = &cfg.simulator;
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    let data_path = cfg.pretrain_data_path();
    let ckpt_path = cfg.checkpoint_path();
    create_parent(&data_path)?;
    create_parent(&ckpt_path)?;

    let data_seed = cfg.pretrain_data_seed();
    let dataset = build_pretrain_dataset(spec, cfg.flow.pretrain_count, cfg.flow.pretrain_horizon, data_seed)?;
    dataset.save(&data_path)?;
    let dataset_bytes = fs::read(&data_path).map_err(|e| CliError::runtime(e.to_string()))?;
    let bounds = serde_json::to_vec(&spec.param_space).map_err(|e| CliError::runtime(e.to_string()))?;
    let manifest = PretrainManifest {
        simulator: spec.kind.name(),
        count: dataset.len(),
        horizon: cfg.flow.pretrain_horizon,
        data_seed,
        flow_seed: cfg.seeds.flow,
        bounds_sha256: sha256_hex(&bounds),
        dataset: data_path.display().to_string(),
        dataset_sha256: sha256_hex(&dataset_bytes),
    };
    write_json(&out.join("pretrain_manifest.json"), &manifest)?;

    let outcome = pretrain_flow(
        dataset,
        spec.dims(),
        cfg.flow.hidden,
        cfg.flow.layers,
        cfg.seeds.flow,
        &cfg.flow.train,
    )?;
    save_model(&outcome.model, &ckpt_path)?;
    write_json(&out.join("pretrain_report.json"), &outcome.report)?;
    println!(
        "pretrained on {} samples: {} epochs, best loss {:.6}; checkpoint {}",
        manifest.count,
        outcome.report.epochs(),
        outcome.report.best_loss,
        ckpt_path.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum InstanceFile {
    One(Box<InstanceSpec>),
    Many(Vec<InstanceSpec>),
}

pub fn load_instances(path: &Path) -> CliResult<Vec<InstanceSpec>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let parsed: InstanceFile = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: not an instance file: {e}", path.display())))?;
    Ok(match parsed {
        InstanceFile::One(i) => vec![*i],
        InstanceFile::Many(v) => v,
    })
}

fn select_instance(cfg: &RunConfig, path: &Path, id: Option<&str>) -> CliResult<InstanceSpec> {
    let all = load_instances(path)?;
    let inst = match id {
        Some(id) => all.into_iter().find(|i| i.id == id),
        None if all.len() == 1 => all.into_iter().next(),
        None => {
            return Err(CliError::validation(format!(
                "{} holds {} instances; pick one with --instance-id",
                path.display(),
                all.len()
            )))
        }
    }
    .ok_or_else(|| CliError::validation("instance id not found"))?;
    if inst.kind != cfg.simulator.kind {
        return Err(CliError::validation(format!(
            "instance {} is {} but the config simulator is {}",
            inst.id,
            inst.kind.name(),
            cfg.simulator.kind.name()
        )));
    }
    inst.validate(&cfg.simulator)?;
    Ok(inst)
}

fn load_checkpoint(cfg: &RunConfig, required: bool) -> CliResult<Option<FlowModel>> {
    let path = cfg.checkpoint_path();
    if !required {
        return Ok(None);
    }
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(load_model(&path)?))
}

fn single_run_seeds(run: u64, instance: &InstanceSpec) -> RunSeeds {
    let mut evaluation = seed::derive(run, tag::EVALUATION);
    if evaluation == instance.stream_seed {
        evaluation = seed::derive(evaluation, 1);
    }
    RunSeeds::new(run, evaluation)
}

pub fn calibrate(cfg: &RunConfig, instance: &Path, id: Option<&str>, variant: &str) -> CliResult {
    let variant = parse_variant(variant)?;
    let inst = select_instance(cfg, instance, id)?;
    let stream = inst.observe(&cfg.simulator)?;
    let model = load_checkpoint(cfg, variant.needs_model())?;
    let seeds = single_run_seeds(cfg.seeds.run, &inst);
    let outcome = run_online(
        &stream,
        &cfg.simulator,
        model,
        &cfg.calibrator,
        variant,
        seeds,
        &inst.id,
    )?;
    let rec = &outcome.record;
    if variant.detection() == Detection::Posterior && rec.replay_change_points(rec.epsilon) != rec.change_points {
        return Err(CliError::runtime("change points do not replay from the KL trace"));
    }
    let dir = cfg.paths.output_dir.join("calibrate");
    let stem = format!("{}_{}_seed{}", inst.id, variant.name(), cfg.seeds.run);
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}_trace.csv"));
    persist_run(rec, &json, &csv)?;
    println!(
        "{} {}: change points {:?}, final fitness {:.6e}; wrote {}",
        inst.id,
        variant,
        rec.change_points,
        rec.held_fitness.last().copied().unwrap_or(f64::NAN),
        json.display()
    );
    Ok(())
}

fn bench_instances(cfg: &RunConfig) -> CliResult<Vec<InstanceSpec>> {
    match &cfg.bench.instances {
        Some(p) => {
            let all = load_instances(p)?;
            for i in &all {
                if i.kind != cfg.simulator.kind {
                    return Err(CliError::validation(format!(
                        "instance {} has the wrong simulator",
                        i.id
                    )));
                }
                i.validate(&cfg.simulator)?;
            }
            Ok(all)
        }
        None => {
            let (horizon, counts) = standard_suite(cfg.simulator.kind);
            Ok(make_instances(
                &cfg.simulator,
                horizon,
                &counts,
                cfg.bench.per_count,
                cfg.seeds.stream,
            )?)
        }
    }
}

pub fn bench(cfg: &RunConfig) -> CliResult {
    let instances = bench_instances(cfg)?;
    let out = &cfg.paths.output_dir;
    write_json(&out.join("instances.json"), &instances)?;
    let needs_model = cfg.bench.variants.iter().any(|v| v.needs_model());
    let model = load_checkpoint(cfg, needs_model)?;
    let mc = MatrixConfig {
        variants: cfg.bench.variants.clone(),
        repetitions: cfg.bench.repetitions,
        out_dir: out.clone(),
    };
    let report = run_matrix(&cfg.simulator, &instances, model.as_ref(), &cfg.calibrator, &mc)?;
    for a in &report.aggregates {
        println!(
            "{:<24} {:<10} {:<4} {:>12.4} ± {:<10.4} (runs {}, failed {})",
            a.instance,
            a.variant.name(),
            a.metric,
            a.mean * 100.0,
            a.std * 100.0,
            a.runs,
            a.failures
        );
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("failed: {} {} rep {}: {}", f.instance, f.variant, f.rep, f.error);
        }
        return Err(CliError::runtime(format!(
            "{} of the matrix cells failed",
            report.failures.len()
        )));
    }
    println!("wrote {}", out.join("results.csv").display());
    Ok(())
}

pub fn detect_eval(cfg: &RunConfig, instance: &Path, id: Option<&str>) -> CliResult {
    let inst = select_instance(cfg, instance, id)?;
    let stream = inst.observe(&cfg.simulator)?;
    let model = load_checkpoint(cfg, true)?
        .ok_or_else(|| CliError::from(Error::CheckpointRequired(Variant::PosEdo.name().into())))?;
    let dir = cfg.paths.output_dir.join("detect_eval");
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut summary = String::from("epsilon,runs,detections\n");
    for &eps in &cfg.bench.epsilons {
        let calib = posedo::CalibratorConfig {
            epsilon: eps,
            ..cfg.calibrator.clone()
        };
        let runs = (0..cfg.bench.repetitions)
            .into_par_iter()
            .map(|r| {
                let seeds = single_run_seeds(seed::derive(cfg.seeds.run, r as u64), &inst);
                run_online(
                    &stream,
                    &cfg.simulator,
                    Some(model.clone()),
                    &calib,
                    Variant::PosEdo,
                    seeds,
                    &inst.id,
                )
                .map(|o| o.record.change_points)
            })
            .collect::<posedo::Result<Vec<_>>>()?;
        let detections: Vec<f64> = runs.iter().flatten().map(|&c| c as f64).collect();
        let curve = detection_density(&detections, inst.horizon, None);
        write_density_csv(&curve, &dir.join(format!("{}_eps{eps}.csv", inst.id)))?;
        summary.push_str(&format!("{eps},{},{}\n", runs.len(), detections.len()));
        println!(
            "epsilon {eps}: {} detections over {} runs",
            detections.len(),
            runs.len()
        );
    }
    fs::write(dir.join(format!("{}_summary.csv", inst.id)), summary).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}

pub fn instances(cfg: &RunConfig) -> CliResult {
    let all = bench_instances(cfg)?;
    let dir = cfg.paths.output_dir.join("instances");
    write_json(&dir.join("instances.json"), &all)?;
    for inst in &all {
        write_json(&dir.join(format!("{}.json", inst.id)), inst)?;
        let stream = inst.observe(&cfg.simulator)?;
        save_windows(&dir.join(format!("{}_stream.csv", inst.id)), stream.windows())?;
    }
    println!("wrote {} instances to {}", all.len(), dir.display());
    Ok(())
}

pub fn print_config(path: &Option<PathBuf>, kind: Option<&str>) -> CliResult {
    let cfg = match (path, kind) {
        (Some(_), _) => load_config(path, &None, None)?,
        (None, Some(k)) => {
            let kind: SimulatorKind = serde_json::from_value(serde_json::Value::String(k.into()))
                .map_err(|_| CliError::validation(format!("unknown simulator kind {k:?}")))?;
            RunConfig::for_kind(kind)
        }
        (None, None) => RunConfig::default(),
    };
    println!("{}", cfg.to_json()?);
    Ok(())
}
