use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn posedo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posedo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let text = r#"{
        "flow": {"hidden": 8, "layers": 2, "pretrain_count": 300,
                 "train": {"max_epochs": 3, "batch_size": 50}},
        "calibrator": {"lambda": 8, "iterations": 2, "kl_samples": 40,
                       "finetune": {"max_epochs": 2}},
        "bench": {"per_count": 1, "repetitions": 1, "epsilons": [5, 120]}
    }"#;
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_config_prints_and_reloads() {
    let o = posedo(&["config"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, &o.stdout).unwrap();
    let again = posedo(&["config", "--config", p.to_str().unwrap()]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(o.stdout, again.stdout);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"pretrain_count\": 100000"));
    let pgps = posedo(&["config", "--kind", "pgps"]);
    assert!(String::from_utf8(pgps.stdout).unwrap().contains("\"epsilon\": 2.0"));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"flow": {"hiden": 50}}"#).unwrap();
    let o = posedo(&["bench", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hiden"), "{}", stderr(&o));

    fs::write(&p, r#"{"bench": {"variants": []}}"#).unwrap();
    let o = posedo(&["bench", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("variants"));

    let o = posedo(&["calibrate", "--instance", "nowhere.json", "--variant", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(posedo(&["calibrate"]).status.code(), Some(1));
    let o = posedo(&["detect-eval", "--instance", "nowhere.json", "--epsilon=-5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epsilons"), "{}", stderr(&o));
    assert_eq!(posedo(&["--help"]).status.code(), Some(0));
}

#[test]
fn pretrain_calibrate_and_detect_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("fresh").join("nested");
    let out_s = out.to_str().unwrap();

    let o = posedo(&["pretrain", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read(out.join("pretrain_manifest.json")).unwrap();
    assert!(out.join("checkpoint.json").exists());
    assert!(out.join("pretrain_dataset.csv").exists());
    let o = posedo(&["pretrain", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("pretrain_manifest.json")).unwrap(), manifest);
    let m: serde_json::Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(m["count"], 300);
    assert_eq!(m["bounds_sha256"].as_str().unwrap().len(), 64);

    let o = posedo(&["instances", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let inst = out.join("instances").join("brock_hommes-K3-1.json");
    assert!(out.join("instances").join("brock_hommes-K3-1_stream.csv").exists());
    let inst_s = inst.to_str().unwrap();

    // baseline needs no checkpoint
    let bare = dir.path().join("bare");
    let o = posedo(&[
        "calibrate",
        "--config",
        &cfg,
        "--out",
        bare.to_str().unwrap(),
        "--instance",
        inst_s,
        "--variant",
        "FBCD-Rand",
        "--seed",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(bare
        .join("calibrate")
        .join("brock_hommes-K3-1_FBCD-Rand_seed4.json")
        .exists());
    let o = posedo(&[
        "calibrate",
        "--config",
        &cfg,
        "--out",
        bare.to_str().unwrap(),
        "--instance",
        inst_s,
        "--variant",
        "PosEDO",
    ]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("checkpoint-required"), "{}", stderr(&o));

    let o = posedo(&[
        "calibrate",
        "--config",
        &cfg,
        "--out",
        out_s,
        "--instance",
        inst_s,
        "--variant",
        "PosEDO",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rec: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("calibrate").join("brock_hommes-K3-1_PosEDO_seed3.json")).unwrap())
            .unwrap();
    assert_eq!(rec["held_thetas"].as_array().unwrap().len(), 30);

    let o = posedo(&["detect-eval", "--config", &cfg, "--out", out_s, "--instance", inst_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("detect_eval").join("brock_hommes-K3-1_summary.csv")).unwrap();
    let counts: Vec<usize> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts.len(), 2);
    assert!(counts[0] >= counts[1]);
    assert!(out.join("detect_eval").join("brock_hommes-K3-1_eps5.csv").exists());

    let o = posedo(&[
        "detect-eval",
        "--config",
        &cfg,
        "--out",
        out_s,
        "--instance",
        inst_s,
        "--epsilon",
        "",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_is_reproducible_and_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = posedo(&[
            "bench",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--variant",
            "FBCD-Arch",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read_to_string(b.join("results.csv")).unwrap());
    assert_eq!(ra.lines().count(), 1 + 3 * 2);

    // posterior variant without a checkpoint: every cell fails, nonzero exit
    let c = dir.path().join("c");
    let o = posedo(&[
        "bench",
        "--config",
        &cfg,
        "--out",
        c.to_str().unwrap(),
        "--variant",
        "PosEDO-Pre",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("3 of the matrix cells failed"), "{}", stderr(&o));
}
