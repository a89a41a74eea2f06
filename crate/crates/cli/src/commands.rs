use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ndarray::s;
use quivernet::attacks::{run_attack_suite, AdversarialSet};
use quivernet::data_io::{write_archive, write_report, write_report_json, ArchiveManifest, Dataset, DetectionReport};
use quivernet::detect::{grid_csv, CalibratedDetector, GridResult};
use quivernet::nn::{
    accuracy, curves_csv, read_checkpoint, train as fit, write_checkpoint, CheckpointManifest, Mlp, TrainConfig,
};
use quivernet::pipeline::{calibrate_detector, detection_report, induced_matrices, Calibrated};
use quivernet::quiver::Region;
use quivernet::verify::run_all;
use serde_json::json;

use crate::config::RunConfig;
use crate::{ConfigError, VerificationFailed};

const MODEL: &str = "model";
const DETECTOR: &str = "detector";
const ATTACK_INDEX: &str = "attacks.json";
/// Rows per block when writing matrix archives.
const MATRIX_BLOCK: usize = 1000;

fn run_id(cfg: &RunConfig) -> String {
    format!("seed-{}", cfg.seed)
}

/// Creates the output directory and embeds the resolved config.
fn prepare(cfg: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;
    Ok(&cfg.out)
}

fn write_manifest(cfg: &RunConfig, command: &str, inputs: serde_json::Value, outputs: &[String]) -> anyhow::Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "run_id": run_id(cfg),
        "inputs": inputs,
        "outputs": outputs,
        "config": "config.toml",
    });
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn load_model(dir: &Path) -> anyhow::Result<Mlp<f32>> {
    let (mlp, _) = read_checkpoint(dir, MODEL).with_context(|| format!("loading checkpoint from {}", dir.display()))?;
    Ok(mlp)
}

fn check_fit(mlp: &Mlp<f32>, data: &Dataset) -> anyhow::Result<()> {
    if mlp.input_dim() != data.input_dim() || mlp.output_dim() != data.class_count() {
        bail!(ConfigError(format!(
            "model is {} -> {}, dataset is {} -> {}",
            mlp.input_dim(),
            mlp.output_dim(),
            data.input_dim(),
            data.class_count()
        )));
    }
    Ok(())
}

fn train_model(cfg: &RunConfig, tr: &Dataset, te: &Dataset) -> anyhow::Result<(Mlp<f32>, String)> {
    let spec = cfg.spec(tr);
    let (mlp, curves) = fit(Mlp::<f32>::init(&spec)?, tr, Some(te), &cfg.train)?;
    for c in &curves {
        println!(
            "epoch {:>3}  lr {:.1e}  loss {:.4}  train acc {:.4}  test acc {:.4}",
            c.epoch,
            c.lr,
            c.train_loss,
            c.train_accuracy,
            c.test_accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok((mlp, curves_csv(&curves)?))
}

fn save_model(dir: &Path, mlp: &Mlp<f32>, train: &TrainConfig, seed: u64) -> anyhow::Result<()> {
    let mut manifest = CheckpointManifest::new(mlp.spec(), train.epochs, Some(train.clone()));
    manifest.meta = json!({ "seed": seed });
    write_checkpoint(dir, MODEL, mlp, &manifest)?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> anyhow::Result<()> {
    let (tr, te) = cfg.load_data()?;
    let out = prepare(cfg)?;
    let (mlp, curves) = train_model(cfg, &tr, &te)?;
    save_model(out, &mlp, &cfg.train, cfg.seed)?;
    fs::write(out.join("curves.csv"), curves)?;
    write_manifest(cfg, "train", json!({ "data": cfg.data }), &["model".into(), "curves.csv".into()])
}

/// File names for the sets, made unique when a method repeats.
fn set_names(sets: &[AdversarialSet]) -> Vec<String> {
    sets.iter()
        .enumerate()
        .map(|(i, s)| {
            let m = &s.params.method;
            if sets.iter().filter(|o| &o.params.method == m).count() > 1 {
                format!("{m}-{i}")
            } else {
                m.clone()
            }
        })
        .collect()
}

fn save_sets(cfg: &RunConfig, dir: &Path, sets: &[AdversarialSet]) -> anyhow::Result<Vec<String>> {
    if sets.is_empty() {
        return Ok(Vec::new());
    }
    let names = set_names(sets);
    fs::create_dir_all(dir)?;
    for (s, name) in sets.iter().zip(&names) {
        s.write(dir, name, &run_id(cfg))?;
        println!("{:<8} flipped {:>6} / {}", s.name(), s.flip_count(), s.len());
    }
    fs::write(dir.join(ATTACK_INDEX), serde_json::to_string_pretty(&names)?)?;
    Ok(names)
}

fn load_sets(dir: &Path) -> anyhow::Result<Vec<AdversarialSet>> {
    let index = dir.join(ATTACK_INDEX);
    let names: Vec<String> =
        serde_json::from_str(&fs::read_to_string(&index).with_context(|| format!("reading {}", index.display()))?)?;
    names
        .iter()
        .map(|n| AdversarialSet::read(dir, n).with_context(|| format!("loading adversarial set '{n}'")))
        .collect()
}

pub fn attack(cfg: &RunConfig, model: &Path) -> anyhow::Result<()> {
    let mlp = load_model(model)?;
    let (_, te) = cfg.load_data()?;
    check_fit(&mlp, &te)?;
    let out = prepare(cfg)?;
    let sets = run_attack_suite(&mlp, &te, &cfg.detect.attacks, cfg.detect.attack_seed)?;
    let names = save_sets(cfg, out, &sets)?;
    write_manifest(cfg, "attack", json!({ "model": model, "data": cfg.data }), &names)
}

pub fn matrices(
    cfg: &RunConfig,
    model: &Path,
    train_split: bool,
    count: Option<usize>,
    adversarial: Option<(&Path, &str)>,
) -> anyhow::Result<()> {
    let mlp = load_model(model)?;
    let (x, labels) = match adversarial {
        Some((dir, name)) => {
            let set = AdversarialSet::read(dir, name)?;
            (set.inputs, set.original_pred)
        }
        None => {
            let (tr, te) = cfg.load_data()?;
            let d = if train_split { tr } else { te };
            check_fit(&mlp, &d)?;
            (d.images().clone(), d.labels().to_vec())
        }
    };
    let n = count.unwrap_or(x.nrows()).min(x.nrows());
    if mlp.input_dim() != x.ncols() {
        bail!(ConfigError(format!("samples have {} features, model expects {}", x.ncols(), mlp.input_dim())));
    }
    let out = prepare(cfg)?;
    let wide = mlp.cast::<f64>();
    let mut stored = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for start in (0..n).step_by(MATRIX_BLOCK) {
        let end = (start + MATRIX_BLOCK).min(n);
        for m in induced_matrices(&wide, x.slice(s![start..end, ..]).view(), &cfg.detect.policy)? {
            predicted.push(match m.region {
                Region::Class(j) => Some(j),
                Region::Tie => None,
            });
            stored.push(m.to_f32());
        }
    }
    let (k, c) = (mlp.output_dim(), mlp.input_dim() + 1);
    let mut manifest = ArchiveManifest::new([k, c], n, run_id(cfg));
    manifest.class_labels = labels[..n].iter().map(|&l| Some(l)).collect();
    manifest.predicted_labels = predicted;
    manifest.meta = json!({
        "kind": "induced-matrices",
        "bias": "last column",
        "ratio_zero_threshold": cfg.detect.policy.zero_threshold,
    });
    write_archive(out, "matrices", &stored, &manifest)?;
    println!("wrote {n} matrices of shape {k}x{c}");
    write_manifest(
        cfg,
        "matrices",
        json!({ "model": model, "adversarial": adversarial.map(|(d, a)| (d.to_path_buf(), a.to_string())), "train_split": train_split }),
        &["matrices".into()],
    )
}

fn print_top(results: &[GridResult]) {
    println!("{:>10} {:>10} {:>8} {:>9} {:>9} {:>9}", "eps", "eps'", "t", "defence", "wrong", "diff");
    for r in results {
        println!(
            "{:>10.5} {:>10.5} {:>8} {:>9.4} {:>9.4} {:>9.4}",
            r.eps, r.eps_prime, r.t, r.defence, r.wrong_rejection, r.difference
        );
    }
}

fn print_report(report: &DetectionReport) -> anyhow::Result<()> {
    print!("{}", write_report(report)?);
    Ok(())
}

fn save_report(dir: &Path, report: &DetectionReport) -> anyhow::Result<()> {
    fs::write(dir.join("report.csv"), write_report(report)?)?;
    fs::write(dir.join("report.json"), write_report_json(report)?)?;
    Ok(())
}

fn save_calibration(cfg: &RunConfig, dir: &Path, c: &Calibrated) -> anyhow::Result<Vec<String>> {
    c.detector.write(dir, DETECTOR, &run_id(cfg))?;
    fs::write(dir.join("grid.csv"), grid_csv(&c.ranked)?)?;
    fs::write(dir.join("top.csv"), grid_csv(c.top(cfg.detect.top))?)?;
    save_report(dir, &c.report)?;
    let summary = json!({
        "region_mismatches": c.region_mismatches,
        "calibration_ties": c.calibration_ties,
        "best": c.ranked[0],
    });
    fs::write(dir.join("calibration.json"), serde_json::to_string_pretty(&summary)?)?;
    print_top(c.top(cfg.detect.top));
    print_report(&c.report)?;
    Ok(["detector", "grid.csv", "top.csv", "report.csv", "report.json", "calibration.json"].map(String::from).to_vec())
}

pub fn calibrate(cfg: &RunConfig, model: &Path, adversarial: &Path) -> anyhow::Result<()> {
    let mlp = load_model(model)?;
    let sets = load_sets(adversarial)?;
    let (tr, te) = cfg.load_data()?;
    check_fit(&mlp, &tr)?;
    let out = prepare(cfg)?;
    let c = calibrate_detector(&mlp, &tr, &te, &sets, &cfg.detect)?;
    let outputs = save_calibration(cfg, out, &c)?;
    write_manifest(cfg, "calibrate", json!({ "model": model, "adversarial": adversarial, "data": cfg.data }), &outputs)
}

pub fn detect(cfg: &RunConfig, model: &Path, detector: &Path, adversarial: &Path) -> anyhow::Result<()> {
    let mlp = load_model(model)?;
    let det = CalibratedDetector::read(detector, DETECTOR).with_context(|| format!("loading detector from {}", detector.display()))?;
    let sets = load_sets(adversarial)?;
    let (_, te) = cfg.load_data()?;
    check_fit(&mlp, &te)?;
    let out = prepare(cfg)?;
    let report = detection_report(&mlp, &det, &sets, &te, &cfg.detect.policy)?;
    save_report(out, &report)?;
    print_report(&report)?;
    write_manifest(
        cfg,
        "detect",
        json!({ "model": model, "detector": detector, "adversarial": adversarial, "data": cfg.data }),
        &["report.csv".into(), "report.json".into()],
    )
}

pub fn verify(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = prepare(cfg)?;
    let reports = run_all(&cfg.verify)?;
    println!("{:<18} {:>8} {:>10} {:>12} {:>10} {:>8}  result", "suite", "trials", "violations", "max", "tolerance", "seconds");
    for r in &reports {
        println!(
            "{:<18} {:>8} {:>10} {:>12.3e} {:>10.0e} {:>8.2}  {}",
            r.name,
            r.trials,
            r.violations,
            r.max_violation,
            r.tolerance,
            r.seconds,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    fs::write(out.join("verify.json"), serde_json::to_string_pretty(&reports)?)?;
    write_manifest(cfg, "verify", json!({}), &["verify.json".into()])?;
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.clone()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(failed).into())
    }
}

pub fn report(cfg: &RunConfig, inputs: &[PathBuf]) -> anyhow::Result<()> {
    let out = prepare(cfg)?;
    let mut outputs = Vec::new();
    for (i, p) in inputs.iter().enumerate() {
        let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let r: DetectionReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
        r.validate()?;
        println!("== {}", file.display());
        println!("{:<10} {:>9} {:>11} {:>7}", "attack", "detected", "successful", "total");
        for a in &r.attacks {
            println!("{:<10} {:>9} {:>11} {:>7}", a.attack, a.detected, a.successful, a.total);
        }
        let t = &r.test;
        println!("{:<10} {:>9} {:>11} {:>7}", "", "trusted", "rejected", "");
        println!("{:<10} {:>9} {:>11} {:>7}", "test data", t.trusted, t.wrongly_rejected, t.total);
        println!("{:<10} {:>9.5} {:>11} {:>7.4}", "accuracy", t.accuracy_trusted, "-", t.accuracy_all);
        let name = format!("report-{i}.csv");
        fs::write(out.join(&name), write_report(&r)?)?;
        outputs.push(name);
    }
    write_manifest(cfg, "report", json!({ "inputs": inputs }), &outputs)
}

pub fn pipeline(cfg: &RunConfig) -> anyhow::Result<()> {
    let (tr, te) = cfg.load_data()?;
    let out = prepare(cfg)?;
    let (mlp, curves) = train_model(cfg, &tr, &te)?;
    println!("test accuracy {:.4}", accuracy(&mlp, &te));
    save_model(out, &mlp, &cfg.train, cfg.seed)?;
    fs::write(out.join("curves.csv"), curves)?;
    let sets = run_attack_suite(&mlp, &te, &cfg.detect.attacks, cfg.detect.attack_seed)?;
    save_sets(cfg, &out.join("adversarial"), &sets)?;
    let c = calibrate_detector(&mlp, &tr, &te, &sets, &cfg.detect)?;
    let mut outputs = vec!["model".into(), "curves.csv".into(), "adversarial".into()];
    outputs.extend(save_calibration(cfg, out, &c)?);
    write_manifest(cfg, "pipeline", json!({ "data": cfg.data }), &outputs)
}
