use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn mview(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mview"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn small_config(rows: usize) -> Value {
    json!({
        "seed": 3,
        "output": "out",
        "data": {"surrogate": {"rows": rows, "family_size": 4, "obs_noise_sd": 0.5}},
        "embedding": {
            "target": "x", "lead": 1,
            "pool_variables": ["x", "y", "z"], "max_lag": 2,
            "dim": 3, "n_views": 20, "k": 8
        },
        "test": {"last_n": 30},
        "inference": {"durbin_replicates": 39, "mixture_replicates": 9}
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Every file of `dir`, sorted by name, with contents.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_writes_family_real_and_manifest_identically_twice() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "run.json", &small_config(120));
    let first = mview(tmp.path(), &["simulate", "--config", "run.json", "--out", "a"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let again = mview(tmp.path(), &["simulate", "--config", "run.json", "--out", "b"]);
    assert!(again.status.success());
    let a = snapshot(&tmp.path().join("a"));
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        ["manifest.json", "model_00.csv", "model_01.csv", "model_02.csv", "model_03.csv", "real.csv"]
    );
    assert_eq!(a, snapshot(&tmp.path().join("b")));
}

#[test]
fn family_of_five_writes_six_panels() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(80);
    cfg["data"]["surrogate"]["family_size"] = json!(5);
    write_config(tmp.path(), "run.json", &cfg);
    assert!(mview(tmp.path(), &["simulate", "--config", "run.json"]).status.success());
    let csvs = snapshot(&tmp.path().join("out"))
        .into_iter()
        .filter(|f| f.0.ends_with(".csv"))
        .count();
    assert_eq!(csvs, 6);
}

#[test]
fn negative_radius_is_a_config_error_naming_the_key() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(80);
    cfg["data"]["surrogate"]["radius"] = json!(-0.1);
    write_config(tmp.path(), "run.json", &cfg);
    for cmd in ["simulate", "validate"] {
        let out = mview(tmp.path(), &[cmd, "--config", "run.json"]);
        assert_eq!(out.status.code(), Some(2));
        assert!(stderr(&out).contains("data.surrogate.radius"), "{}", stderr(&out));
    }
}

#[test]
fn unknown_keys_and_bad_ranges_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("embedding", "colour", json!("red")),
        ("embedding", "lead", json!(0)),
        ("inference", "fdr_q", json!(1.0)),
        ("inference", "alpha", json!(0.0)),
    ];
    for (section, key, value) in cases {
        let mut cfg = small_config(80);
        cfg[section][key] = value;
        write_config(tmp.path(), "run.json", &cfg);
        let out = mview(tmp.path(), &["validate", "--config", "run.json"]);
        assert_eq!(out.status.code(), Some(2), "{section}.{key}: {}", stderr(&out));
    }
    let mut cfg = small_config(80);
    cfg["embedding"]["target"] = json!("w");
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["validate", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("embedding.target"));
}

#[test]
fn validate_accepts_a_good_config() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "run.json", &small_config(80));
    let out = mview(tmp.path(), &["validate", "--config", "run.json"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn missing_data_file_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(80);
    cfg["data"] = json!({"real": "nowhere.csv"});
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["predict", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn predict_last_55_of_636_months_and_report_consistent_correlation() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(636);
    cfg["test"] = json!({"last_n": 55});
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["predict", "--config", "run.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("out/predictions.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 55);
    let (p, o): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let r = pearson(&p, &o);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let printed: f64 = stdout.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((-1.0..=1.0).contains(&printed));
    assert!((printed - r).abs() < 1e-9, "{printed} vs {r}");
}

#[test]
fn englobe_reads_csv_panels_relative_to_the_config() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "sim.json", &small_config(150));
    assert!(mview(tmp.path(), &["simulate", "--config", "sim.json", "--out", "data"]).status.success());
    let mut cfg = small_config(150);
    cfg["data"] = json!({
        "real": "../data/real.csv",
        "models": ["../data/model_00.csv", "../data/model_01.csv", "../data/model_02.csv"]
    });
    let sub = tmp.path().join("runs");
    fs::create_dir(&sub).unwrap();
    write_config(&sub, "run.json", &cfg);
    let out = mview(tmp.path(), &["englobe", "--config", "runs/run.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(sub.join("out/englobe.json")).unwrap()).unwrap();
    assert_eq!(summary["populations"]["sim_sim"].as_array().unwrap().len(), 6);
    assert_eq!(summary["populations"]["sim_real"].as_array().unwrap().len(), 3);
    let p = summary["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn englobe_requires_three_models() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(100);
    cfg["data"]["surrogate"]["family_size"] = json!(2);
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["englobe", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_reject_an_ensemble_too_small_for_alpha() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(100);
    cfg["inference"]["alpha"] = json!(0.05);
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["bounds", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_views >= 40"), "{}", stderr(&out));
}

#[test]
fn compare_without_model_runs_is_rejected() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "sim.json", &small_config(120));
    assert!(mview(tmp.path(), &["simulate", "--config", "sim.json", "--out", "data"]).status.success());
    let mut cfg = small_config(120);
    cfg["data"] = json!({"real": "data/real.csv"});
    write_config(tmp.path(), "run.json", &cfg);
    let out = mview(tmp.path(), &["compare", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn every_command_is_byte_identical_across_reruns_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(130);
    cfg["inference"]["augmentation"] = json!(true);
    write_config(tmp.path(), "run.json", &cfg);
    for cmd in ["simulate", "predict", "englobe", "bounds", "compare"] {
        let mut snaps = Vec::new();
        for (i, threads) in ["1", "3", "1"].iter().enumerate() {
            let out_dir = format!("{cmd}_{i}");
            let out = mview(
                tmp.path(),
                &[cmd, "--config", "run.json", "--out", &out_dir, "--threads", threads],
            );
            assert!(out.status.success(), "{cmd}: {}", stderr(&out));
            snaps.push((snapshot(&tmp.path().join(&out_dir)), out.stdout));
        }
        assert!(!snaps[0].0.is_empty());
        assert_eq!(snaps[0], snaps[1], "{cmd} differs between thread counts");
        assert_eq!(snaps[0], snaps[2], "{cmd} differs between reruns");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "run.json", &small_config(60));
    mview(tmp.path(), &["simulate", "--config", "run.json", "--out", "a"]);
    mview(tmp.path(), &["simulate", "--config", "run.json", "--out", "b", "--seed", "4"]);
    let read = |d: &str| fs::read(tmp.path().join(d).join("real.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], json!(4));
}
