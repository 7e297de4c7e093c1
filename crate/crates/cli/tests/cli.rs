use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rqn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rqn")).args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A short, fully exploring matrix-game run.
fn train_matrix(dir: &Path, algo: &str, seed: &str) -> Output {
    rqn(&[
        "train", "--algo", algo, "--env", "matrix", "--episodes", "300", "--seed", seed,
        "--epsilon-fixed", "1", "--buffer", "500", "--quiet", "--out", dir.to_str().unwrap(),
    ])
}

#[test]
fn train_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let o = train_matrix(&dir, "rqn", "0");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.json", "metrics.csv", "phi.csv", "params.json", "stats.json", "reconstruction.csv"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().count() > 1);
}

#[test]
fn same_seed_gives_identical_bytes_and_manifest_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(train_matrix(&a, "qmix", "3").status.success());
    assert!(train_matrix(&b, "qmix", "3").status.success());
    let manifest = a.join("run.json");
    let o = rqn(&["train", "--config", manifest.to_str().unwrap(), "--quiet", "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "reconstruction.csv", "params.json"] {
        let want = fs::read(a.join(f)).unwrap();
        assert_eq!(want, fs::read(b.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(want, fs::read(c.join(f)).unwrap(), "{f} differs after replaying the manifest");
    }
}

#[test]
fn different_seeds_diverge() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(train_matrix(&a, "vdn", "0").status.success());
    assert!(train_matrix(&b, "vdn", "1").status.success());
    assert_ne!(fs::read(a.join("params.json")).unwrap(), fs::read(b.join("params.json")).unwrap());
}

#[test]
fn reconstruct_and_evaluate_read_a_finished_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert!(train_matrix(&dir, "vdn", "0").status.success());
    let o = rqn(&["reconstruct", dir.to_str().unwrap()]);
    assert!(o.status.success());
    let out = text(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4, "{out}");
    for (line, name) in lines[1..].iter().zip(["A", "B", "C"]) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells[0], name);
        assert_eq!(cells.len(), 4);
        assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
    let o = rqn(&["evaluate", dir.to_str().unwrap(), "--episodes", "3"]);
    assert!(o.status.success());
    let mean: f64 = text(&o).trim().parse().unwrap();
    assert!(mean.is_finite());
}

#[test]
fn reconstruct_rejects_a_non_matrix_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("pp");
    let o = rqn(&[
        "train", "--algo", "vdn", "--env", "predator_prey", "--episodes", "40", "--buffer", "64",
        "--quiet", "--out", dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.join("reconstruction.csv").exists());
    assert!(!rqn(&["reconstruct", dir.to_str().unwrap()]).status.success());
}

#[test]
fn presets_resolve_to_the_documented_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("t2");
    let o = rqn(&[
        "train", "--preset", "table2", "--algo", "qmix", "--env", "predator_prey", "--n-predators", "4",
        "--capture-penalty", "-0.1", "--episodes", "1", "--quiet", "--out", dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    let flat = manifest.to_string();
    for needle in ["100000", "2000000", "\"n_predators\":4", "-0.1"] {
        assert!(flat.contains(needle), "{needle} not in {flat}");
    }
}

#[test]
fn bad_configs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let out = tmp.path().join("x");
    let o = rqn(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = rqn(&["train", "--env", "matrix", "--batch", "64", "--buffer", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = rqn(&["train", "--env", "nowhere", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = rqn(&["train", "--algo", "dqn"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("div.json");
    fs::write(&cfg, r#"{"optimizer":{"kind":{"kind":"sgd"},"lr":1e200,"clip_norm":null}}"#).unwrap();
    let out = tmp.path().join("d");
    let o = rqn(&[
        "train", "--config", cfg.to_str().unwrap(), "--env", "matrix", "--episodes", "200",
        "--epsilon-fixed", "1", "--buffer", "500", "--quiet", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn aggregate_needs_two_runs_and_writes_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(train_matrix(&a, "vdn", "0").status.success());
    assert_eq!(rqn(&["aggregate", a.to_str().unwrap()]).status.code(), Some(2));
    assert!(train_matrix(&b, "vdn", "1").status.success());
    let agg = tmp.path().join("agg.csv");
    let o = rqn(&["aggregate", a.to_str().unwrap(), b.to_str().unwrap(), "--out", agg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&agg).unwrap();
    let rows = fs::read_to_string(a.join("metrics.csv")).unwrap().lines().count();
    assert_eq!(csv.lines().count(), rows);
}

#[test]
fn theorem_check_passes_on_a_small_sweep() {
    let o = rqn(&["verify-theorem", "--instances", "50", "--seed", "4"]);
    assert!(o.status.success());
    let out = text(&o);
    assert_eq!(out.lines().last(), Some("PASS"));
    assert_eq!(out.lines().filter(|l| l.contains("0 IGM failures")).count(), 6);
    let o = rqn(&["verify-theorem", "--agents", "5", "--actions", "2"]);
    assert_eq!(o.status.code(), Some(2));
}
