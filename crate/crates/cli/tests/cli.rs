use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn carrygap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carrygap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic raw inputs plus the generated `config.toml`.
fn dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&carrygap(&[
        "synth", "--preset", "dataset", "--years", "3", "--day-stride", "15", "--seed", "5",
        "--out", s(&data),
    ]));
    data.join("config.toml")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run_manifest.json")).unwrap()).unwrap()
}

#[test]
fn runs_are_reproducible_across_invocations_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let runs: Vec<PathBuf> = [("1", "a"), ("8", "b"), ("8", "c")]
        .iter()
        .map(|(w, name)| {
            let out = tmp.path().join(name);
            ok(&carrygap(&["run", "--config", s(&cfg), "--workers", w, "--out", s(&out)]));
            out
        })
        .collect();
    let first = std::fs::read(runs[0].join("run_manifest.json")).unwrap();
    for r in &runs[1..] {
        assert_eq!(std::fs::read(r.join("run_manifest.json")).unwrap(), first);
    }
    let m = manifest(&runs[0]);
    assert_eq!(m["stages"], serde_json::json!(["extract", "bootstrap", "panel", "regress", "loyo"]));
    assert_eq!(m["inputs"].as_array().unwrap().len(), 7);
    assert!(m["config"].get("workers").is_none());
}

#[test]
fn single_stages_compose_to_the_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let full = tmp.path().join("full");
    ok(&carrygap(&["run", "--config", s(&cfg), "--out", s(&full)]));
    let staged = tmp.path().join("staged");
    for stage in ["extract", "bootstrap", "panel", "regress", "loyo"] {
        ok(&carrygap(&[stage, "--config", s(&cfg), "--out", s(&staged)]));
    }
    let outputs = manifest(&full)["outputs"].as_array().unwrap().clone();
    assert!(outputs.len() > 10);
    for entry in outputs {
        let name = entry["path"].as_str().unwrap();
        assert_eq!(
            std::fs::read(full.join(name)).unwrap(),
            std::fs::read(staged.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn missing_benchmark_file_fails_before_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let text = std::fs::read_to_string(&cfg).unwrap();
    let stripped: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("dgs ="))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg2 = cfg.with_file_name("nodgs.toml");
    std::fs::write(&cfg2, stripped).unwrap();
    let out_dir = tmp.path().join("out");
    let out = carrygap(&["run", "--config", s(&cfg2), "--benchmark", "dgs", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dgs"));
    assert!(!out_dir.join("cells.csv").exists());
    assert!(!out_dir.join(".partial").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "benchmrk = \"ois\"\n").unwrap();
    assert_eq!(carrygap(&["run", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn upstream_schema_mismatch_names_the_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let out_dir = tmp.path().join("out");
    ok(&carrygap(&["extract", "--config", s(&cfg), "--out", s(&out_dir)]));
    ok(&carrygap(&["bootstrap", "--config", s(&cfg), "--out", s(&out_dir)]));
    let cells = out_dir.join("cells.csv");
    let text = std::fs::read_to_string(&cells).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    std::fs::write(&cells, format!("{}\n{body}", header.replace("b_hat", "bhat"))).unwrap();
    let out = carrygap(&["panel", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing columns: [b_hat]"), "{err}");
    assert!(err.contains("unexpected columns: [bhat]"), "{err}");
}

#[test]
fn failed_run_leaves_partial_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = dataset(tmp.path());
    let text = std::fs::read_to_string(&cfg).unwrap();
    let cfg2 = cfg.with_file_name("strict.toml");
    let mc = "\n[mc_check]\nenabled = true\npaths = 2000\nsteps = 50\ntolerance = 1e-9\n";
    let text = match text.find("[mc_check]") {
        Some(i) => {
            let rest = &text[i + "[mc_check]".len()..];
            let end = rest.find("\n[").map_or(text.len(), |j| i + "[mc_check]".len() + j);
            format!("{}{}{}", &text[..i], mc.trim_start(), &text[end..])
        }
        None => text + mc,
    };
    std::fs::write(&cfg2, text).unwrap();
    let out_dir = tmp.path().join("out");
    let out = carrygap(&["run", "--config", s(&cfg2), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    let marker = std::fs::read_to_string(out_dir.join(".partial")).unwrap();
    assert!(marker.contains("loyo"), "{marker}");
    assert!(out_dir.join("cells.csv").is_file());
    assert!(!out_dir.join("run_manifest.json").exists());

    ok(&carrygap(&["run", "--config", s(&cfg), "--out", s(&out_dir)]));
    assert!(!out_dir.join(".partial").exists());
    assert!(out_dir.join("run_manifest.json").is_file());
}

#[test]
fn planted_table_panel_is_recovered_by_regress() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("t2");
    ok(&carrygap(&["synth", "--preset", "table2", "--years", "4", "--seed", "3", "--out", s(&out_dir)]));
    ok(&carrygap(&["regress", "--spec", "pooled", "--out", s(&out_dir)]));
    let truth: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("synth_truth.json")).unwrap()).unwrap();
    let fit: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fit_pooled_ois.json")).unwrap()).unwrap();
    for planted in truth["coefficients"].as_array().unwrap() {
        let name = planted[0].as_str().unwrap();
        let want = planted[1].as_f64().unwrap();
        let term = fit["terms"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["regressor"] == name)
            .unwrap();
        let (est, se) = (term["estimate"].as_f64().unwrap(), term["clustered_se"].as_f64().unwrap());
        assert!((est - want).abs() < 3.0 * se, "{name}: {est} vs {want} (se {se})");
    }
}

#[test]
fn mc_check_reports_and_exits_on_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("mc");
    let pass = carrygap(&[
        "mc-check", "--paths", "20000", "--steps", "200", "--tolerance", "0.1", "--out", s(&out_dir),
    ]);
    ok(&pass);
    let text = String::from_utf8_lossy(&pass.stdout);
    assert_eq!(text.matches("PASS").count(), 2, "{text}");
    assert!(out_dir.join("pathrisk_check.json").is_file());

    let fail = carrygap(&[
        "mc-check", "--paths", "2000", "--steps", "20", "--tolerance", "0.001", "--out", s(&out_dir),
    ]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));
}
