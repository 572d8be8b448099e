//! End-to-end behaviour of the `zoh` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn zoh(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zoh"));
    cmd.args(args).env_remove("ZOH_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn zoh")
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn quadratic_config(trials: usize) -> serde_json::Value {
    json!({
        "objective": { "kind": "quadratic", "diag": [0.5, 1.0, 1.5, 2.0], "noise_zeta": 0.2 },
        "x0": 1.0,
        "trials": trials,
        "base_seed": 7,
        "report": { "stride": 5, "threshold": 0.5 },
        "methods": [
            { "name": "hgd", "method": "zo_hgd", "iterations": 40, "step": { "constant": 0.05 },
              "n_r": 2, "n_c": 2, "min_probability": 0.05 },
            { "name": "sgd", "method": "zo_sgd", "iterations": 40, "step": { "constant": 0.05 }, "n_r": 4 },
            { "name": "scd", "method": "zo_scd", "iterations": 40, "step": { "constant": 0.05 }, "n_c": 2 },
            { "name": "sign", "method": "zo_signsgd", "iterations": 40, "step": { "constant": 0.01 }, "n_r": 4 }
        ]
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Summary text without the wall-time column.
fn numeric_summary(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .map(|l| match l.starts_with('#') {
            true => l.to_string(),
            false => l.rsplit_once(',').unwrap().0.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &quadratic_config(3));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "4")] {
        let out = zoh(
            &[
                "run",
                cfg.to_str().unwrap(),
                "--out",
                dir.to_str().unwrap(),
                "--jobs",
                jobs,
            ],
            &[],
        );
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(numeric_summary(&a), numeric_summary(&b));
    for m in ["hgd", "sgd", "scd", "sign"] {
        for t in 0..3 {
            let name = format!("traces/{m}_trial{t}.csv");
            assert_eq!(
                std::fs::read(a.join(&name)).unwrap(),
                std::fs::read(b.join(&name)).unwrap(),
                "{name}"
            );
        }
    }
}

#[test]
fn trace_files_follow_the_stride() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_config(1);
    cfg["report"]["stride"] = json!(7);
    let path = write_json(tmp.path(), "cfg.json", &cfg);
    let out = zoh(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("traces/hgd_trial0.csv")).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        rows.next().unwrap(),
        "t,f_value,grad_norm_sq,alpha,eta,realized_I_size,actual_queries,nominal_fqc"
    );
    let ts: Vec<usize> = rows
        .map(|r| r.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ts, vec![7, 14, 21, 28, 35, 40]);
    assert!(text.contains("# config_sha256: "));
}

#[test]
fn jsonl_traces_have_a_header_and_one_line_per_row() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_config(1);
    cfg["report"]["stride"] = json!(1);
    let path = write_json(tmp.path(), "cfg.json", &cfg);
    let out = zoh(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
            "--format",
            "jsonl",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("traces/sgd_trial0.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0]["method"], "sgd");
    assert_eq!(lines[40]["t"], 40);
    assert_eq!(lines[40]["realized_I_size"], 0);
}

#[test]
fn seed_override_changes_and_reproduces_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(tmp.path(), "cfg.json", &quadratic_config(2));
    let run = |dir: &str, seed: Option<&str>| {
        let dir = tmp.path().join(dir);
        let envs: Vec<(&str, &str)> = seed.map(|s| vec![("ZOH_SEED", s)]).unwrap_or_default();
        let out = zoh(
            &["run", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()],
            &envs,
        );
        assert!(out.status.success(), "{}", stderr(&out));
        numeric_summary(&dir)
    };
    let base = run("base", None);
    assert_eq!(run("seven", Some("7")), base);
    let other = run("other", Some("99"));
    assert_ne!(other, base);
    assert_eq!(run("other2", Some("99")), other);
    let out = zoh(
        &["run", cfg.to_str().unwrap()],
        &[("ZOH_SEED", "minus one")],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exact_coordinate_descent_reaches_the_predicted_value() {
    // f = x², full coordinate set, exact central differences: x halves every step
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "objective": { "kind": "quadratic", "diag": [1.0] },
        "x0": 1.0,
        "trials": 1,
        "methods": [{ "name": "scd", "method": "zo_scd", "iterations": 10, "step": { "constant": 0.25 },
                      "n_c": 1, "mu_c": 0.5, "output": "last_iterate" }]
    });
    let path = write_json(tmp.path(), "cfg.json", &cfg);
    let out = zoh(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let row = text.lines().find(|l| l.starts_with("scd,")).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[2].parse::<f64>().unwrap(), 2f64.powi(-20));
    assert_eq!(cols[4], "20");
    assert_eq!(cols[5], "20");
}

#[test]
fn config_errors_exit_with_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_json(tmp.path(), "zero.json", &quadratic_config(0));
    let out = zoh(&["run", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("trials"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n  \"objective\": {\n    \"kind\": \"quadratic\",\n    \"diag\": [1.0],,\n",
    )
    .unwrap();
    let out = zoh(&["run", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.json:4:"), "{}", stderr(&out));

    let mut cfg = quadratic_config(1);
    cfg["methods"][0]["n_c"] = json!(9);
    let path = write_json(tmp.path(), "budget.json", &cfg);
    let out = zoh(&["run", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn divergence_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quadratic_config(1);
    cfg["methods"][0]["step"] = json!({ "constant": 50.0 });
    let path = write_json(tmp.path(), "cfg.json", &cfg);
    let out = zoh(
        &[
            "run",
            path.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
}

fn diag_config() -> serde_json::Value {
    json!({
        "targets": [{ "objective": { "kind": "quadratic", "diag": [0.5, 1.0, 1.5, 2.0], "noise_zeta": 0.3 }, "x": 0.5 }],
        "grid": { "n_r": [1, 4], "n_c": [2], "mu": [1e-2], "batch": [1] },
        "trials": 4000,
        "smoothness_pairs": 200
    })
}

#[test]
fn diagnostics_pass_and_negative_control_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_json(tmp.path(), "diag.json", &diag_config());
    let out_dir = tmp.path().join("diag");
    let out = zoh(
        &[
            "diag",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        out.status.success(),
        "{}{}",
        stderr(&out),
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("target 0")).count(),
        2
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bounds.json")).unwrap())
            .unwrap();
    assert_eq!(report[0]["reports"].as_array().unwrap().len(), 2);

    let out = zoh(
        &[
            "diag",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--lipschitz-scale",
            "0.5",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL smoothness"));
}

#[test]
fn diagnostics_reject_empty_grids_and_unknown_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = diag_config();
    cfg["grid"]["mu"] = json!([]);
    let path = write_json(tmp.path(), "empty.json", &cfg);
    let out = zoh(&["diag", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no configurations"));

    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut cfg = diag_config();
    cfg["targets"] = json!([{ "objective": {
        "kind": "cw_attack",
        "classifier": data.join("toy_classifier.json"),
        "images": data.join("toy_images.csv"),
        "lambda": 10.0
    }}]);
    let path = write_json(tmp.path(), "attack.json", &cfg);
    let out = zoh(&["diag", path.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lipschitz"), "{}", stderr(&out));
}

#[test]
fn compare_matches_golden_table() {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let a = fx.join("summary_a.csv");
    let b = fx.join("summary_b.csv");
    let out = zoh(&["compare", a.to_str().unwrap(), b.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        std::fs::read_to_string(fx.join("compare_ab.md")).unwrap()
    );

    let other = fx.join("summary_other.csv");
    let out = zoh(
        &["compare", a.to_str().unwrap(), other.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = zoh(&["compare", a.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bundled_configs_run() {
    let examples = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&examples).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if !name.ends_with(".json") || name.starts_with("diag") {
            continue;
        }
        let out_dir = tmp.path().join(&name);
        let out = zoh(
            &[
                "run",
                path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert!(out_dir.join("summary.csv").exists());
    }
}
