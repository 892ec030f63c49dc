use std::path::{Path, PathBuf};
use std::process::Command;

use dlvsim::panel::reference_grid;
use dlvsim_cli::*;
use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dlvsim"))
}

fn write_raw_grid(path: &Path, rows: usize) {
    let grid = reference_grid();
    let mut text = String::from("date");
    for g in &grid {
        text.push_str(&format!(",{g}"));
    }
    text.push('\n');
    for t in 0..rows {
        text.push_str(&format!("2020-01-{:02}", t + 1));
        for j in 0..grid.len() {
            // Every column dips below the floor once.
            let v = if t == j % rows { 0.001 } else { 0.1 + 0.01 * ((t * 7 + j * 3) % 11) as f64 };
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn write_config(dir: &Path, name: &str, data: &Path, body: serde_json::Value) -> PathBuf {
    let mut cfg = json!({
        "data": data,
        "data_kind": "log_dlv",
        "output": dir.join(name),
        "sampling": {"paths": 4, "length": 200, "seed": 3},
        "metrics": {"acf_x_lags": 8},
    });
    for (k, v) in body.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn small_gan() -> serde_json::Value {
    json!({
        "model": {"kind": "generator", "representation": "increments", "generator": {"hidden_widths": [8, 8]}, "discriminator": {"hidden_widths": [8, 8], "activation": "softplus"}},
        "train": {"method": "gan", "max_updates": 20, "eval_every": 10, "batch_size": 32, "lr_generator": 1e-3, "lr_discriminator": 1e-3, "seed": 4},
    })
}

#[test]
fn ingest_summarizes_the_reference_grid() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    write_raw_grid(&raw, 12);
    let s = cmd_ingest(&raw, 0.01, &[], &dir.path().join("ingest")).unwrap();
    assert_eq!(s.n_x, 32);
    assert_eq!(s.rows, 12);
    assert_eq!(s.floored_count, 32);
    assert!(s.min.iter().all(|v| (v - 0.01f64.ln()).abs() < 1e-12));
    assert!(dir.path().join("ingest/panel.csv").is_file());
    assert!(dir.path().join("ingest/panel.json").is_file());

    let out = bin().args(["ingest", "--data"]).arg(&raw).arg("--out").arg(dir.path().join("cli")).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("N_X=32"));
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = bin().args(["ingest", "--data"]).arg(&missing).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let data = dir.path().join("x.csv");
    cmd_fixture(FixtureKind::Ar1, 1, Some(100), &data).unwrap();
    let cfg = write_config(dir.path(), "bad", &data, json!({"train": {"lr_generator": 0.0}}));
    let out = bin().arg("train").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.lr_generator"));
}

#[test]
fn diverging_training_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    cmd_fixture(FixtureKind::Ar1, 1, Some(200), &data).unwrap();
    let cfg = write_config(
        dir.path(),
        "nan",
        &data,
        json!({
            "model": {"kind": "qmle", "net": {"hidden_widths": [4]}},
            "train": {"method": "qmle", "lr_generator": 1e300, "max_updates": 50, "eval_every": 10},
        }),
    );
    let out = bin().arg("train").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("nan/nonfinite.ckpt").is_file());
}

#[test]
fn generate_is_reproducible_and_evaluate_of_history_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sv.csv");
    cmd_fixture(FixtureKind::VarSv, 2, Some(300), &data).unwrap();
    let cfg = write_config(dir.path(), "gan", &data, small_gan());
    let run = cmd_train(&cfg).unwrap();
    let ckpt = run.dir.join("checkpoint.ckpt");
    let req = GenerateRequest { paths: 3, length: Some(50), seed: 8 };
    let a = dir.path().join("gen_a");
    let b = dir.path().join("gen_b");
    cmd_generate(&ckpt, None, &req, &a).unwrap();
    cmd_generate(&ckpt, None, &req, &b).unwrap();
    for f in ["manifest.json", "path_000.csv", "path_002.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("gen_c");
    cmd_generate(&ckpt, None, &GenerateRequest { seed: 9, ..req }, &other).unwrap();
    assert_ne!(std::fs::read(a.join("path_000.csv")).unwrap(), std::fs::read(other.join("path_000.csv")).unwrap());

    let r = cmd_evaluate(&data, &data, None, Some(&dir.path().join("self.json"))).unwrap();
    assert!(r.values().iter().all(|v| v.abs() < 1e-12), "{:?}", r.values());
    let r = cmd_evaluate(&data, &a, None, None).unwrap();
    assert_eq!(r.paths, 3);
    assert!(r.values().iter().all(|v| v.is_finite()));
}

#[test]
fn report_has_one_row_per_run_and_seven_score_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sv.csv");
    cmd_fixture(FixtureKind::VarSv, 3, Some(300), &data).unwrap();
    let gan = cmd_train(&write_config(dir.path(), "gan", &data, small_gan())).unwrap();
    let var = cmd_train(&write_config(dir.path(), "var", &data, json!({"model": {"kind": "var", "order": 2}}))).unwrap();
    let qmle = cmd_train(&write_config(
        dir.path(),
        "qmle",
        &data,
        json!({"model": {"kind": "qmle", "representation": "increments", "net": {"hidden_widths": [16, 16]}}, "train": {"method": "qmle", "max_updates": 3000, "eval_every": 50, "lr_generator": 1e-3}}),
    ))
    .unwrap();
    let out = dir.path().join("report");
    let table = cmd_report(&[gan.dir, var.dir, qmle.dir], Some(&out)).unwrap();
    let lines: Vec<&str> = table.lines().filter(|l| !l.trim().is_empty()).collect();
    assert!(lines[0].contains("epdf") && lines[0].contains("cc_r"), "{table}");
    let body: Vec<&&str> = lines.iter().filter(|l| l.starts_with("GAN") || l.starts_with("VAR(2)") || l.starts_with("qMLE")).collect();
    assert_eq!(body.len(), 3, "{table}");
    assert!(table.contains('*'));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
}

#[test]
fn tcn_and_compressed_runs_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("factor.csv");
    cmd_fixture(FixtureKind::Factor, 4, Some(300), &data).unwrap();
    let mut body = small_gan();
    body["compression"] = json!({"enabled": true, "components": 5});
    let run = cmd_train(&write_config(dir.path(), "pca", &data, body)).unwrap();
    assert_eq!(run.label, "GAN, N_P=5");
    let gen = dir.path().join("pca_gen");
    let set = cmd_generate(&run.dir.join("checkpoint.ckpt"), None, &GenerateRequest { paths: 2, length: Some(20), seed: 1 }, &gen).unwrap();
    assert_eq!(set.labels.len(), 32);

    let data = dir.path().join("ar1.csv");
    cmd_fixture(FixtureKind::Ar1, 5, Some(300), &data).unwrap();
    let run = cmd_train(&write_config(
        dir.path(),
        "tcn",
        &data,
        json!({
            "model": {"kind": "tcn", "width": 4, "dilations": [1, 2], "discriminator": {"hidden_widths": [8], "activation": "softplus"}},
            "train": {"method": "gan", "max_updates": 10, "eval_every": 5, "batch_size": 16, "seed": 2},
        }),
    ))
    .unwrap();
    assert_eq!(run.log.updates, 10);
    assert!(run.scores.is_some());
}
