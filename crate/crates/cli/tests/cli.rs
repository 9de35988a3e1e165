//! Black-box checks of the `disent` binary: verbs, exit codes, file outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn disent(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_disent"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("disent_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn train_tiny(tag: &str, extra: &[&str]) -> (PathBuf, Output) {
    let out_dir = tmp_dir(tag);
    let out_str = out_dir.to_string_lossy().into_owned();
    let mut args = vec![
        "train",
        "--loss_terms",
        "VAE",
        "--max_iters",
        "20",
        "--batch_size",
        "8",
        "--seed",
        "3",
        "--log_every",
        "5",
        "--checkpoint_every",
        "10",
        "--output_dir",
        &out_str,
    ];
    args.extend_from_slice(extra);
    let output = disent(&args, &[]);
    (out_dir, output)
}

#[test]
fn train_succeeds_and_prints_checkpoint_path() {
    let (out_dir, output) = train_tiny("train_ok", &[]);
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("ckpt_final.ckpt"), "stdout: {stdout}");
    assert!(out_dir.join("ckpt_final.ckpt").exists());
    assert!(out_dir.join("train.jsonl").exists());
    assert!(out_dir.join("config.resolved.json").exists());
}

#[test]
fn unknown_flag_exits_with_config_code() {
    let (_, output) = train_tiny("train_badflag", &["--optimzer.lr", "0.1"]);
    assert_eq!(output.status.code(), Some(2), "typo'd keys must be code 2");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("optimzer"), "stderr: {stderr}");
}

#[test]
fn unknown_loss_term_exits_with_config_code() {
    let output = disent(&["train", "--loss_terms", "SuperVAE"], &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("BTCVAE"), "error should list valid terms: {stderr}");
}

#[test]
fn conflicting_terms_exit_with_config_code() {
    let output = disent(&["train", "--loss_terms", "BetaVAE", "BTCVAE"], &[]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("BetaVAE") && stderr.contains("BTCVAE"), "{stderr}");
}

#[test]
fn env_seed_overrides_config() {
    let (out_dir, output) = train_tiny("train_envseed", &[]);
    assert!(output.status.success());
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["seed"], 3);

    let out_dir2 = tmp_dir("train_envseed2");
    let out_str = out_dir2.to_string_lossy().into_owned();
    let output = disent(
        &[
            "train", "--loss_terms", "VAE", "--max_iters", "5", "--batch_size", "8",
            "--seed", "3", "--output_dir", &out_str,
        ],
        &[("DISENT_SEED", "99")],
    );
    assert!(output.status.success());
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir2.join("config.resolved.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["seed"], 99);
}

#[test]
fn evaluate_and_traverse_roundtrip() {
    let (out_dir, output) = train_tiny("eval_roundtrip", &[]);
    assert!(output.status.success());
    let ckpt = out_dir.join("ckpt_final.ckpt");

    let report = out_dir.join("report.json");
    let output = disent(
        &[
            "evaluate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed.get("mig").is_some());

    let tdir = out_dir.join("trav");
    let output = disent(
        &[
            "traverse",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--sample",
            "5",
            "--steps",
            "4",
            "--range",
            "2.0",
            "--out",
            tdir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(tdir.join("traversal_grid.pgm").exists());
    assert!(tdir.join("traversal_stats.json").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("max pixel change"), "{stdout}");
}

#[test]
fn evaluate_csv_mode() {
    let dir = tmp_dir("eval_csv");
    let codes = dir.join("codes.csv");
    let factors = dir.join("factors.csv");
    let mut ct = String::from("z0,z1\n");
    let mut ft = String::from("f0,f1\n");
    for a in 0..3 {
        for b in 0..4 {
            ct.push_str(&format!("{a}.0,{b}.0\n"));
            ft.push_str(&format!("{a},{b}\n"));
        }
    }
    std::fs::write(&codes, ct).unwrap();
    std::fs::write(&factors, ft).unwrap();
    let report = dir.join("report.json");
    let output = disent(
        &[
            "evaluate",
            "--codes",
            codes.to_str().unwrap(),
            "--factors",
            factors.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed["mig"].as_f64().unwrap() > 0.9);
}

#[test]
fn render_dataset_writes_pgms_and_index() {
    let dir = tmp_dir("render");
    let output = disent(&["render-dataset", "--out", dir.to_str().unwrap()], &[]);
    assert!(output.status.success());
    assert!(dir.join("index.csv").exists());
    assert!(dir.join("img_000000.pgm").exists());
    assert!(dir.join("img_002303.pgm").exists());
    let count = std::fs::read_dir(&dir)
        .unwrap()
        .filter(|e| {
            Path::new(&e.as_ref().unwrap().file_name())
                .extension()
                .is_some_and(|x| x == "pgm")
        })
        .count();
    assert_eq!(count, 2304);
    let index = std::fs::read_to_string(dir.join("index.csv")).unwrap();
    assert!(index.starts_with("index,shape,scale,pos_x,pos_y,intensity,file"));
}

#[test]
fn missing_arguments_are_config_errors() {
    assert_eq!(disent(&["evaluate"], &[]).status.code(), Some(2));
    assert_eq!(disent(&["traverse"], &[]).status.code(), Some(2));
    assert_eq!(disent(&["render-dataset"], &[]).status.code(), Some(2));
    assert_eq!(disent(&["bogus-verb"], &[]).status.code(), Some(2));
    assert_eq!(disent(&[], &[]).status.code(), Some(2));
    assert_eq!(
        disent(&["evaluate", "--checkpoint", "/no/such/file.ckpt"], &[]).status.code(),
        Some(2)
    );
}
