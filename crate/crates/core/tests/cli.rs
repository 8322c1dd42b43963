//! End-to-end checks of the `ganaug` binary: subcommands, config loading,
//! and the documented exit codes (0 ok, 1 config, 2 training/numerical,
//! 3 I/O).

mod common;

use std::process::Command;

use common::temp_dir;

fn ganaug() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ganaug"))
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let out = ganaug().arg(flag).output().unwrap();
        assert!(out.status.success(), "{flag} failed");
    }
    let out = ganaug().args(["toy", "--help"]).output().unwrap();
    assert!(out.status.success());
}

#[test]
fn unknown_flags_are_config_errors() {
    let out = ganaug().args(["toy", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = ganaug().arg("nonsense").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn toy_run_writes_report_and_report_subcommand_reads_it() {
    let dir = temp_dir("cli-toy");
    let config_path = dir.join("config.json");
    // small run: the CLI contract is under test, not the accuracy numbers
    std::fs::write(
        &config_path,
        r#"{
            "seed": 5,
            "cyclegan": {"steps": 60, "batch_size": 16, "lr_g": 1e-3, "lr_d": 1e-3,
                         "lr_classifier": 1e-3, "lambda_cyc": 10.0, "seed": 0, "log_every": 20},
            "svm": {"reg_lambda": 1e-3, "epochs": 3},
            "embed": null,
            "margin_grid": 10
        }"#,
    )
    .unwrap();
    let out_dir = dir.join("run");
    let out = ganaug()
        .args(["toy", "--config"])
        .arg(&config_path)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("report.json").exists());
    assert!(out_dir.join("cyclegan_target2.csv").exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("baseline"), "{stdout}");

    let out = ganaug().args(["report", "--out"]).arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("histogram"), "{stdout}");

    // steps override propagates into the run
    let out2 = dir.join("run2");
    let ok = ganaug()
        .args(["toy", "--config"])
        .arg(&config_path)
        .args(["--out"])
        .arg(&out2)
        .args(["--steps", "5", "--seed", "8"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let report = ganaug_core::experiment::load_report(&out2).unwrap();
    assert_eq!(report.config.cyclegan.steps, 5);
    assert_eq!(report.seed, 8);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_config_exits_one() {
    let dir = temp_dir("cli-badcfg");
    let config_path = dir.join("bad.json");
    std::fs::write(&config_path, r#"{"augmentation": {"reference_class": 0, "target_classes": [9], "counts": [10]}}"#).unwrap();
    let out = ganaug()
        .args(["toy", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // image-smoke without a config is a config error
    let out = ganaug().arg("image-smoke").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_report_exits_three() {
    let out = ganaug()
        .args(["report", "--out", "/nonexistent/ganaug-run"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_image_csv_exits_three() {
    let dir = temp_dir("cli-noimg");
    let config_path = dir.join("cfg.json");
    std::fs::write(
        &config_path,
        format!(
            r#"{{"kind": "image-smoke", "image_csv": "{}/absent.csv",
                 "cyclegan": {{"steps": 1, "batch_size": 1, "lr_g": 1e-4, "lr_d": 1e-4,
                              "lr_classifier": 1e-3, "lambda_cyc": 10.0, "seed": 0, "log_every": 1}},
                 "augmentation": {{"reference_class": 6, "target_classes": [1], "counts": [2]}}}}"#,
            dir.display()
        ),
    )
    .unwrap();
    let out = ganaug()
        .args(["image-smoke", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn embed_subcommand_emits_coordinate_files() {
    let dir = temp_dir("cli-embed");
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "seed": 4,
            "cyclegan": {"steps": 40, "batch_size": 16, "lr_g": 1e-3, "lr_d": 1e-3,
                         "lr_classifier": 1e-3, "lambda_cyc": 10.0, "seed": 0, "log_every": 20},
            "svm": {"reg_lambda": 1e-3, "epochs": 2},
            "embed": {"max_points": 90, "perplexity": 10.0, "iterations": 40,
                      "learning_rate": 200.0, "momentum_initial": 0.5, "momentum_final": 0.8,
                      "momentum_switch": 10, "early_exaggeration": 12.0,
                      "exaggeration_iters": 10, "seed": 0},
            "margin_grid": 10
        }"#,
    )
    .unwrap();
    let out_dir = dir.join("run");
    let out = ganaug()
        .args(["embed", "--config"])
        .arg(&config_path)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let baseline = std::fs::read_to_string(out_dir.join("embedding_baseline.csv")).unwrap();
    assert!(baseline.starts_with("x,y,label"));
    assert!(out_dir.join("embedding_augmented.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}
