//! Exit-code and artifact-hygiene checks for the binary.

use std::process::Command;

fn ictal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ictal"))
}

#[test]
fn unknown_flag_exits_2_with_usage_and_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = ictal()
        .current_dir(dir.path())
        .args(["--definitely-not-a-flag"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "no usage text: {stderr}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[train]\nnot_a_key = true\n").unwrap();
    let out = ictal()
        .args([
            "loo",
            "--manifest",
            "/nonexistent",
            "--out",
            dir.path().join("o").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
}

#[test]
fn runtime_failures_exit_1_and_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = ictal()
        .args([
            "train",
            "--manifest",
            "/nonexistent/manifest.txt",
            "--out",
            dir.path().join("o").to_str().unwrap(),
            "--fold",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage `train`"), "stage missing: {stderr}");
}

#[test]
fn gradcheck_prints_per_primitive_lines_and_exits_0() {
    let out = ictal().args(["gradcheck", "--points", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["conv2d_same", "transposed_conv2d", "maxpool2d_same", "end_to_end_total_loss"] {
        assert!(stdout.contains(name), "missing line for {name}");
    }
}

#[test]
fn train_eval_and_attention_map_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = |args: &[&str]| {
        let out = ictal().args(args).output().unwrap();
        assert!(
            out.status.success(),
            "ictal {args:?} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };
    run(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--subjects",
        "3",
        "--seconds",
        "8",
        "--seed",
        "13",
        "--block-seconds",
        "1.024",
        "--window-len",
        "64",
    ]);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "[train]\nepochs = 2\nlearning_rate = 1e-3\nseed = 2\n\n[model]\nwindow_len = 64\ntrunk_filters = [4]\nfc_hidden = 8\n",
    )
    .unwrap();
    let manifest = data.join("manifest.txt");
    let out_dir = dir.path().join("train0");
    run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--fold",
        "0",
        "--config",
        config.to_str().unwrap(),
    ]);
    let checkpoint = out_dir.join("fold_0/checkpoint.ckpt");
    assert!(checkpoint.exists());

    // Scoring reads the window length from the checkpoint, so no config
    // file is needed here.
    let eval_dir = dir.path().join("eval0");
    run(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--fold",
        "0",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.txt")).unwrap();
    assert!(metrics.starts_with("subject: 0"));
    assert!(metrics.contains("sensitivity:"));

    let att_dir = dir.path().join("att0");
    let out = run(&[
        "attention-map",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--fold",
        "1",
        "--out",
        att_dir.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("strongest channel"));
    assert!(att_dir.join("topography.svg").exists());
    let table = std::fs::read_to_string(att_dir.join("topography.csv")).unwrap();
    assert_eq!(table.lines().count(), 23); // header + 22 channels
}
