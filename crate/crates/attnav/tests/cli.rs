//! End-to-end tests of the `attnav` binary: exit codes, artifact layout,
//! and determinism of the dumped traces.

use std::path::Path;
use std::process::{Command, Output};

fn attnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attnav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

#[test]
fn help_and_version_exit_zero() {
    let help = attnav(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = stdout(&help);
    for sub in [
        "gen-scenes",
        "train",
        "eval",
        "rollout",
        "gradcheck",
        "export-attn",
        "beta-stats",
        "export-view",
    ] {
        assert!(text.contains(sub), "help lists {sub}");
    }
    assert_eq!(attnav(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    // Missing required --ckpt.
    let out = attnav(&["eval"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--ckpt"));

    // Unknown subcommand.
    assert_eq!(attnav(&["frobnicate"]).status.code(), Some(1));

    // Conflicting corpus sources.
    let out = attnav(&["rollout", "--smoke", "--scenes", "/tmp/nowhere"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let out = attnav(&["eval", "--ckpt", "/definitely/not/here.atnv", "--smoke"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error:"), "got: {}", stderr(&out));
}

#[test]
fn gen_scenes_smoke_writes_twelve_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("scenes");
    let out = attnav(&["gen-scenes", "--smoke", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote 12 scene files"));
    let files: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files.len(), 12);
    assert!(files.iter().all(|f| f.ends_with(".scene")));
}

#[test]
fn rollout_trace_is_deterministic_per_seed() {
    let run = |seed: &str| {
        let out = attnav(&["rollout", "--smoke", "--greedy", "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        stdout(&out)
    };
    let a = run("7");
    let b = run("7");
    assert_eq!(a, b, "same seed must dump the identical trace");
    assert!(a.contains("format_version = 1"));
    assert!(a.contains("[[step]]"));
    assert!(a.contains("[[step.top]]"));
    let c = run("8");
    assert_ne!(a, c, "a different seed should pick a different episode");
}

#[test]
fn rollout_on_explicit_scene_respects_target_flag() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    attnav(&["gen-scenes", "--smoke", "--out", scenes.to_str().unwrap()]);
    let scene = scenes.join("kitchen_train_00.scene");

    // --target missing → runtime error.
    let out = attnav(&["rollout", "--scene", scene.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--target"));

    // Unknown class name → runtime error.
    let out = attnav(&[
        "rollout",
        "--scene",
        scene.to_str().unwrap(),
        "--target",
        "unicorn",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // A real class present in the smoke kitchens.
    let trace_file = dir.path().join("trace.toml");
    let out = attnav(&[
        "rollout",
        "--scene",
        scene.to_str().unwrap(),
        "--target",
        "refrigerator",
        "--greedy",
        "--out",
        trace_file.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let dumped = std::fs::read_to_string(&trace_file).unwrap();
    assert_eq!(dumped, stdout(&out), "file and stdout carry the same trace");
    assert!(dumped.contains("target = \"refrigerator\""));
    assert!(dumped.contains("scene = \"kitchen_train_00\""));
}

#[test]
fn gradcheck_single_instance_passes() {
    let out = attnav(&["gradcheck", "--instances", "1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max relative error"));
    assert!(text.contains("tolerance 1.0e-4: PASS"), "got: {text}");
}

#[test]
fn export_view_dumps_feature_grid() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    attnav(&["gen-scenes", "--smoke", "--out", scenes.to_str().unwrap()]);
    let scene = scenes.join("kitchen_train_00.scene");

    let out = attnav(&[
        "export-view",
        "--scene",
        scene.to_str().unwrap(),
        "--x",
        "2",
        "--y",
        "2",
        "--heading",
        "90",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("n_v = 7"));
    assert!(text.contains("[[bin]]"));

    // A wall/off-grid pose is a runtime error, not a crash.
    let out = attnav(&[
        "export-view",
        "--scene",
        scene.to_str().unwrap(),
        "--x",
        "999",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not valid"));
}

#[test]
fn export_attn_writes_graymaps_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("attn");
    let out = attnav(&[
        "export-attn",
        "--smoke",
        "--seed",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let trace = std::fs::read_to_string(out_dir.join("trace.toml")).unwrap();
    assert!(trace.contains("format_version = 1"));
    assert!(trace.contains("n_v = 7"));
    assert!(trace.contains("[[step]]"));

    for tag in ["p_g", "p_a", "p_m", "p_fused"] {
        let pgm = std::fs::read(out_dir.join(format!("step_001_{tag}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n7 7\n255\n"), "{tag} graymap header");
        assert_eq!(pgm.len(), b"P5\n7 7\n255\n".len() + 49, "{tag} payload");
    }
}

/// One tiny training run, then every checkpoint consumer in sequence.
/// Slow path — a real (if minuscule) training loop — so everything that
/// needs a checkpoint shares this single test.
#[test]
fn train_then_eval_then_beta_stats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let out = attnav(&[
        "train",
        "--preset",
        "smoke",
        "--smoke",
        "--episodes",
        "12",
        "--workers",
        "3",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("trained 12 episodes over 4 updates"));
    for artifact in ["config.toml", "train_log.txt", "final.atnv", "best.atnv"] {
        assert!(
            run_dir.join(artifact).exists(),
            "missing artifact {artifact}"
        );
    }
    let log = std::fs::read_to_string(run_dir.join("train_log.txt")).unwrap();
    assert!(log.starts_with("format_version = 1\nconfig_hash = \""));
    assert_eq!(
        log.lines().filter(|l| l.starts_with("update=")).count(),
        4,
        "one log line per update round"
    );

    let ckpt = run_dir.join("final.atnv");
    let report_dir = dir.path().join("report");
    let out = attnav(&[
        "eval",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--preset",
        "smoke",
        "--smoke",
        "--split",
        "train",
        "--episodes-per-room",
        "2",
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("format_version = 1"));
    assert!(report.contains("[headline]"));
    assert!(report.contains("[[room]]"));
    let on_disk = std::fs::read_to_string(report_dir.join("report.toml")).unwrap();
    assert!(report.starts_with(&on_disk), "stdout carries the report");

    let out = attnav(&[
        "beta-stats",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--preset",
        "smoke",
        "--smoke",
        "--split",
        "train",
        "--episodes-per-room",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let stats = stdout(&out);
    assert!(stats.contains("[[beta_statistics]]"));
    assert!(stats.contains("goal ="));

    // Mismatched dims between config and checkpoint → shape failure, exit 2.
    let out = attnav(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--smoke"]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "full-size config must not load a smoke checkpoint silently"
    );
}

#[test]
fn gen_scenes_full_corpus_writes_120_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("corpus");
    let out = attnav(&["gen-scenes", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote 120 scene files"));
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 120);
    assert!(Path::new(&out_dir).join("kitchen_train_00.scene").exists());
}
