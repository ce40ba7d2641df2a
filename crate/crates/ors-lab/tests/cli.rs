//! End-to-end checks of the `ors-lab` binary: subcommand plumbing, file
//! formats, and the three-way exit-code contract of `verify`.

use std::path::Path;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ors-lab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_PIPELINE: &str = r#"
seed = 3

[env]
spec = "chain:5"
gamma = 0.8

[dataset]
policy = "uniform-random"
n_trajectories = 40
horizon = 12

[occupancy]
pretrain_steps = 60
flow_steps_train = 20
batch_size = 16
hidden = [16]
gamma = 0.8

[reward]
steps = 30
batch_size = 8
mc_draws = 4
hidden = [16]

[policy]
steps = 40
batch_size = 16
hidden = [16]
eval_every = 20
eval_episodes = 4
eval_horizon = 10

[analysis]
sigmas = [0.001]
seeds = 5
n_trajectories = 2
max_length = 30
"#;

#[test]
fn pipeline_subcommands_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_PIPELINE);
    let out = dir.path().join("out");
    for args in [
        vec!["gen-data"],
        vec!["train", "--stage", "all"],
        vec!["eval"],
        vec!["analyze"],
    ] {
        let status = binary()
            .args(&args)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{args:?} failed");
    }
    for file in [
        "dataset.jsonl",
        "assumptions.json",
        "occupancy.json",
        "occupancy_loss.csv",
        "reward.json",
        "reward_loss.csv",
        "policy.json",
        "metrics.csv",
        "eval.json",
        "delta_v_sweep.csv",
        "reward_field.csv",
        "manifest.json",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss_v,loss_q,loss_pi,eval_success,eval_return\n"));
}

#[test]
fn missing_prerequisite_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_PIPELINE);
    let out = dir.path().join("out");
    let result = binary()
        .args(["train", "--stage", "reward"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("gen-data"), "stderr: {stderr}");
}

#[test]
fn verify_exit_codes_distinguish_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    // Clean pass on a chain.
    let clean = write_config(
        dir.path(),
        "[env]\nspec = \"chain:5\"\ngamma = 0.9\n\n[dataset]\ngoal = 4\n",
    );
    let status = binary()
        .args(["verify", "--which", "prop1"])
        .arg("--config")
        .arg(&clean)
        .arg("--out")
        .arg(dir.path().join("clean"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // Preconditions unmet on the potential-inverting maze.
    let gated = dir.path().join("gated.toml");
    std::fs::write(&gated, "[env]\nspec = \"umaze\"\ngamma = 0.9\n").unwrap();
    let status = binary()
        .args(["verify", "--which", "theorem1"])
        .arg("--config")
        .arg(&gated)
        .arg("--out")
        .arg(dir.path().join("gated"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Operational error (bad target) exits 1.
    let status = binary()
        .args(["verify", "--which", "nonsense"])
        .arg("--config")
        .arg(&clean)
        .arg("--out")
        .arg(dir.path().join("err"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn maze_files_load_and_report_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let maze_path = dir.path().join("maze.txt");
    std::fs::write(&maze_path, "....\n.#G.\n....\n").unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "[env]\nspec = \"file:{}\"\ngamma = 0.9\n\n[dataset]\npolicy = \"uniform-random\"\nn_trajectories = 2\nhorizon = 4\n",
            maze_path.display()
        ),
    );
    let status = binary()
        .args(["gen-data"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert!(status.success());

    // A malformed maze reports the offending line number.
    std::fs::write(&maze_path, "....\n..q.\n").unwrap();
    let result = binary()
        .args(["gen-data"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn diagnostic_bound_verification_exits_zero_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_PIPELINE);
    let out = dir.path().join("out");
    for args in [vec!["gen-data"], vec!["train", "--stage", "occupancy"]] {
        assert!(binary()
            .args(&args)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
    }
    // The occupancy net is barely trained: diagnostic mode still exits 0 and
    // records a warning in the report.
    let status = binary()
        .args(["verify", "--which", "prop2", "--diagnostic"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify_bound.json")).unwrap())
            .unwrap();
    assert!(report["warning"].is_string());
    assert!(report["C_hat"].is_number());
}
