use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dqnlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dqnlab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DQNLAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_step_training_writes_an_empty_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = dqnlab(&["train", "--steps", "0", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = stdout(&o);
    assert!(printed.contains("\"buffer_capacity\": 200000"), "{printed}");
    let run = dir.path().join("run");
    assert_eq!(fs::read_to_string(run.join("episodes.csv")).unwrap(), "start_step,length,return\n");
    let config = fs::read_to_string(run.join("config.json")).unwrap();
    assert!(config.contains("\"total_env_steps\": 0"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"env":"cartpole","snapshot_steps":[300]}"#).unwrap();
    let o = dqnlab(
        &["train", "--config", "c.json", "--steps", "400", "--seed", "2", "--out", "run"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    assert!(run.join("snapshot_300.bin").is_file());
    let config = fs::read_to_string(run.join("config.json")).unwrap();
    assert!(config.contains("\"env\": \"cartpole\"") && config.contains("\"seed\": 2"));
}

#[test]
fn output_root_variable_redirects_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    let o = Command::new(env!("CARGO_BIN_EXE_dqnlab"))
        .args(["train", "--steps", "0", "--out", "run"])
        .current_dir(dir.path())
        .env("DQNLAB_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("run/config.json").is_file());
    assert!(!dir.path().join("run").exists());
}

#[test]
fn phase_and_field_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"snapshot_steps":[1500]}"#).unwrap();
    let o = dqnlab(&["train", "--config", "c.json", "--steps", "1500", "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let o = dqnlab(&["phase", "run", "--checkpoint", "1200", "--window", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let pgm = fs::read_to_string(dir.path().join("run/phase_1200.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n100 100\n255\n"));
    let counts = fs::read_to_string(dir.path().join("run/phase_1200.csv")).unwrap();
    let total: u64 = counts
        .lines()
        .flat_map(|l| l.split(','))
        .map(|c| c.parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 1000);

    let o = dqnlab(&["field", "--run", "run", "--snapshot", "1500", "--out", "f"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let field = fs::read_to_string(dir.path().join("f/field.csv")).unwrap();
    assert_eq!(field.lines().count(), 1 + 40 * 40);
    let trajs = fs::read_to_string(dir.path().join("f/trajectories.csv")).unwrap();
    assert!(trajs.starts_with("traj_id,t,p,v\n"));
}

#[test]
fn stats_over_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    for seed in ["1", "2"] {
        let out = format!("runs/s{seed}");
        let o = dqnlab(&["train", "--env", "cartpole", "--steps", "1000", "--seed", seed, "--out", &out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = dqnlab(&["stats", "runs", "--out", "stats.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stats = fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let mut lines = stats.lines();
    assert_eq!(lines.next(), Some("step,mean,median,p2,p98,n"));
    assert!(lines.next().unwrap().starts_with("1000,"));
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = dqnlab(&["train", "--steps", "300", "--out", "run"], dir.path());
    assert!(o.status.success());
    for args in [
        &["phase", "run", "--checkpoint", "500"][..],
        &["phase", "missing", "--checkpoint", "500"][..],
        &["train", "--epsilon", "2", "--steps", "0"][..],
        &["grid", "--figure", "7"][..],
    ] {
        let o = dqnlab(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("dqnlab: "), "{err}");
    }
    let o = dqnlab(&["train", "--bogus"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn verify_env_and_grad_check_pass() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let o = dqnlab(&["verify-env", "--fixtures", fixtures], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 6);

    let o = dqnlab(&["grad-check", "--probes", "2"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 12);
}
