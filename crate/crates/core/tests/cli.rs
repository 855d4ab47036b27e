use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use korder::cli::{read_trajectory_csv, BenchmarkResult};

fn korder(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_korder"))
        .args(args)
        .current_dir(dir)
        .env_remove("KORDER_CFG")
        .output()
        .expect("spawn korder")
}

fn arm_world() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/arm3.world")
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn particle_bench_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = korder(dir.path(), &["bench", "particle", "--T", "100", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "trajectory.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,q0,q1");
    assert_eq!(lines.len(), 102);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
    assert!(read(dir.path(), "costs.txt").contains("wall_left"));
    assert!(read(dir.path(), "params.log").contains("opt/max_iters = 300 # default"));

    let traj = read_trajectory_csv(csv.as_bytes()).unwrap();
    let json = BenchmarkResult::from_json(&read(dir.path(), "result.json")).unwrap();
    assert_eq!(json.trajectory, traj);
    assert_eq!(BenchmarkResult::from_json(&json.to_json().unwrap()).unwrap(), json);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = korder(dir.path(), &["bench", "particle", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(korder(dir.path(), &["bench", "particle", "--T", "3"]).status.code(), Some(1));
    assert_eq!(korder(dir.path(), &["moveto", "--world", "missing.world", "--endeff", "a", "--target", "b"]).status.code(), Some(1));
    assert_eq!(korder(dir.path(), &["bench", "particle", "--opt/max_iters"]).status.code(), Some(1));
    assert_eq!(korder(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn starved_solver_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = korder(dir.path(), &["bench", "particle", "--T", "100", "--k", "2", "--opt/max_iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(read(dir.path(), "params.log").contains("opt/max_iters = 1 # cmdline"));
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(korder(d.path(), &["bench", "particle", "--T", "60", "--k", "3"]).status.code(), Some(0));
    }
    assert_eq!(read(a.path(), "trajectory.csv"), read(b.path(), "trajectory.csv"));
}

#[test]
fn config_precedence_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("motion.cfg"),
        "# solver settings\naula/outer_max = 25\nopt/max_iters = 50\n",
    )
    .unwrap();
    let out = korder(dir.path(), &["bench", "particle", "--opt/max_iters", "80"]);
    assert_eq!(out.status.code(), Some(0));
    let log = read(dir.path(), "params.log");
    assert!(log.contains("aula/outer_max = 25 # file"), "{log}");
    assert!(log.contains("opt/max_iters = 80 # cmdline"));
    assert!(log.contains("aula/mu_init = 1 # default"));
    let first = read(dir.path(), "trajectory.csv");

    // KORDER_CFG beats ./motion.cfg, and a log replays to the same run
    let replay = tempfile::tempdir().unwrap();
    std::fs::write(replay.path().join("motion.cfg"), "opt/max_iters = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_korder"))
        .args(["bench", "particle"])
        .current_dir(replay.path())
        .env("KORDER_CFG", dir.path().join("params.log"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(replay.path(), "trajectory.csv"), first);
    assert!(read(replay.path(), "params.log").contains("opt/max_iters = 80 # file"));
}

#[test]
fn moveto_logs_its_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let world = arm_world();
    let out = korder(
        dir.path(),
        &["--out", "run", "moveto", "--world", world.to_str().unwrap(), "--endeff", "tip", "--target", "goal"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = read(&dir.path().join("run"), "params.log");
    for line in [
        "KOMO/moveTo/precision = 1000 # default",
        "KOMO/moveTo/collisionPrecision = -1 # default",
        "KOMO/moveTo/collisionMargin = 0.1 # default",
        "KOMO/moveTo/finalVelocityZeroPrecision = 10 # default",
        "KOMO/moveTo/alignPrecision = 1000 # default",
    ] {
        assert!(log.contains(line), "missing `{line}` in\n{log}");
    }
    let csv = read(&dir.path().join("run"), "trajectory.csv");
    assert!(csv.starts_with("t,q0,q1,q2\n"));
}

#[test]
fn moveto_unknown_shape() {
    let dir = tempfile::tempdir().unwrap();
    let world = arm_world();
    let out = korder(dir.path(), &["moveto", "--world", world.to_str().unwrap(), "--endeff", "nope", "--target", "goal"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown shape `nope`"));
}

#[test]
fn check_jacobians_command() {
    let dir = tempfile::tempdir().unwrap();
    let world = arm_world();
    let out = korder(dir.path(), &["check-jacobians", "--world", world.to_str().unwrap(), "--points", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.contains("PASS")), "{text}");
}

#[test]
fn solve_task_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.world"), "particle 2\n").unwrap();
    std::fs::write(dir.path().join("goal.txt"), "0 0 0 0 0 0 0 0 0 0 100\n").unwrap();
    std::fs::write(
        dir.path().join("p.tasks"),
        "task smooth acc cost rho=1\ntask goal q cost rho=@goal.txt target=1,2\n",
    )
    .unwrap();
    let out = korder(dir.path(), &["solve", "--world", "p.world", "--tasks", "p.tasks", "--T", "10", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let x = read_trajectory_csv(read(dir.path(), "trajectory.csv").as_bytes()).unwrap();
    assert!((x.config(10)[0] - 1.0).abs() < 0.05 && (x.config(10)[1] - 2.0).abs() < 0.05);
}

#[test]
fn bundled_arm_task_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (world, tasks) = (data.join("arm3.world"), data.join("arm3.tasks"));
    let args = ["solve", "--world", world.to_str().unwrap(), "--tasks", tasks.to_str().unwrap(), "--T", "30"];
    let loose = korder(dir.path(), &args);
    assert_eq!(loose.status.code(), Some(2));
    let tight = korder(dir.path(), &[&args[..], &["--opt/stop_tol", "1e-5"]].concat());
    assert_eq!(tight.status.code(), Some(0), "{}", String::from_utf8_lossy(&tight.stderr));
    assert!(read(dir.path(), "costs.txt").contains("reach"));
}
