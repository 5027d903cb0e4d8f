use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_partwave"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("partwave-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn lemma_n3_passes_with_all_artifacts() {
    let out = scratch("lemma");
    let o = run(&["verify", "lemma", "--n", "3", "--kmax", "200"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["pass"], true);
    assert_eq!(s["results"][0]["estimate_id"], "lemmaQk_n3");
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["kmax"], 200);
    assert!(manifest["code_version"].is_string());
    let csv = std::fs::read_to_string(out.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
    // 17 significant digits
    let lhs = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap();
    assert_eq!(lhs.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    let stdout: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout["pass"], true);
}

#[test]
fn lemma_subcommand_matches_verify() {
    let (a, b) = (scratch("qk-a"), scratch("qk-b"));
    assert_eq!(run(&["lemma", "qk", "--n", "4", "--kmax", "30"], &a).status.code(), Some(0));
    assert_eq!(run(&["verify", "lemma", "--n", "4", "--kmax", "30"], &b).status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("study.csv")).unwrap(), std::fs::read(b.join("study.csv")).unwrap());
}

#[test]
fn malformed_config_exits_1_without_artifacts() {
    let out = scratch("bad");
    let cfg = out.with_extension("toml");
    std::fs::write(&cfg, "seed = 3\nbogus_key = 1\n").unwrap();
    let o = run(&["verify", "lemma", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));
    assert!(!out.exists());
}

#[test]
fn unknown_study_is_an_error() {
    let out = scratch("unknown");
    assert_eq!(run(&["verify", "nonsense"], &out).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn config_values_apply_and_flags_override() {
    let out = scratch("cfg");
    let cfg = out.with_extension("toml");
    std::fs::write(&cfg, "n = 5\nkmax = 40\n").unwrap();
    let o = run(&["verify", "lemma", "--config", cfg.to_str().unwrap(), "--kmax", "20"], &out);
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["results"][0]["estimate_id"], "lemmaQk_n5");
    assert_eq!(s["results"][0]["meta"]["kmax"], 20.0);
}

#[test]
fn failing_study_exits_2() {
    // Two time units are too short for the time-doubling gate.
    let out = scratch("fail");
    let cfg = out.with_extension("toml");
    std::fs::write(
        &cfg,
        "t_end = 2.0\ncount = 3\n[wave_grid]\nr_max = 6.0\ndr = 0.3\ndrho = 0.1\n",
    )
    .unwrap();
    let o = run(&["verify", "strich3D", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(&out)["pass"], false);
}

#[test]
fn worker_count_does_not_change_results() {
    let (a, b) = (scratch("w1"), scratch("w4"));
    let args = ["verify", "genineq2", "--count", "6", "--seed", "4"];
    let mut one = args.to_vec();
    one.extend(["--workers", "1"]);
    let mut four = args.to_vec();
    four.extend(["--workers", "4"]);
    assert_eq!(run(&one, &a).status.code(), Some(0));
    assert_eq!(run(&four, &b).status.code(), Some(0));
    for f in ["study.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_writes_a_trajectory() {
    let out = scratch("sim");
    let cfg = out.with_extension("toml");
    std::fs::write(
        &cfg,
        "t_end = 1.0\n[nld]\njmax2 = 3\nband = 4\ndr = 0.25\nr_max = 20.0\ndrho = 0.07\nrho_max = 3.0\ndt = 0.25\ns = 1.5\n",
    )
    .unwrap();
    let o = run(&["simulate", "nld", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,l2,h1,lambda_h1,x_running");
    assert_eq!(traj.lines().count(), 6);
    let o = run(&["simulate", "linear", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn hankel_transform_round_trips() {
    let out = scratch("hankel");
    let o = run(&["transform", "hankel", "--k", "2", "--n", "3"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(summary(&out)["results"]["round_trip"].as_f64().unwrap() < 1e-6);
    assert!(out.join("study.csv").exists() && out.join("manifest.json").exists());
}
