use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn safebar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safebar"))
        .args(args)
        .env_remove("SAFEBAR_OUT")
        .output()
        .expect("binary runs")
}

fn run_in(out: &Path, command: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    safebar(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn files(root: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = vec![];
    walk(root, root, &mut out);
    out.sort();
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "").unwrap();
    let o = run_in(&dir.path().join("out"), "check", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing field"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_in(&out, "check", &scenario("linear.toml"), &["--set", "sampling.colour=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    let missing = dir.path().join("nowhere.toml");
    let o = run_in(&out, "check", &missing, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(missing.to_str().unwrap()));
    assert_eq!(safebar(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(safebar(&["--help"]).status.code(), Some(0));
}

#[test]
fn linear_checks_pass_and_report_rolls_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run_in(out, "check", &scenario("linear.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["sign", "infinitesimal", "monotonicity"] {
        assert_eq!(json(&out.join(format!("checks/{name}.json")))["verdict"], "pass");
    }
    let safety = json(&out.join("checks/safety.json"));
    assert_eq!(safety["verdict"]["kind"], "no_violation_found");
    assert_eq!(safety["coverage"]["boundary_samples"].as_u64().unwrap() + safety["coverage"]["interior_samples"].as_u64().unwrap(), 96);

    let o = safebar(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["rollup"], "PASS");
    assert_eq!(s["checks"].as_array().unwrap().len(), 4);
    let text = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.starts_with("rollup: PASS"));
    assert!(text.contains("under-approximate"));
}

#[test]
fn flipped_barrier_fails_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run_in(
        out,
        "check",
        &scenario("linear.toml"),
        &["--set", "barrier.expr=\"1 - x1^2/10 - x2^2\"", "--set", "checks.run=[\"sign\", \"infinitesimal\"]"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out.join("checks/sign.json"))["verdict"], "fail");
    let o = safebar(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let s = json(&out.join("summary.json"));
    assert_eq!(s["rollup"], "FAIL");
    assert!(s["failed"].as_array().unwrap().iter().any(|c| c == "candidate_sign"));
}

#[test]
fn barrier_grid_max_on_initial_set_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run_in(out, "barrier-eval", &scenario("linear.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&out.join("barrier_summary.json"));
    assert_eq!(s["max_on_x_o"].as_f64().unwrap(), 0.0);
    assert!(s["min_on_x_u"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(out.join("barrier_grid.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,B");
    assert_eq!(lines.count(), 31 * 31);
}

#[test]
fn counterexample_trajectories_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = scenario("counterexample.toml");
    let o = run_in(out, "simulate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run_in(out, "check", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&out.join("checks/sign.json"))["verdict"], "pass");
    assert_eq!(json(&out.join("checks/monotonicity.json"))["verdict"], "pass");
    let listed = json(&out.join("manifest.simulate.json"));
    let trajs: Vec<_> = listed["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a.as_str().unwrap().starts_with("trajectories/"))
        .collect();
    assert_eq!(trajs.len(), 7);
    let first = std::fs::read_to_string(out.join("trajectories/traj_0_0.csv")).unwrap();
    assert!(first.starts_with("t,x1,x2\n0.0000000000000000e0,9.0000000000000002e-1,"));
}

#[test]
fn perturbed_scenario_is_safe_with_disclaimer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run_in(out, "check", &scenario("perturbed.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&out.join("checks/safety.json"));
    assert_eq!(s["coverage"]["selectors"], 16);
    assert!(s["disclaimers"].as_array().unwrap().iter().any(|d| d.as_str().unwrap().contains("under-approximate")));
}

#[test]
fn reach_writes_csv_and_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = run_in(
        out,
        "reach",
        &scenario("perturbed.toml"),
        &["--set", "reach={starts=[[0.5, 0.0], [0.0, 0.5]], horizon=-1.0, node_stride=10}"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for i in 0..2 {
        let bin = std::fs::read(out.join(format!("reach/cloud_{i}.rch1"))).unwrap();
        assert_eq!(&bin[..4], b"RCH1");
        let csv = std::fs::read_to_string(out.join(format!("reach/cloud_{i}.csv"))).unwrap();
        assert!(csv.starts_with("s_index,x1,x2\n0,"));
    }
    let o = run_in(out, "reach", &scenario("perturbed.toml"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

fn without_wall_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for out in [a.path(), b.path()] {
        for (cmd, cfg) in [("check", "linear.toml"), ("simulate", "counterexample.toml"), ("barrier-eval", "linear.toml")] {
            run_in(out, cmd, &scenario(cfg), &["--seed", "5", "--jobs", "2"]);
        }
        safebar(&["report", out.to_str().unwrap()]);
    }
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    for f in &fa {
        let (x, y) = (a.path().join(f), b.path().join(f));
        if f.starts_with("manifest.") {
            assert_eq!(without_wall_time(json(&x)), without_wall_time(json(&y)), "{f}");
        } else {
            assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap(), "{f}");
        }
    }
}

#[test]
fn manifests_cover_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    run_in(out, "check", &scenario("counterexample.toml"), &[]);
    // A smaller rerun must not leave the old trajectories behind.
    run_in(out, "check", &scenario("counterexample.toml"), &["--set", "checks.monotonicity.trajectories=5"]);
    run_in(out, "barrier-eval", &scenario("counterexample.toml"), &["--set", "sampling.per_axis=5"]);
    safebar(&["report", out.to_str().unwrap()]);
    let mut listed: Vec<String> = vec![];
    for f in files(out).iter().filter(|f| f.starts_with("manifest.")) {
        listed.push(f.clone());
        let m = json(&out.join(f));
        listed.extend(m["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap().to_string()));
        if let Some(hash) = m["config_sha256"].as_str() {
            let cfg = format!("config.{}.toml", m["command"].as_str().unwrap());
            let bytes = std::fs::read(out.join(cfg)).unwrap();
            let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            assert_eq!(hash, hex);
        }
    }
    listed.sort();
    listed.dedup();
    assert_eq!(listed, files(out));
    let trajs = files(out).iter().filter(|f| f.starts_with("checks/monotonicity/")).count();
    assert_eq!(trajs, 5);
}

#[test]
fn seed_and_env_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_safebar"))
        .args(["barrier-eval", "--config", scenario("linear.toml").to_str().unwrap(), "--seed", "99"])
        .env("SAFEBAR_OUT", dir.path().join("env-out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = std::fs::read_to_string(dir.path().join("env-out/config.barrier-eval.toml")).unwrap();
    assert!(cfg.contains("seed = 99"));
}

fn write_report(dir: &Path, name: &str, body: &str) {
    std::fs::create_dir_all(dir.join("checks")).unwrap();
    std::fs::write(dir.join("checks").join(name), body).unwrap();
}

fn check_json(name: &str, verdict: &str) -> String {
    format!(r#"{{"check": "{name}", "samples": 3, "worst_margin": -1.0, "witness": null, "verdict": "{verdict}"}}"#)
}

#[test]
fn report_rollups() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_report(d, "a.json", &check_json("alpha", "pass"));
    write_report(d, "b.json", &check_json("beta", "pass"));
    assert_eq!(safebar(&["report", d.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(json(&d.join("summary.json"))["rollup"], "PASS");

    write_report(d, "c.json", &check_json("gamma", "inconclusive"));
    assert_eq!(safebar(&["report", d.to_str().unwrap()]).status.code(), Some(2));
    let s = json(&d.join("summary.json"));
    assert_eq!(s["rollup"], "INCONCLUSIVE");
    assert_eq!(s["inconclusive"], serde_json::json!(["gamma"]));

    write_report(d, "d.json", &check_json("delta", "fail"));
    safebar(&["report", d.to_str().unwrap()]);
    let s = json(&d.join("summary.json"));
    assert_eq!(s["rollup"], "FAIL");
    assert_eq!(s["failed"], serde_json::json!(["delta"]));
    assert_eq!(s["inconclusive"], serde_json::json!(["gamma"]));
    let text = std::fs::read_to_string(d.join("summary.txt")).unwrap();
    assert!(text.contains("failed: delta") && text.contains("inconclusive: gamma"));

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(safebar(&["report", empty.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(json(&empty.path().join("summary.json"))["rollup"], "INCONCLUSIVE");
}
