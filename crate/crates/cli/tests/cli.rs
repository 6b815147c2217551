use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn qctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qctrl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn counterexample_config(out: &Path) -> Value {
    json!({
        "instance": {"kind": "counterexample"},
        "risk": {"alpha": 1.0, "eta": 0.5, "theta": 0.0},
        "scenarios": 1,
        "rounding": {"c_sur": 100},
        "evaluation": {"groups": 2, "per_group": 20, "sweep": {"controllers": [1, 2], "range": [-0.5, 0.5], "grid_points": 21, "per_cell": 2}},
        "seed": 3,
        "out": out
    })
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let o = qctrl(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn solve_round_evaluate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &counterexample_config(&out));
    let c = cfg.to_str().unwrap();
    run_ok(&["solve", "--config", c]);
    for f in ["u_con.json", "trace.csv", "breakdown.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // zero noise, one scenario, α = 1, θ = 0: the objective is the plain infidelity
    let b = read_json(&out.join("breakdown.json"));
    assert_eq!(b["per_scenario"].as_array().unwrap().len(), 1);
    assert_eq!(b["total"], b["per_scenario"][0]);
    assert_eq!(b["meta"]["seed"], 3);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# config_hash="));
    assert_eq!(trace.lines().nth(1), Some("iter,objective,grad_norm"));

    let u_con = out.join("u_con.json");
    run_ok(&["round", "--config", c, "--control", u_con.to_str().unwrap()]);
    let d = read_json(&out.join("deviation.json"));
    assert_eq!(d["pass"], true);
    assert_eq!(d["fine_steps"], 100);
    let schedule = fs::read_to_string(out.join("u_bin.csv")).unwrap();
    assert_eq!(schedule.lines().count(), 2 + 2 * 100);

    run_ok(&["evaluate", "--config", c, "--control", out.join("u_bin.csv").to_str().unwrap()]);
    let e = read_json(&out.join("evaluation.json"));
    assert_eq!(e["groups"], 2);
    assert!(e["cvar"].as_f64().unwrap() >= e["mean"].as_f64().unwrap());

    run_ok(&["sweep", "--config", c, "--control", u_con.to_str().unwrap()]);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 1 + 441);
}

#[test]
fn rounding_binary_input_with_unit_ratio_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = counterexample_config(&out);
    cfg["instance"] = json!({"kind": "energy", "q": 2, "t_f": 2.0, "steps": 4});
    let c = write_config(dir.path(), &cfg);
    let control = dir.path().join("u.json");
    fs::write(&control, r#"{"controllers":2,"steps":4,"binary":true,"values":[[1,0,0,1],[0,1,1,0]]}"#).unwrap();
    run_ok(&["round", "--config", c.to_str().unwrap(), "--control", control.to_str().unwrap(), "--csur", "1"]);
    let bin = read_json(&out.join("u_bin.json"));
    assert_eq!(bin["values"], json!([[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]]));
    assert_eq!(read_json(&out.join("deviation.json"))["cumulative_deviation"], 0.0);
}

#[test]
fn shape_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), &counterexample_config(&dir.path().join("out")));
    let control = dir.path().join("u.json");
    fs::write(&control, r#"{"controllers":2,"steps":3,"values":[[0.5,0.5,0.5],[0.5,0.5,0.5]]}"#).unwrap();
    let o = qctrl(&["round", "--config", c.to_str().unwrap(), "--control", control.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_target_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = counterexample_config(&dir.path().join("out"));
    cfg["instance"] = json!({
        "kind": "circuit", "q": 2, "t_f": 5.0, "steps": 5, "topology": [[1, 2]],
        "target": {"source": "file", "path": "nowhere/target.json"}
    });
    let c = write_config(dir.path(), &cfg);
    let o = qctrl(&["solve", "--config", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere/target.json"));
}

#[test]
fn bad_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("config.json");
    fs::write(&p, "{\n  \"instance\": {\"kind\": \"counterexample\"},\n  \"risk\": {\"alpha\": 2.0, \"eta\": 0.1, \"theta\": 0}\n}\n").unwrap();
    let o = qctrl(&["solve", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("risk"));
    fs::write(&p, "{\n  \"instance\": {\"kind\": \"counterexample\"},\n  \"risk\": \n}\n").unwrap();
    let o = qctrl(&["solve", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = counterexample_config(&dir.path().join("unused"));
    cfg["noise"] = json!({"sigma_offset": 0.05});
    cfg["scenarios"] = json!(4);
    cfg["risk"] = json!({"alpha": 0.5, "eta": 0.25, "theta": 1.0});
    let c = write_config(dir.path(), &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        run_ok(&["run", "--config", c.to_str().unwrap(), "--out", o.to_str().unwrap(), "--seed", "9"]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let hash = read_json(&a.join("u_con.json"))["meta"]["config_hash"].clone();
    run_ok(&["run", "--config", c.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(read_json(&a.join("u_con.json"))["meta"]["config_hash"], hash);
}

#[test]
fn instance_build_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = counterexample_config(&out);
    cfg["instance"] = json!({"kind": "energy", "q": 2, "t_f": 5.0, "steps": 10});
    let c = write_config(dir.path(), &cfg);
    run_ok(&["instance", "build", "--config", c.to_str().unwrap()]);
    let inst = read_json(&out.join("instance.json"));
    assert!(inst["dp_threshold"].as_f64().is_some());
    let o = run_ok(&["verify"]);
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 5, "{table}");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = counterexample_config(&dir.path().join("unused"));
    cfg["noise"] = json!({"sigma_offset": 0.05});
    cfg["scenarios"] = json!(6);
    let c = write_config(dir.path(), &cfg);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let o = dir.path().join(threads);
        let status = Command::new(env!("CARGO_BIN_EXE_qctrl"))
            .args(["solve", "--config", c.to_str().unwrap(), "--out", o.to_str().unwrap()])
            .env("QCTRL_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(fs::read(o.join("u_con.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let bad = Command::new(env!("CARGO_BIN_EXE_qctrl"))
        .args(["solve", "--config", c.to_str().unwrap()])
        .env("QCTRL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
