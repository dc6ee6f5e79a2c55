use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hjb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjb")).args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pull_pull_structure_reports_its_decision() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pp.json");
    let o = hjb(&["solve", "--problem", "pull_pull", "--h", "1e-2", "--out", path(&out)]);
    assert!(o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("U⁻(0)=0 via u_H"), "{stderr}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["u_H"]["value"], 0.0);
    assert_eq!(v["u_H_reg"]["value"], 1.0);
    assert_eq!(v["config"]["problem"]["builtin"], "pull_pull");
    assert!(v["decision"].as_str().unwrap().contains("U⁺(0)="));
}

#[test]
fn structure_csv_has_both_fields() {
    let o = hjb(&["solve", "--problem", "push_push", "--h", "0.05", "--format", "csv"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x,U_minus,U_plus");
    assert_eq!(rows.len(), 1 + 121);
    for r in &rows[1..] {
        let cols: Vec<f64> = r.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cols[1].abs() < 1e-9 && cols[2].abs() < 1e-9, "{r}");
    }
}

#[test]
fn single_side_dirichlet_solve() {
    let o = hjb(&[
        "solve", "--problem", "state_constraint", "--field", "dirichlet", "--side", "1", "--boundary-value", "0.5",
        "--h", "1e-2",
    ]);
    let v = stdout_json(&o);
    let xs = v["field"]["x"].as_array().unwrap();
    let vals = v["field"]["values"].as_array().unwrap();
    for (x, u) in xs.iter().zip(vals) {
        let (x, u) = (x.as_f64().unwrap(), u.as_f64().unwrap());
        assert!((u - (-x).exp() / 2.0).abs() < 2e-2, "x={x} u={u}");
    }
}

#[test]
fn dirichlet_solve_requires_boundary_value() {
    let o = hjb(&["solve", "--problem", "pull_pull", "--field", "dirichlet", "--h", "1e-2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn push_push_interface_values_vanish() {
    let v = stdout_json(&hjb(&["interface", "--problem", "push_push"]));
    assert_eq!(v["u_H"], 0.0);
    assert_eq!(v["u_H_reg"], 0.0);
    assert_eq!(v["minimizer"]["regular"], true);
}

#[test]
fn lambda_override_applies_to_json_problems() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.json");
    let body = r#"{"dim":1,"lambda":1.0,"delta":1.0,"control":{"min":-1,"max":1,"resolution":0.5},
        "side1":{"c0":1,"c1":-1,"c2":0,"c3":1},"side2":{"c0":1,"c1":1,"c2":0,"c3":1}}"#;
    fs::write(&p, body).unwrap();
    let v = stdout_json(&hjb(&["interface", "--problem", path(&p), "--lambda", "2"]));
    assert_eq!(v["u_H_reg"], 0.5);
    assert_eq!(v["config"]["problem"]["builtin"], Value::Null);
}

#[test]
fn malformed_problem_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"dim": 1, "lambda": "#).unwrap();
    let o = hjb(&["interface", "--problem", path(&p)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn unknown_problem_and_bad_flags_exit_with_config_code() {
    assert_eq!(hjb(&["interface", "--problem", "no_such_problem"]).status.code(), Some(2));
    assert_eq!(hjb(&["interface", "--problem", "pull_pull", "--lambda", "-1"]).status.code(), Some(2));
    assert_eq!(hjb(&["solve"]).status.code(), Some(2));
}

#[test]
fn push_push_slide_is_free_and_regular() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    fs::write(&sched, r#"{"breakpoints":[0],"segments":[{"slide":{"alpha1":-1,"alpha2":1}}]}"#).unwrap();
    let csv = dir.path().join("t.csv");
    let o = hjb(&[
        "simulate", "--problem", "push_push", "--x0", "0.5", "--schedule", path(&sched), "--T", "10", "--dt", "1e-3",
        "--format", "csv", "--out", path(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let summary = text.lines().find_map(|l| l.strip_prefix("# summary: ")).unwrap();
    let s: Value = serde_json::from_str(summary).unwrap();
    assert!(s["total_cost"].as_f64().unwrap() <= 1e-4);
    assert_eq!(s["regular"], true);
    assert!(text.lines().any(|l| l == "t,x,label,mu,step_cost"));
    assert!(text.lines().last().unwrap().contains(",H,"));
}

#[test]
fn filippov_sweep_rows() {
    let v = stdout_json(&hjb(&[
        "approx", "--problem", "pull_pull", "--scheme", "filippov", "--eps", "0.2,0.1", "--h", "1e-2", "--jobs", "2",
    ]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let e: Vec<f64> = rows.iter().map(|r| r["sup_err_Uminus"].as_f64().unwrap()).collect();
    assert!(e[1] < e[0] && e[0] < 0.15, "{e:?}");
    assert_eq!(rows[0]["eps"], 0.2);
}

#[test]
fn combined_sweep_needs_a_delta() {
    let base = ["approx", "--problem", "pull_pull", "--scheme", "combined", "--eps", "0.1", "--h", "2e-2"];
    assert_eq!(hjb(&base).status.code(), Some(2));
    let mut args = base.to_vec();
    args.extend(["--delta-power", "3"]);
    let v = stdout_json(&hjb(&args));
    let d = v["rows"][0]["delta_eps"].as_f64().unwrap();
    assert!((d - 1e-3).abs() < 1e-12);
}

#[test]
fn iteration_cap_exits_with_numerical_code() {
    let o = hjb(&["solve", "--problem", "pull_pull", "--h", "1e-2", "--max-iters", "2"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
