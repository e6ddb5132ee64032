use serde_json::Value;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn cvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvp")).args(args).env_remove("CAL_THREADS").output().unwrap()
}

fn cvp_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cvp"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn dump_example(dir: &Path, name: &str, args: &[&str]) -> String {
    let mut all = vec!["example", name, "--json"];
    all.extend_from_slice(args);
    let o = cvp(&all);
    assert!(o.status.success());
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, &o.stdout).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn two_point_verifies() {
    let o = cvp(&["example", "two_point", "--beta", "0.3", "--verify"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("0.207025"), "{text}");
    let rows = json(&o);
    let s = rows.as_array().unwrap().iter().find(|r| r["quantity"] == "S").unwrap();
    assert!((s["computed"].as_f64().unwrap() - 0.207025).abs() < 1e-12);
    // flags after the parameters, key=value form
    let o = cvp(&["example", "two_point", "beta=0.3", "--verify", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("quantity,expected,computed,tolerance,pass\n"));
}

#[test]
fn spectrum_row_at_beta_zero() {
    let o = cvp(&["spectrum", "--beta-min", "0", "--beta-max", "0", "--l-max", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,l,lambda"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    let l2 = rows.iter().find(|r| r[1] == "2").unwrap();
    assert!((l2[2].parse::<f64>().unwrap() - 1.0 / 60.0).abs() < 1e-12);
}

#[test]
fn spectrum_finds_negative_eigenvalues() {
    let o = cvp(&["spectrum", "--beta-min", "0.2", "--beta-max", "0.6", "--beta-steps", "3", "--l-max", "40", "--find-negative", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    let neg = v["negative"].as_array().unwrap();
    assert_eq!(neg.len(), 3);
    assert!(neg.iter().all(|r| r["lambda_star"].as_f64().unwrap() < 0.0));
}

#[test]
fn malformed_json_is_a_validation_error() {
    let o = cvp_stdin(&["action", "-"], "{\"f\": 2, \"n\": 1,\n \"points\": [oops]}");
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 2, column 13"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"f": 2, "n": 1, "points": [{"w": 1.0, "re": [[1, 2], [0, 1]]}]}"#).unwrap();
    assert_eq!(cvp(&["action", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cvp(&["example", "no_such_example"]).status.code(), Some(2));
    assert_eq!(cvp(&["example", "two_point", "--gamma", "1"]).status.code(), Some(2));
}

#[test]
fn tolerance_failures_exit_three() {
    // far too few sphere points for the 1% target
    assert_eq!(cvp(&["example", "dirac_sphere_2d", "--N", "20", "--verify"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dump_example(dir.path(), "two_point", &[]);
    assert_eq!(cvp(&["action", &cfg, "--require", "c2"]).status.code(), Some(3));
}

#[test]
fn action_reports_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dump_example(dir.path(), "divergent_tau", &["--tau", "10"]);
    let v = json(&cvp(&["action", &cfg, "--require", "c2"]));
    assert!((v["S"].as_f64().unwrap() - 16.0).abs() < 1e-10);
    let o = cvp(&["action", &cfg, "--format", "csv"]);
    assert!(stdout(&o).lines().any(|l| l.starts_with("S,")));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dump_example(dir.path(), "dirac_sphere_2d", &["--N", "300"]);
    let one = cvp(&["--threads", "1", "action", &cfg]);
    let four = cvp(&["--threads", "4", "action", &cfg]);
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);

    let prob = dir.path().join("problem.json");
    std::fs::write(&prob, r#"{"objective": "S", "constraints": ["C2"], "m": 4, "f": 2, "n": 1, "options": {"restarts": 4}}"#).unwrap();
    let p = prob.to_str().unwrap();
    let one = cvp(&["--threads", "1", "minimize", p, "--seed", "3"]);
    let four = Command::new(env!("CARGO_BIN_EXE_cvp")).args(["minimize", p, "--seed", "3"]).env("CAL_THREADS", "4").output().unwrap();
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn minimize_writes_result_and_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("p.json");
    std::fs::write(&prob, r#"{"objective": "S", "constraints": [{"C3": [-0.3, 1.0]}], "m": 2, "f": 2, "n": 1, "options": {"restarts": 2}}"#).unwrap();
    let out = dir.path().join("run");
    let o = cvp(&["minimize", prob.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.25 * (1.0f64 - 0.09).powi(2)).abs() < 1e-8);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.starts_with("restart,outer,iter,value,grad_norm,penalty\n") && csv.lines().count() > 2);
    // the written configuration is itself a valid input
    let cfg = dir.path().join("best.json");
    std::fs::write(&cfg, serde_json::to_string(&v["config"]).unwrap()).unwrap();
    let s = json(&cvp(&["action", cfg.to_str().unwrap()]))["S"].as_f64().unwrap();
    assert!((s - v["value"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn unbounded_problem_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("p.json");
    std::fs::write(
        &prob,
        r#"{"objective": {"T_plus_nuS": -2.1}, "constraints": ["C2"], "m": 4, "f": 2, "n": 1,
            "options": {"restarts": 1},
            "start": {"f": 2, "n": 1, "points": [
                {"w": 0.25, "re": [[5, 0], [0, 0]]}, {"w": 0.25, "re": [[0, 0], [0, 5]]},
                {"w": 0.25, "re": [[-1, 0], [0, 0]]}, {"w": 0.25, "re": [[0, 0], [0, -1]]}]}}"#,
    )
    .unwrap();
    let o = cvp(&["minimize", prob.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fermion_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dump_example(dir.path(), "identity_violation", &[]);
    let sys = dir.path().join("sys.json");
    let o = cvp(&["fermion", "reconstruct", &cfg, "--out", sys.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cvp(&["fermion", "correlate", sys.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success());
    let v = json(&o);
    assert!(v["roundtrip_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["correlations"].as_array().unwrap().len(), 3);
}

#[test]
fn moments_and_homogeneous() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dump_example(dir.path(), "bubbling", &["--N", "32"]);
    let v = json(&cvp(&["moments", &cfg, "--unions", "50"]));
    assert_eq!(v["inequalities"]["holds"], Value::Bool(true));

    let nu = dump_example(dir.path(), "dirac_cylinder", &[]);
    let v = json(&cvp(&["homogeneous", &nu]));
    assert!((v["TrP0"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(v["local_bound"]["holds"], Value::Bool(true));
    assert_eq!(cvp(&["homogeneous", &nu, "--domain", "sphere:3"]).status.code(), Some(2));
}
