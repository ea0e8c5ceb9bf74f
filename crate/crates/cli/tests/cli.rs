use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dla1d(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dla1d"))
        .current_dir(dir)
        .env_remove("DLA1D_SEED")
        .args(args)
        .output()
        .expect("spawn dla1d")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &[&str] = &["--mu", "0.5", "--t-max", "1000", "--n-runs", "40", "--mode", "fast", "--set", "t_lo=10"];

#[test]
fn exponent_writes_slope_json() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["exponent", "--output-dir", "out"];
    args.extend_from_slice(SMALL);
    let o = dla1d(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&tmp.path().join("out/slope.json"));
    for key in ["slope", "ci_lo", "ci_hi", "t_lo", "t_hi", "n_runs", "seed", "config_hash"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let slope = v["slope"].as_f64().unwrap();
    assert!(v["ci_lo"].as_f64().unwrap() <= slope && slope <= v["ci_hi"].as_f64().unwrap());
    assert_eq!(v["n_runs"], 40);
    let summary = fs::read_to_string(tmp.path().join("out/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("# seed=0 config_hash="));
    assert_eq!(lines.next().unwrap(), "t,mean_R,var_R,n");
    assert_eq!(lines.count(), 31);
}

#[test]
fn same_seed_same_bytes_and_config_echo_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = vec!["ensemble", "--seed", "9", "--output-dir", "a"];
    a.extend_from_slice(SMALL);
    let mut b = a.clone();
    b[4] = "b";
    assert_eq!(dla1d(tmp.path(), &a).status.code(), Some(0));
    assert_eq!(dla1d(tmp.path(), &b).status.code(), Some(0));
    let again = dla1d(tmp.path(), &["ensemble", "--config", "a/config.txt", "--output-dir", "c"]);
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
    let runs = |d: &str| fs::read(tmp.path().join(d).join("runs.csv")).unwrap();
    assert_eq!(runs("a"), runs("b"));
    assert_eq!(runs("a"), runs("c"));
}

#[test]
fn env_seed_applies_unless_flag_given() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed_flag: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dla1d"));
        cmd.current_dir(tmp.path()).env("DLA1D_SEED", "77").args(["run", "--t-max", "100", "--output-dir", out]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        fs::read_to_string(tmp.path().join(out).join("trajectory.csv")).unwrap()
    };
    assert!(run(None, "env").starts_with("# seed=77 "));
    assert!(run(Some("5"), "flag").starts_with("# seed=5 "));
}

#[test]
fn car2_run_writes_event_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(tmp.path(), &["run", "--model", "car2", "--set", "J=4", "--t-max", "100", "--output-dir", "o"]);
    assert_eq!(o.status.code(), Some(0));
    let ev = fs::read_to_string(tmp.path().join("o/events.csv")).unwrap();
    assert_eq!(ev.lines().nth(1).unwrap(), "k,tau,r,Ltilde,Qtilde_q1,Qtilde_q2,in_lambda");
    let tau = fs::read_to_string(tmp.path().join("o/tau.csv")).unwrap();
    assert_eq!(ev.lines().count(), tau.lines().count());
}

#[test]
fn car2diag_without_regenerations_exits_4_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(
        tmp.path(),
        &["car2diag", "--set", "J=24", "--set", "alpha_list=10", "--t-max", "300", "--output-dir", "o"],
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout).contains("no regenerations"));
    let d = json(&tmp.path().join("o/diagnostics.json"));
    assert_eq!(d[0]["n_cycles"], 0);
    assert!(d[0]["speed"].is_null());
}

#[test]
fn car2diag_with_default_alphas_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(tmp.path(), &["car2diag", "--set", "J=8", "--t-max", "2000", "--output-dir", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let d = json(&tmp.path().join("o/diagnostics.json"));
    assert_eq!(d.as_array().unwrap().len(), 8);
}

#[test]
fn validate_passes_at_short_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(
        tmp.path(),
        &["validate", "--mu", "0.5", "--t-max", "1000", "--n-runs", "100", "--set", "t_lo=10", "--output-dir", "o"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let v = json(&tmp.path().join("o/validate.json"));
    assert_eq!(v["ks_pass"], true);
    assert_eq!(v["window_pass"], true);
}

#[test]
fn bad_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["ensemble", "--mu", "-1", "--output-dir", "o"],
        vec!["ensemble", "--set", "colour=red", "--output-dir", "o"],
        vec!["ensemble", "--set", "p_plus=1.5", "--output-dir", "o"],
        vec!["exponent", "--preset", "fig7", "--output-dir", "o"],
    ] {
        let o = dla1d(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    fs::write(tmp.path().join("bad.txt"), "mu=0.5\nmode=sideways\n").unwrap();
    assert_eq!(dla1d(tmp.path(), &["run", "--config", "bad.txt"]).status.code(), Some(2));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn fit_outside_horizon_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(
        tmp.path(),
        &["exponent", "--t-max", "100", "--n-runs", "5", "--set", "t_lo=50", "--set", "t_hi=60", "--output-dir", "o"],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn writes_only_inside_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dla1d(tmp.path(), &["run", "--t-max", "50", "--output-dir", "nested/o"]);
    assert_eq!(o.status.code(), Some(0));
    let top: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, vec!["nested"]);
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("nested/o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["config.txt", "run.json", "tau.csv", "trajectory.csv"]);
}
