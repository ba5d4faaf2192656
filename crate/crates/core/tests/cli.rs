use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect()
}

fn spfun(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spfun")).args(args).output().unwrap()
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    spfun(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn kv(text: &str, key: &str) -> Option<String> {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
}

#[test]
fn example1_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("example1.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("traj_000.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,z_1,V_s,V_f,V\n"));
    assert!(dir.path().join("traj_019.csv").exists());
    let report = fs::read_to_string(dir.path().join("report.kv")).unwrap();
    assert_eq!(kv(&report, "pass").as_deref(), Some("true"));
    assert!(fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("PASS"));
}

#[test]
fn negative_dt_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("example1.cfg")).unwrap().replace("dt = 1e-3", "dt = -1e-3");
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text).unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("simulation.dt"), "{}", stderr(&o));
}

#[test]
fn unknown_scenario_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "scenario = \"lorenz\"\n").unwrap();
    assert_eq!(spfun(&["check", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(spfun(&["check", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn constant_gain_short_horizon_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("example2_constant.cfg"), dir.path(), &["--t-final", "1000"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("traj_000"));
}

#[test]
fn constant_gain_full_horizon_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("example2_constant.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("report.kv")).unwrap();
    let d: f64 = kv(&report, "value.traj_000.final_distance").unwrap().parse().unwrap();
    assert!(d < 1e-3);
}

#[test]
fn example1_check_reports_threshold() {
    let o = spfun(&["check", config("example1.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let c0: f64 = kv(&stdout(&o), "value.c0_max").unwrap().parse().unwrap();
    assert!((0.45..=0.4999).contains(&c0), "{c0}");
}

#[test]
fn example2_check_passes_theorem_conditions() {
    let o = spfun(&["check", config("example2.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for name in ["rate_lower_slow", "small_gain", "rate_balance", "rate_upper_slow", "rate_lower_fast"] {
        assert_eq!(kv(&out, &format!("check.theorem1.{name}.pass")).as_deref(), Some("true"), "{name}");
    }
}

#[test]
fn corrupted_certificate_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("custom.cfg"))
        .unwrap()
        .replace("{ kind = \"linear\", k = 0.1 }", "{ kind = \"linear\", k = 5.0 }");
    let cfg = dir.path().join("corrupt.cfg");
    fs::write(&cfg, text).unwrap();
    let o = spfun(&["check", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("assumption2.slow_decrease") && err.contains("x=["), "{err}");
}

#[test]
fn runs_are_deterministic_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let cfg = config("custom.cfg");
    assert_eq!(run(&cfg, &a, &["--seed", "5"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &["--seed", "5"]).status.code(), Some(0));
    assert_eq!(run(&a.join("manifest.toml"), &c, &[]).status.code(), Some(0));
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.starts_with("# spfun ") && manifest.contains("seed = 5"));
    for k in 0..4 {
        let name = format!("traj_{k:03}.csv");
        let first = fs::read(a.join(&name)).unwrap();
        assert_eq!(first, fs::read(b.join(&name)).unwrap());
        assert_eq!(first, fs::read(c.join(&name)).unwrap());
    }
    let d = dir.path().join("d");
    assert_eq!(run(&cfg, &d, &["--seed", "6"]).status.code(), Some(0));
    assert_ne!(fs::read(a.join("traj_000.csv")).unwrap(), fs::read(d.join("traj_000.csv")).unwrap());
}

#[test]
fn source_seeking_run_emits_agent_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("source_seeking.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let agents = fs::read_to_string(dir.path().join("agents.csv")).unwrap();
    assert!(agents.starts_with("t,p1_1,p1_2,p2_1"));
    assert!(agents.lines().next().unwrap().ends_with("q4_2"));
    let report = fs::read_to_string(dir.path().join("report.kv")).unwrap();
    for key in ["value.source.final_distance", "value.source.first_entry_time", "value.source.max_formation_error"] {
        assert!(kv(&report, key).is_some(), "{key}");
    }
}

#[test]
fn integral_control_run_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("integral_control.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
