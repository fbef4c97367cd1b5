use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("exal-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn exal(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exal"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn usage_errors_exit_with_two() {
    let out = scratch("usage");
    assert_eq!(code(&exal(&out, &["--bogus", "oracle-check"])), 2);
    assert_eq!(code(&exal(&out, &["explain-sample", "drwas=3"])), 2);
    assert_eq!(code(&exal(&out, &["explain-sample", "draws=three"])), 2);
    assert_eq!(code(&exal(&out, &["explain-sample", "draws"])), 2);
    assert_eq!(code(&exal(&out, &["--workers", "0", "explain-sample"])), 2);
    assert_eq!(code(&exal(&out, &["no-such-command"])), 2);
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn oracle_check_passes() {
    let out = scratch("oracle");
    let o = exal(
        &out,
        &["oracle-check", "agree_fixtures=10", "bound_fixtures=20", "surrogate_fixtures=10", "gradient_fixtures=5", "rollouts=200", "flow_rollouts=5000"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("oracle_check.csv")).unwrap();
    assert!(csv.starts_with("# schema: oracle-check/v1\ncheck,fixtures,violations,worst,tolerance,passed\n"));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn bounds_csv_header() {
    let out = scratch("bounds");
    let o = exal(&out, &["bounds-bench", "fixtures=1", "max_draws=64", "every=32"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema: bounds-bench/v1"));
    assert_eq!(
        lines.next(),
        Some("fixture,theta,sample_count,lower_agree,upper_agree,lower_uniform_proxy,upper_uniform_proxy,exact")
    );
    assert_eq!(lines.count(), 4);
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn config_file_then_overrides() {
    let out = scratch("config");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("run.conf");
    std::fs::write(&cfg, "# small run\ndraws = 7\ntheta = 2\n").unwrap();
    let o = exal(&out, &["explain-sample", "--config", cfg.to_str().unwrap(), "draws=5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["params"]["draws"], "5");
    assert_eq!(summary["params"]["theta"], "2");
    let o = exal(&out, &["explain-sample", "--list-params"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("draws"));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn dimacs_input_is_used() {
    let out = scratch("dimacs");
    std::fs::create_dir_all(&out).unwrap();
    let cnf = out.join("f.cnf");
    std::fs::write(&cnf, "c unit chain\np cnf 2 2\n1 0\n-1 2 0\n").unwrap();
    let o = exal(&out, &["explain-sample", &format!("cnf={}", cnf.display()), "draws=3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.lines().nth(2).unwrap().ends_with(",11"));
    let bad = out.join("bad.cnf");
    std::fs::write(&bad, "p cnf 2 1\n3 0\n").unwrap();
    assert_eq!(code(&exal(&out, &["explain-sample", &format!("cnf={}", bad.display())])), 1);
    let _ = std::fs::remove_dir_all(out);
}
