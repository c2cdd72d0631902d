use std::path::PathBuf;
use std::process::{Command, Output};

fn bridgeless(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridgeless"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    root.join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn formula_prints_float_and_fraction() {
    let o = bridgeless(&["formula", "--n", "4", "--t", "1", "--r", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0.750000 (3/4)");
}

#[test]
fn formula_rejects_bad_domain() {
    let o = bridgeless(&["formula", "--n", "3", "--t", "3", "--r", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn clean_scenario_exits_zero() {
    let o = bridgeless(&["run", &scenario("evm-to-btc.toml")]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("observer: no violations"));
}

#[test]
fn violation_exits_nonzero() {
    let o = bridgeless(&["run", &scenario("forgers-beyond-bound.toml")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("UnbackedWithdrawal"));
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let o = bridgeless(&["run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn liveness_curve_writes_csv() {
    let dir = std::env::temp_dir().join(format!("bridgeless-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("curve.csv");
    let o = bridgeless(&[
        "liveness-curve", "--n", "4", "--t", "1", "--trials", "100", "--max-sessions", "4", "--seed", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "r,analytic,empirical,ci");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,0.500000,"));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn run_log_is_reproducible() {
    let a = bridgeless(&["run", "--log", &scenario("adversarial.toml")]);
    let b = bridgeless(&["run", "--log", &scenario("adversarial.toml")]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).lines().any(|l| l.contains("kind=rb-deliver")));
}
