use bridgeless_core::model::RequestStatus;
use bridgeless_core::sim::OutcomeKind;
use bridgeless_harness::observer::ViolationKind;
use bridgeless_harness::runner::run_scenario;
use bridgeless_harness::scenario::{ConfigError, ScenarioConfig};

fn load(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    ScenarioConfig::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn adversarial_example_finalizes_everything() {
    let r = run_scenario(&load("adversarial.toml"), false).unwrap();
    assert!(r.is_clean(), "{:?}", r.violations);
    assert_eq!(r.deposits.len(), 3);
    for statuses in r.final_statuses.values() {
        assert!(statuses.iter().all(|s| *s == Some(RequestStatus::Finalized)), "{statuses:?}");
    }
    assert_eq!(r.client_withdrawals.len(), 1);
    assert!(r.client_withdrawals[0].1.is_ok());
}

#[test]
fn evm_to_btc_example_is_clean() {
    let r = run_scenario(&load("evm-to-btc.toml"), false).unwrap();
    assert!(r.is_clean(), "{:?}", r.violations);
    assert!(matches!(r.outcomes[0].kind, OutcomeKind::Finalized(_)));
}

#[test]
fn forgers_beyond_bound_are_reported() {
    let r = run_scenario(&load("forgers-beyond-bound.toml"), false).unwrap();
    assert!(r.violations.iter().any(|v| v.kind == ViolationKind::UnbackedWithdrawal));
}

#[test]
fn unknown_flag_is_rejected() {
    let cfg = ScenarioConfig::parse("seed = 1\nn = 4\n[[validators]]\nindex = 0\nflags = [\"sleepy\"]\n").unwrap();
    assert!(matches!(run_scenario(&cfg, false), Err(ConfigError::Flag(_))));
}

#[test]
fn threshold_beyond_bound_needs_unsafe() {
    let cfg = ScenarioConfig::parse("seed = 1\nn = 4\nt = 2\n").unwrap();
    assert!(run_scenario(&cfg, false).is_err());
    let cfg = ScenarioConfig::parse("seed = 1\nn = 4\nt = 2\nunsafe = true\nmax_sessions = 1\n").unwrap();
    assert!(run_scenario(&cfg, false).is_ok());
}
