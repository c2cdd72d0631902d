//! Value conservation across every ordered chain pair, EVM replay
//! protection, and what happens without it or beyond the fault bound.

use bridgeless_core::ledger::Chain;
use bridgeless_core::model::{ChainId, ChainKind, ProtocolParams};
use bridgeless_core::sim::{OutcomeKind, Simulation};

use super::{SuiteReport, CHAIN_PAIRS};
use crate::observer::ViolationKind;
use crate::runner::{run_scenario, RunReport};
use crate::scenario::ScenarioConfig;
use crate::world::{
    build_simulation, circulating, default_receiver, default_sender, deposit, fund_sender, Transfer, WorldConfig, EVM, ZANO,
};

/// Balance of `addr` in `asset` on `chain`.
fn holding(sim: &Simulation, chain: &ChainId, token: &str, addr: &str) -> u64 {
    match sim.ledgers.get(chain) {
        Some(Chain::Evm(evm)) => evm.balance(token, addr),
        Some(Chain::Utxo(utxo)) => utxo.balance(addr),
        Some(Chain::BurnEmit(be)) => be.balance(token, addr),
        None => 0,
    }
}

fn kind_of(chain: &str) -> ChainKind {
    match chain {
        EVM => ChainKind::Evm,
        ZANO => ChainKind::BurnEmit,
        _ => ChainKind::Utxo,
    }
}

fn bridge_once(source: &str, target: &str, asset: &str, amount: u64) -> Result<(), String> {
    let cfg = WorldConfig::honest(ProtocolParams::new(4));
    let assets = cfg.assets.clone();
    let mut sim = build_simulation(&cfg).map_err(|e| e.to_string())?;
    let t = Transfer {
        source: source.into(),
        asset: asset.into(),
        amount,
        sender: default_sender(kind_of(source)).into(),
        target: target.into(),
        target_addr: default_receiver(kind_of(target)).into(),
    };
    let src_token = assets.token_on(asset, &t.source).unwrap_or_default().to_owned();
    let dst_token = assets.token_on(asset, &t.target).unwrap_or_default().to_owned();
    fund_sender(&mut sim, &assets, &t).map_err(|e| e.to_string())?;
    let before = circulating(&sim, &assets, asset);
    let src0 = holding(&sim, &t.source, &src_token, &t.sender);
    let dst0 = holding(&sim, &t.target, &dst_token, &t.target_addr);

    let id = deposit(&mut sim, &assets, &t).map_err(|e| e.to_string())?;
    for v in 0..4 {
        sim.submit_withdrawal(v, &id).map_err(|e| e.to_string())?;
    }
    let finalized = (0..3).any(|_| matches!(sim.run_session().kind, OutcomeKind::Finalized(_)));
    if !finalized {
        return Err("not finalized within 3 sessions".into());
    }
    // Let the payout confirm.
    let settle = sim.now() + 5;
    sim.run_until(settle);

    let after = circulating(&sim, &assets, asset);
    let src1 = holding(&sim, &t.source, &src_token, &t.sender);
    let dst1 = holding(&sim, &t.target, &dst_token, &t.target_addr);
    if src0.checked_sub(src1) != Some(amount) {
        return Err(format!("sender went from {src0} to {src1}"));
    }
    if dst1.checked_sub(dst0) != Some(amount) {
        return Err(format!("receiver went from {dst0} to {dst1}"));
    }
    if before != after {
        return Err(format!("circulating {asset} went from {before} to {after}"));
    }
    Ok(())
}

pub fn conservation_suite() -> SuiteReport {
    let mut report = SuiteReport::new("end-to-end conservation");
    for (source, target) in CHAIN_PAIRS {
        let mut assets = vec!["BTC"];
        if [source, target].iter().all(|c| *c == EVM || *c == ZANO) {
            assets.push("ETH");
        }
        for asset in assets {
            let result = bridge_once(source, target, asset, 1_234);
            report.case(result.err().map(|e| format!("{source} -> {target} {asset}: {e}")));
        }
    }
    report
}

const DOUBLE_SUBMIT: &str = r#"
seed = 21
n = 4
max_sessions = 2
[[requests]]
source = "btc-sim"
asset = "BTC"
amount = 300
target = "evm-sim"
double_submit = true
"#;

const NO_REPLAY_CHAINS: &str = r#"
[[chains]]
id = "evm-sim"
kind = "evm"
replay_protection = false
[[chains]]
id = "btc-sim"
kind = "utxo"
[[chains]]
id = "zano-sim"
kind = "burn-emit"
"#;

fn run_text(text: &str) -> Result<RunReport, String> {
    let cfg = ScenarioConfig::parse(text).map_err(|e| e.to_string())?;
    run_scenario(&cfg, false).map_err(|e| e.to_string())
}

/// A client submits the signed EVM withdrawal twice; the second must fail
/// and the observer must stay clean.
pub fn replay_suite() -> SuiteReport {
    let mut report = SuiteReport::new("evm double-submit replay protection");
    let failure = match run_text(DOUBLE_SUBMIT) {
        Err(e) => Some(e),
        Ok(r) => {
            let results: Vec<bool> = r.client_withdrawals.iter().map(|(_, res)| res.is_ok()).collect();
            if results != [true, false] {
                Some(format!("client submissions succeeded as {results:?}"))
            } else if !r.is_clean() {
                Some(format!("violations: {:?}", r.violations))
            } else {
                None
            }
        }
    };
    report.case(failure);
    report
}

/// The same run with replay protection off: passes when the observer
/// catches the duplicate payout.
pub fn replay_ablation() -> SuiteReport {
    let mut report = SuiteReport::new("replay ablation is caught");
    let text = format!("{DOUBLE_SUBMIT}{NO_REPLAY_CHAINS}");
    let failure = match run_text(&text) {
        Err(e) => Some(e),
        Ok(r) if r.violations.iter().any(|v| v.kind == ViolationKind::DuplicateWithdrawal) => None,
        Ok(r) => Some(format!("no duplicate detected; violations {:?}", r.violations)),
    };
    report.case(failure);
    report
}

fn forger_scenario(forgers: &[usize]) -> String {
    let list: Vec<String> = forgers.iter().map(|f| f.to_string()).collect();
    let mut text = format!("seed = 5\nn = 4\nmax_sessions = 4\ncolluders = [{}]\n", list.join(", "));
    for f in forgers {
        text.push_str(&format!(
            "[[validators]]\nindex = {f}\nflags = [\"forgeDeposit\", \"arbitraryCommittee\"]\n"
        ));
    }
    text.push_str("[[requests]]\nsource = \"evm-sim\"\nasset = \"BTC\"\namount = 999\ntarget = \"zano-sim\"\nforged = true\n");
    text
}

/// Forgers within the bound change nothing; t+1 colluding forgers get an
/// unbacked payout the observer reports.
pub fn forger_demo() -> SuiteReport {
    let mut report = SuiteReport::new("forged deposits within and beyond the fault bound");
    let within = match run_text(&forger_scenario(&[0])) {
        Err(e) => Some(e),
        Ok(r) if r.is_clean() => None,
        Ok(r) => Some(format!("t forgers caused {:?}", r.violations)),
    };
    report.case(within.map(|e| format!("one forger: {e}")));
    let beyond = match run_text(&forger_scenario(&[0, 1])) {
        Err(e) => Some(e),
        Ok(r) if r.violations.iter().any(|v| v.kind == ViolationKind::UnbackedWithdrawal) => None,
        Ok(r) => Some(format!("no unbacked withdrawal seen; violations {:?}", r.violations)),
    };
    report.case(beyond.map(|e| format!("two forgers: {e}")));
    report
}
