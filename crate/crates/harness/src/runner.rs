//! Drives a scenario tick by tick: client deposits and submissions, client
//! EVM withdrawals, background traffic, reorgs and observer checks.

use std::collections::BTreeMap;

use bridgeless_core::clients::AssetRegistry;
use bridgeless_core::model::{DepositData, DepositIdentifier, Hash32, RequestStatus, Tick, ValidatorIndex};
use bridgeless_core::sim::{SessionOutcome, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::observer::{Observer, Violation};
use crate::scenario::{ConfigError, ScenarioConfig, ScriptedRequest};
use crate::world::{build_simulation, client_evm_withdraw, deposit, fund_sender, Noise, WorldError};

#[derive(Debug, Clone)]
pub struct RunReport {
    pub log: Vec<String>,
    pub outcomes: Vec<SessionOutcome>,
    pub violations: Vec<Violation>,
    /// Identifier of each scripted request, in script order.
    pub deposits: Vec<DepositIdentifier>,
    /// Per-validator status of each scripted request when the run ends.
    pub final_statuses: BTreeMap<DepositIdentifier, Vec<Option<RequestStatus>>>,
    /// Client-side EVM withdrawal attempts: (deposit, result).
    pub client_withdrawals: Vec<(DepositIdentifier, Result<Hash32, String>)>,
}

impl RunReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Pending {
    id: DepositIdentifier,
    query: ValidatorIndex,
    double_submit: bool,
}

fn forged_data(req: &ScriptedRequest, assets: &AssetRegistry, index: usize) -> DepositData {
    let t = &req.transfer;
    DepositData {
        source_chain_id: t.source.clone(),
        deposit_tx_hash: Hash32::tagged("forged-deposit", &index.to_le_bytes()),
        tx_nonce: 0,
        sender: t.sender.clone(),
        token_addr: assets.token_on(&t.asset, &t.source).unwrap_or_default().to_owned(),
        amount: t.amount,
        target_chain_id: t.target.clone(),
        target_addr: t.target_addr.clone(),
    }
}

/// Runs a scenario to the end of its last session.
pub fn run_scenario(cfg: &ScenarioConfig, log: bool) -> Result<RunReport, ConfigError> {
    let (mut world, script) = cfg.resolve()?;
    world.log = log;
    let assets = world.assets.clone();
    let mut sim = build_simulation(&world)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut observer = Observer::new();
    let mut noise = Noise::default();
    let len = sim.params.session_length();
    let end = sim.session_start(cfg.max_sessions) - 1;
    let mut reorg_ticks: Vec<Tick> = (0..cfg.noise.reorgs).map(|_| rng.gen_range(1..=end.max(1))).collect();
    reorg_ticks.sort_unstable();
    let chain_ids: Vec<_> = world.chains.iter().map(|c| c.id.clone()).collect();

    let mut deposits: Vec<Option<DepositIdentifier>> = vec![None; script.len()];
    let mut pending: Vec<Pending> = Vec::new();
    let mut client_withdrawals = Vec::new();
    let mut outcomes = Vec::new();

    while sim.now() < end {
        let now = sim.now();
        for (i, req) in script.iter().enumerate().filter(|(_, r)| r.at_tick == now) {
            if req.forged {
                let data = forged_data(req, &assets, i);
                deposits[i] = Some(data.identifier());
                sim.inject_forged(&data);
                continue;
            }
            fund_sender(&mut sim, &assets, &req.transfer)?;
            let id = deposit(&mut sim, &assets, &req.transfer)?;
            let t = &req.transfer;
            observer.record_deposit(DepositData {
                source_chain_id: t.source.clone(),
                deposit_tx_hash: id.tx_hash,
                tx_nonce: id.tx_nonce,
                sender: t.sender.clone(),
                token_addr: assets.token_on(&t.asset, &t.source).unwrap_or_default().to_owned(),
                amount: t.amount,
                target_chain_id: t.target.clone(),
                target_addr: t.target_addr.clone(),
            });
            for &v in &req.submit_to {
                sim.submit_withdrawal(v, &id).map_err(WorldError::from)?;
            }
            if req.client_withdraw {
                let query = req
                    .submit_to
                    .iter()
                    .copied()
                    .find(|&v| sim.validators[v].is_honest())
                    .unwrap_or(req.submit_to[0]);
                pending.push(Pending {
                    id: id.clone(),
                    query,
                    double_submit: req.double_submit,
                });
            }
            deposits[i] = Some(id);
        }
        for chain in &chain_ids {
            if cfg.noise.rate_percent > 0 && rng.gen_range(0..100) < cfg.noise.rate_percent {
                noise.transfer(&mut sim, chain)?;
            }
        }
        while reorg_ticks.first() == Some(&now) {
            reorg_ticks.remove(0);
            let pick = rng.gen_range(0..usize::MAX);
            noise.reorg(&mut sim, pick);
        }
        pending.retain(|p| !client_withdraw(&mut sim, p, &mut client_withdrawals));

        sim.step();
        observer.check_withdrawals(&sim, &assets);
        if let Some((sid, offset)) = sim.validators[0].session_position(sim.now()) {
            if offset == 0 && sid > 0 {
                observer.check_agreement(&sim);
            }
            if offset == len - 1 {
                let outcome = sim.outcome_of(sid);
                observer.check_session(&sim, &outcome);
                outcomes.push(outcome);
            }
        }
    }
    observer.check_agreement(&sim);

    let deposits: Vec<_> = deposits.into_iter().flatten().collect();
    let final_statuses = deposits
        .iter()
        .map(|id| (id.clone(), sim.validators.iter().map(|v| v.status_of(id)).collect()))
        .collect();
    Ok(RunReport {
        log: std::mem::take(&mut sim.net.log).into_lines(),
        outcomes,
        violations: observer.violations,
        deposits,
        final_statuses,
        client_withdrawals,
    })
}

/// One polling step of a client waiting for its signature. True once done.
fn client_withdraw(
    sim: &mut Simulation,
    p: &Pending,
    results: &mut Vec<(DepositIdentifier, Result<Hash32, String>)>,
) -> bool {
    let Ok(req) = sim.check_withdrawal(p.query, &p.id) else {
        return false;
    };
    let (Some(data), Some(signature)) = (req.deposit_data.clone(), req.withdrawal_data.signature.clone()) else {
        return false;
    };
    let clients = sim.validators[p.query].clients.clone();
    let Ok(tx) = clients.get_withdrawal_tx(&sim.ledgers, &data, 0) else {
        return false;
    };
    let attempts = if p.double_submit { 2 } else { 1 };
    for _ in 0..attempts {
        let res = client_evm_withdraw(sim, &tx, &signature, "client").map_err(|e| e.to_string());
        results.push((p.id.clone(), res));
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(body: &str) -> ScenarioConfig {
        ScenarioConfig::parse(&format!("seed = 11\nn = 4\n{body}")).unwrap()
    }

    #[test]
    fn honest_evm_to_utxo_pays_target() {
        let cfg = scenario(
            "[[requests]]\nsource = \"evm-sim\"\nasset = \"BTC\"\namount = 25\ntarget = \"btc-sim\"\ntarget_addr = \"bc1carol\"\n",
        );
        let report = run_scenario(&cfg, false).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
        let id = &report.deposits[0];
        assert!(report.final_statuses[id].iter().all(|s| *s == Some(RequestStatus::Finalized)));
    }

    #[test]
    fn same_config_same_log() {
        let cfg = scenario(
            "[noise]\nrate_percent = 50\nreorgs = 2\n[[requests]]\nsource = \"btc-sim\"\nasset = \"BTC\"\namount = 5\ntarget = \"zano-sim\"\nsubmit_to = [2]\n",
        );
        let a = run_scenario(&cfg, true).unwrap();
        let b = run_scenario(&cfg, true).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.outcomes, b.outcomes);
        assert!(!a.log.is_empty());
    }
}
