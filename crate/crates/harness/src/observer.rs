//! Omniscient safety and agreement checks over the whole simulated world.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use bridgeless_core::clients::{parse_deposit_memo, AssetRegistry};
use bridgeless_core::ledger::Chain;
use bridgeless_core::model::{ChainId, DepositData, DepositIdentifier, Hash32, RequestStatus, Tick};
use bridgeless_core::sim::{SessionOutcome, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    /// A withdrawal names no real deposit, or none any honest validator accepted.
    UnbackedWithdrawal,
    /// Amount, receiver, target chain or token differ from the deposit.
    MismatchedWithdrawal,
    /// Two withdrawals for one deposit.
    DuplicateWithdrawal,
    /// Honest validators disagree on a request's status.
    StatusDisagreement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tick: Tick,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick={} {:?}: {}", self.tick, self.kind, self.detail)
    }
}

/// A payout observed on some target chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithdrawalRecord {
    pub chain: ChainId,
    pub tx: Hash32,
    pub deposit: Option<DepositIdentifier>,
    pub token: String,
    pub amount: u64,
    pub receiver: String,
}

/// Every bridge payout currently on any ledger. Reorged UTXO transactions
/// are skipped.
pub fn withdrawals(sim: &Simulation) -> Vec<WithdrawalRecord> {
    let mut out = Vec::new();
    for chain in sim.ledgers.iter() {
        let id = chain.chain_id().clone();
        match chain {
            Chain::Evm(evm) => out.extend(evm.withdrawals().iter().map(|w| WithdrawalRecord {
                chain: id.clone(),
                tx: w.tx_hash,
                deposit: Some(w.fields.identifier()),
                token: w.fields.token_addr.clone(),
                amount: w.fields.amount,
                receiver: w.fields.target_addr.clone(),
            })),
            Chain::BurnEmit(be) => out.extend(be.emits().map(|(h, e)| WithdrawalRecord {
                chain: id.clone(),
                tx: h,
                deposit: parse_deposit_memo(&e.memo).ok(),
                token: e.asset_id.clone(),
                amount: e.amount,
                receiver: e.receiver.clone(),
            })),
            Chain::Utxo(utxo) => {
                let bridge = sim.validators[0]
                    .clients
                    .get(&id)
                    .map(|c| c.bridge_address.clone())
                    .unwrap_or_default();
                for view in utxo.transactions() {
                    let spends_bridge = view.tx.inputs.iter().any(|i| i.prev_address == bridge);
                    if !spends_bridge || view.confirmations < 0 {
                        continue;
                    }
                    let payouts: Vec<_> = view
                        .tx
                        .outputs
                        .iter()
                        .filter(|o| o.is_spendable() && o.script_pubkey.address != bridge)
                        .collect();
                    out.push(WithdrawalRecord {
                        chain: id.clone(),
                        tx: view.txid,
                        deposit: parse_deposit_memo(&view.tx.memo).ok(),
                        token: String::new(),
                        amount: payouts.iter().map(|o| o.value).sum(),
                        receiver: payouts
                            .iter()
                            .map(|o| o.script_pubkey.address.as_str())
                            .collect::<Vec<_>>()
                            .join(","),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Observer {
    /// Deposits the harness actually made, as a correct client sees them.
    pub truth: BTreeMap<DepositIdentifier, DepositData>,
    pub violations: Vec<Violation>,
    reported: BTreeSet<(ViolationKind, String)>,
}

impl Observer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_deposit(&mut self, data: DepositData) {
        self.truth.insert(data.identifier(), data);
    }

    fn report(&mut self, tick: Tick, kind: ViolationKind, key: String, detail: String) {
        if self.reported.insert((kind, key)) {
            self.violations.push(Violation { tick, kind, detail });
        }
    }

    /// Withdrawal-to-deposit mapping and uniqueness.
    pub fn check_withdrawals(&mut self, sim: &Simulation, assets: &AssetRegistry) {
        let now = sim.now();
        let mut per_deposit: BTreeMap<DepositIdentifier, Vec<Hash32>> = BTreeMap::new();
        for w in withdrawals(sim) {
            let key = format!("{}/{}", w.chain, w.tx);
            let Some(id) = w.deposit.clone() else {
                self.report(now, ViolationKind::UnbackedWithdrawal, key, format!("{w:?} carries no deposit reference"));
                continue;
            };
            per_deposit.entry(id.clone()).or_default().push(w.tx);
            let Some(data) = self.truth.get(&id).cloned() else {
                self.report(now, ViolationKind::UnbackedWithdrawal, key, format!("{w:?} pays out for unknown deposit {id}"));
                continue;
            };
            let accepted = sim.honest().any(|v| {
                matches!(
                    v.status_of(&id),
                    Some(RequestStatus::Pending | RequestStatus::Processing | RequestStatus::Processed | RequestStatus::Finalized)
                )
            });
            if !accepted {
                self.report(now, ViolationKind::UnbackedWithdrawal, key.clone(), format!("{id} withdrawn but no honest validator holds it"));
            }
            let token = assets.target_token(&data).ok();
            let matches = w.chain == data.target_chain_id
                && w.amount == data.amount
                && w.receiver == data.target_addr
                && token.as_deref() == Some(w.token.as_str());
            if !matches {
                self.report(
                    now,
                    ViolationKind::MismatchedWithdrawal,
                    key,
                    format!("{w:?} does not match deposit {data:?}"),
                );
            }
        }
        for (id, txs) in per_deposit {
            if txs.len() > 1 {
                let list: Vec<_> = txs.iter().map(|h| h.to_string()).collect();
                self.report(
                    now,
                    ViolationKind::DuplicateWithdrawal,
                    id.to_string(),
                    format!("deposit {id} withdrawn {} times: {}", txs.len(), list.join(" ")),
                );
            }
        }
    }

    /// Every request known to any honest validator has the same status at
    /// all honest validators; an unknown request counts as its own status.
    pub fn check_agreement(&mut self, sim: &Simulation) {
        let ids: BTreeSet<DepositIdentifier> = sim.honest().flat_map(|v| v.requests().keys().cloned()).collect();
        for id in ids {
            self.check_request(sim, &id);
        }
    }

    fn check_request(&mut self, sim: &Simulation, id: &DepositIdentifier) {
        let statuses: Vec<(usize, Option<RequestStatus>)> = sim.honest().map(|v| (v.index, v.status_of(id))).collect();
        if statuses.windows(2).all(|w| w[0].1 == w[1].1) {
            return;
        }
        let now = sim.now();
        let shown: Vec<_> = statuses
            .iter()
            .map(|(i, s)| format!("{i}:{}", s.map_or("unknown", |s| s.as_str())))
            .collect();
        self.report(
            now,
            ViolationKind::StatusDisagreement,
            format!("{id}@{now}"),
            format!("{id} statuses {}", shown.join(" ")),
        );
    }

    /// Agreement on the request a session worked on, at its last tick.
    pub fn check_session(&mut self, sim: &Simulation, outcome: &SessionOutcome) {
        if let Some(id) = &outcome.proposal {
            self.check_request(sim, id);
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}
