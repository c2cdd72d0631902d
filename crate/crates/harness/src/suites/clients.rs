//! Every validator builds the same UTXO withdrawal from the same anchor,
//! however far its own view of the chain has moved on.

use bridgeless_core::clients::{ChainClient, WithdrawalTx};
use bridgeless_core::ledger::{Chain, Ledgers, UtxoChain, UtxoTx};
use bridgeless_core::model::{ChainId, ChainKind, DepositData, Hash32};
use bridgeless_core::tss::{OracleTss, SessionResult, Signature, ThresholdSigner};
use bridgeless_core::validator::selection::mix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SuiteReport;
use crate::scenario::seed_bytes;
use crate::world::{BTC, BTC_BRIDGE, EVM};

fn group_sign(tss: &mut OracleTss, id: &str, message: &[Hash32]) -> Signature {
    tss.start_signing(id, &[0, 1], message, 10).expect("fresh session");
    for s in [0, 1] {
        tss.approve(id, s, message, 0).expect("signer");
    }
    match tss.session_result(id, 1) {
        Ok(SessionResult::Signature(sig)) => sig,
        other => panic!("oracle failed to sign: {other:?}"),
    }
}

/// Moves a validator's view past the anchor: more bridge coins, and maybe
/// a confirmed bridge spend of a coin that existed at the anchor.
fn diverge(chain: &mut UtxoChain, tss: &mut OracleTss, rng: &mut ChaCha8Rng, label: &str) {
    // `fund` mints into the tip block, so open a new one first.
    for b in 0..rng.gen_range(0..4) {
        chain.advance_block();
        chain.fund(BTC_BRIDGE, rng.gen_range(1..=10_000));
        chain.fund(&format!("bc1view{b}"), 5);
    }
    if rng.gen_bool(0.5) {
        let live: Vec<_> = chain
            .unspent_at(BTC_BRIDGE, u64::MAX)
            .into_iter()
            .filter(|(op, _)| chain.is_unspent(op))
            .collect();
        if let Some((op, entry)) = live.first() {
            let mut tx = UtxoTx {
                inputs: vec![bridgeless_core::ledger::TxIn {
                    prevout: *op,
                    prev_address: BTC_BRIDGE.into(),
                    witness: Vec::new(),
                }],
                outputs: vec![bridgeless_core::ledger::TxOut::pay("bc1elsewhere", entry.output.value)],
                memo: label.as_bytes().to_vec(),
            };
            let sighash = tx.sighash(0).expect("one input");
            let sig = group_sign(tss, label, &[sighash]);
            tx.inject_signatures(&sig).expect("one part per input");
            if chain.submit_tx(tx).is_ok() {
                chain.advance_block();
            }
        }
    }
}

pub fn utxo_determinism_suite(states: u64, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("utxo withdrawal determinism");
    for k in 0..states {
        let state_seed = mix(seed, k);
        let mut rng = ChaCha8Rng::seed_from_u64(state_seed);
        let mut tss = OracleTss::new("suite", seed_bytes(state_seed), 1);
        let mut chain = UtxoChain::new(BTC, BTC_BRIDGE, tss.group_key().clone());
        chain.fund(BTC_BRIDGE, rng.gen_range(1..=10_000));
        let mut height = 0;
        for b in 0..rng.gen_range(1..=8) {
            for _ in 0..rng.gen_range(0..=3) {
                chain.fund(BTC_BRIDGE, rng.gen_range(1..=10_000));
            }
            chain.fund(&format!("bc1noise{b}"), rng.gen_range(1..=100));
            height = chain.advance_block();
        }
        let anchor = rng.gen_range(0..=height);
        let available: u64 = chain.unspent_at(BTC_BRIDGE, anchor).iter().map(|(_, e)| e.output.value).sum();
        let data = DepositData {
            source_chain_id: ChainId::new(EVM),
            deposit_tx_hash: Hash32(rng.gen()),
            tx_nonce: rng.gen_range(0..4),
            sender: "0x000000000000000000000000000000000000a11c".into(),
            token_addr: crate::world::WBTC.into(),
            amount: rng.gen_range(1..=available),
            target_chain_id: ChainId::new(BTC),
            target_addr: format!("bc1dest{}", rng.gen_range(0..1000)),
        };
        let n: usize = rng.gen_range(4..=13);
        let client = ChainClient::new(BTC, ChainKind::Utxo, BTC_BRIDGE);

        let mut reference: Option<(Vec<u8>, Vec<Hash32>)> = None;
        let mut failure = None;
        for v in 0..n {
            let mut view = chain.clone();
            let mut view_rng = ChaCha8Rng::seed_from_u64(mix(state_seed, v as u64 + 1));
            diverge(&mut view, &mut tss, &mut view_rng, &format!("spend/{k}/{v}"));
            let mut ledgers = Ledgers::new();
            ledgers.insert(Chain::Utxo(view));
            let built = match client.get_withdrawal_tx(&ledgers, &data, "", anchor) {
                Ok(WithdrawalTx::Utxo(tx)) => {
                    let hashes = ChainClient::get_hash_of_withdrawal(&WithdrawalTx::Utxo(tx.clone()));
                    (tx.serialize_unsigned(), hashes)
                }
                other => {
                    failure = Some(format!("validator {v}: {other:?}"));
                    break;
                }
            };
            match &reference {
                None => reference = Some(built),
                Some(r) if *r != built => {
                    failure = Some(format!("validator {v} built a different transaction"));
                    break;
                }
                Some(_) => {}
            }
        }
        report.case(failure.map(|e| format!("state {k} anchor={anchor}: {e}")));
    }
    report
}
