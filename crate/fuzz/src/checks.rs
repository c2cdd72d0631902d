//! Invariants each fuzz target asserts. Shared with the corpus replay test
//! in the harness crate, so every checked-in seed runs under `cargo test`.

use bridgeless_core::clients::{decode_target, encode_target, parse_deposit_memo, deposit_memo};
use bridgeless_core::ledger::burn_emit::EmitTx;
use bridgeless_core::ledger::UtxoTx;
use bridgeless_core::model::DepositIdentifier;
use bridgeless_core::validator::messages::{ProtocolMessage, RbValue};
use bridgeless_harness::scenario::ScenarioConfig;

/// Canonical string form: parse, print, parse again.
pub fn deposit_identifier(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(id) = text.parse::<DepositIdentifier>() {
        let again: DepositIdentifier = id.to_string().parse().expect("printed form parses");
        assert_eq!(again, id);
    }
}

/// Withdrawal memo bytes.
pub fn deposit_memo_bytes(data: &[u8]) {
    if let Ok(id) = parse_deposit_memo(data) {
        assert_eq!(deposit_memo(&id), data, "memo decoding is not canonical");
    }
}

/// OP_RETURN destination payload.
pub fn op_return_target(data: &[u8]) {
    if let Ok(spec) = decode_target(data) {
        let bytes = encode_target(&spec.chain_id, &spec.address).expect("decoded fields re-encode");
        assert_eq!(bytes, data);
    }
}

pub fn protocol_message(data: &[u8]) {
    if let Ok(msg) = ProtocolMessage::decode(data) {
        assert_eq!(ProtocolMessage::decode(&msg.encode()).as_ref(), Ok(&msg));
        let _ = msg.label();
    }
}

pub fn rb_value(data: &[u8]) {
    if let Ok(v) = RbValue::decode(data) {
        assert_eq!(RbValue::decode(&v.encode()).as_ref(), Ok(&v));
    }
}

pub fn utxo_tx(data: &[u8]) {
    if let Ok(tx) = UtxoTx::decode(data) {
        assert_eq!(UtxoTx::decode(&tx.encode()).as_ref(), Ok(&tx));
        let _ = tx.txid();
        for i in 0..tx.inputs.len() {
            tx.sighash(i).expect("index in range");
        }
    }
}

pub fn emit_tx(data: &[u8]) {
    if let Ok(tx) = EmitTx::decode(data) {
        assert_eq!(EmitTx::decode(&tx.encode()).as_ref(), Ok(&tx));
        let _ = tx.sign_hash();
    }
}

/// Scenario files: parsing and validation never panic.
pub fn scenario(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::parse(text) {
        let _ = cfg.resolve();
    }
}

pub type Check = fn(&[u8]);

/// Target name to check function, for tools that replay the corpus.
pub const TARGETS: &[(&str, Check)] = &[
    ("deposit_identifier", deposit_identifier),
    ("deposit_memo", deposit_memo_bytes),
    ("op_return_target", op_return_target),
    ("protocol_message", protocol_message),
    ("rb_value", rb_value),
    ("utxo_tx", utxo_tx),
    ("emit_tx", emit_tx),
    ("scenario", scenario),
];
