//! UTXO chain with zero fees, OP_RETURN outputs and reorg injection.
//!
//! Scripts are structured records rather than bytecode. Inputs spending an
//! output locked to the bridge address need a group signature over that
//! input's sighash as witness; other inputs are accepted as wallet-signed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::codec::{DecodeError, Reader, Writer};
use crate::model::{ChainId, Hash32};
use crate::tss::{self, GroupKey, Signature, SIGNATURE_LEN};

use super::{confirmations, LedgerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutPoint {
    pub txid: Hash32,
    pub vout: u32,
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptPubKey {
    pub address: String,
    pub op_return: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOut {
    pub value: u64,
    pub script_pubkey: ScriptPubKey,
}

impl TxOut {
    pub fn pay(address: impl Into<String>, value: u64) -> Self {
        Self {
            value,
            script_pubkey: ScriptPubKey {
                address: address.into(),
                op_return: None,
            },
        }
    }

    pub fn op_return(data: Vec<u8>) -> Self {
        Self {
            value: 0,
            script_pubkey: ScriptPubKey {
                address: String::new(),
                op_return: Some(data),
            },
        }
    }

    pub fn is_spendable(&self) -> bool {
        self.script_pubkey.op_return.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxIn {
    pub prevout: OutPoint,
    /// Address locking the spent output, carried so the sighash can commit
    /// to it without a chain lookup.
    pub prev_address: String,
    pub witness: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtxoTx {
    pub inputs: Vec<TxIn>,
    pub outputs: Vec<TxOut>,
    /// Free-form payload committed to by the txid; withdrawals carry the
    /// deposit identifier here.
    pub memo: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("input index {index} out of range for {len} inputs")]
pub struct IndexOutOfRange {
    pub index: usize,
    pub len: usize,
}

impl UtxoTx {
    fn encode_body(&self, w: &mut Writer, with_witness: bool) {
        w.u32(self.inputs.len() as u32);
        for input in &self.inputs {
            w.hash(&input.prevout.txid).u32(input.prevout.vout).str(&input.prev_address);
            if with_witness {
                w.bytes(&input.witness);
            }
        }
        w.u32(self.outputs.len() as u32);
        for out in &self.outputs {
            w.u64(out.value).str(&out.script_pubkey.address);
            match &out.script_pubkey.op_return {
                Some(data) => w.u8(1).bytes(data),
                None => w.u8(0),
            };
        }
        w.bytes(&self.memo);
    }

    /// Serialization without witnesses; the txid and sighashes commit to it.
    pub fn serialize_unsigned(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_body(&mut w, false);
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_body(&mut w, true);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let n_in = r.count(32 + 4 + 4 + 4)?;
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let txid = r.hash()?;
            let vout = r.u32()?;
            let prev_address = r.str()?.to_owned();
            let witness = r.bytes()?.to_vec();
            inputs.push(TxIn {
                prevout: OutPoint { txid, vout },
                prev_address,
                witness,
            });
        }
        let n_out = r.count(8 + 4 + 1)?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let value = r.u64()?;
            let address = r.str()?.to_owned();
            let op_return = match r.u8()? {
                0 => None,
                1 => Some(r.bytes()?.to_vec()),
                t => return Err(DecodeError::UnknownTag(t)),
            };
            outputs.push(TxOut {
                value,
                script_pubkey: ScriptPubKey { address, op_return },
            });
        }
        let memo = r.bytes()?.to_vec();
        r.finish()?;
        Ok(Self { inputs, outputs, memo })
    }

    pub fn txid(&self) -> Hash32 {
        Hash32::tagged("utxo-txid", &self.serialize_unsigned())
    }

    /// Message signed for input `index`: the unsigned transaction, the
    /// input index and the address locking the spent output.
    pub fn sighash(&self, index: usize) -> Result<Hash32, IndexOutOfRange> {
        let input = self.inputs.get(index).ok_or(IndexOutOfRange {
            index,
            len: self.inputs.len(),
        })?;
        let mut w = Writer::new();
        w.bytes(&self.serialize_unsigned())
            .u32(index as u32)
            .str(&input.prev_address);
        Ok(Hash32::tagged("utxo-sighash", w.as_slice()))
    }

    /// Places one signature per input into the witnesses.
    pub fn inject_signatures(&mut self, signature: &Signature) -> Result<(), LedgerError> {
        if signature.0.len() != self.inputs.len() * SIGNATURE_LEN {
            return Err(LedgerError::MalformedTx("signature count does not match inputs"));
        }
        for (i, input) in self.inputs.iter_mut().enumerate() {
            input.witness = signature.part(i).expect("length checked").to_vec();
        }
        Ok(())
    }

    pub fn output_sum(&self) -> u64 {
        self.outputs.iter().map(|o| o.value).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtxoEntry {
    pub output: TxOut,
    pub created_height: u64,
}

#[derive(Debug, Clone)]
struct TxRecord {
    tx: UtxoTx,
    inclusion: Option<u64>,
    reorged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtxoTxView {
    pub txid: Hash32,
    pub tx: UtxoTx,
    /// 0 in the mempool, depth once confirmed, -1 after a reorg.
    pub confirmations: i64,
}

#[derive(Debug, Clone)]
struct SpentEntry {
    entry: UtxoEntry,
    spender: Hash32,
    /// `None` while the spend is in the mempool.
    height: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct UtxoChain {
    pub chain_id: ChainId,
    pub height: u64,
    pub bridge_address: String,
    group_key: GroupKey,
    mempool: Vec<Hash32>,
    blocks: Vec<Vec<Hash32>>,
    txs: BTreeMap<Hash32, TxRecord>,
    utxo_set: BTreeMap<OutPoint, UtxoEntry>,
    spent: BTreeMap<OutPoint, SpentEntry>,
    genesis_nonce: u64,
}

impl UtxoChain {
    pub fn new(chain_id: impl Into<ChainId>, bridge_address: impl Into<String>, group_key: GroupKey) -> Self {
        Self {
            chain_id: chain_id.into(),
            height: 0,
            bridge_address: bridge_address.into(),
            group_key,
            mempool: Vec::new(),
            blocks: vec![Vec::new()],
            txs: BTreeMap::new(),
            utxo_set: BTreeMap::new(),
            spent: BTreeMap::new(),
            genesis_nonce: 0,
        }
    }

    /// Mints an output at the current height without inputs.
    pub fn fund(&mut self, address: &str, value: u64) -> OutPoint {
        let tx = UtxoTx {
            inputs: Vec::new(),
            outputs: vec![TxOut::pay(address, value)],
            memo: format!("coinbase/{}", self.genesis_nonce).into_bytes(),
        };
        self.genesis_nonce += 1;
        let txid = tx.txid();
        let outpoint = OutPoint { txid, vout: 0 };
        self.utxo_set.insert(
            outpoint,
            UtxoEntry {
                output: tx.outputs[0].clone(),
                created_height: self.height,
            },
        );
        self.txs.insert(
            txid,
            TxRecord {
                tx,
                inclusion: Some(self.height),
                reorged: false,
            },
        );
        self.blocks[self.height as usize].push(txid);
        outpoint
    }

    fn check_well_formed(tx: &UtxoTx) -> Result<(), LedgerError> {
        if tx.inputs.is_empty() {
            return Err(LedgerError::MalformedTx("no inputs"));
        }
        if tx.outputs.is_empty() {
            return Err(LedgerError::MalformedTx("no outputs"));
        }
        let distinct: BTreeSet<_> = tx.inputs.iter().map(|i| i.prevout).collect();
        if distinct.len() != tx.inputs.len() {
            return Err(LedgerError::MalformedTx("duplicate input"));
        }
        for out in &tx.outputs {
            match &out.script_pubkey.op_return {
                Some(_) if out.value != 0 => return Err(LedgerError::MalformedTx("valued OP_RETURN")),
                None if out.script_pubkey.address.is_empty() => {
                    return Err(LedgerError::MalformedTx("output without address"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn submit_tx(&mut self, tx: UtxoTx) -> Result<Hash32, LedgerError> {
        Self::check_well_formed(&tx)?;
        let txid = tx.txid();
        if self.txs.contains_key(&txid) {
            return Err(LedgerError::AlreadyKnown(txid));
        }
        let mut input_sum: u64 = 0;
        for (i, input) in tx.inputs.iter().enumerate() {
            let entry = match self.utxo_set.get(&input.prevout) {
                Some(e) if !self.spent.contains_key(&input.prevout) => e,
                _ if self.spent.contains_key(&input.prevout) => {
                    return Err(LedgerError::DoubleSpend(input.prevout.to_string()))
                }
                _ => return Err(LedgerError::MalformedTx("input does not exist")),
            };
            if entry.output.script_pubkey.address != input.prev_address {
                return Err(LedgerError::MalformedTx("prev_address mismatch"));
            }
            if input.prev_address == self.bridge_address {
                let sighash = tx.sighash(i).expect("index in range");
                if !tss::verify(&self.group_key, &[sighash], &Signature(input.witness.clone())) {
                    return Err(LedgerError::BadWitness(i));
                }
            }
            input_sum = input_sum
                .checked_add(entry.output.value)
                .ok_or(LedgerError::MalformedTx("value overflow"))?;
        }
        let output_sum = tx
            .outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.value))
            .ok_or(LedgerError::MalformedTx("value overflow"))?;
        if input_sum != output_sum {
            return Err(LedgerError::MalformedTx("inputs and outputs differ"));
        }
        for input in &tx.inputs {
            let entry = self.utxo_set.get(&input.prevout).expect("checked").clone();
            self.spent.insert(
                input.prevout,
                SpentEntry {
                    entry,
                    spender: txid,
                    height: None,
                },
            );
        }
        self.txs.insert(
            txid,
            TxRecord {
                tx,
                inclusion: None,
                reorged: false,
            },
        );
        self.mempool.push(txid);
        Ok(txid)
    }

    pub fn advance_block(&mut self) -> u64 {
        self.height += 1;
        let height = self.height;
        let included: Vec<Hash32> = std::mem::take(&mut self.mempool);
        for txid in &included {
            let rec = self.txs.get_mut(txid).expect("mempool tx recorded");
            rec.inclusion = Some(height);
            for input in &rec.tx.inputs {
                self.utxo_set.remove(&input.prevout);
                if let Some(s) = self.spent.get_mut(&input.prevout) {
                    s.height = Some(height);
                }
            }
            for (vout, out) in rec.tx.outputs.iter().enumerate() {
                if out.is_spendable() {
                    self.utxo_set.insert(
                        OutPoint {
                            txid: *txid,
                            vout: vout as u32,
                        },
                        UtxoEntry {
                            output: out.clone(),
                            created_height: height,
                        },
                    );
                }
            }
        }
        self.blocks.push(included);
        height
    }

    /// Marks a confirmed transaction (and anything spending its outputs)
    /// as reorged out. Its inputs become unspent again.
    pub fn inject_reorg(&mut self, txid: &Hash32) -> Result<(), LedgerError> {
        let rec = self.txs.get(txid).ok_or(LedgerError::UnknownTx)?;
        if rec.reorged || rec.inclusion.is_none() {
            return Err(LedgerError::NotConfirmed);
        }
        self.reorg_recursive(*txid);
        Ok(())
    }

    fn reorg_recursive(&mut self, txid: Hash32) {
        let rec = self.txs.get(&txid).expect("known").clone();
        if rec.reorged {
            return;
        }
        let n_out = rec.tx.outputs.len() as u32;
        for vout in 0..n_out {
            let op = OutPoint { txid, vout };
            if let Some(spender) = self.spent.get(&op).map(|s| s.spender) {
                self.reorg_recursive(spender);
            }
            self.utxo_set.remove(&op);
        }
        for input in &rec.tx.inputs {
            if let Some(s) = self.spent.remove(&input.prevout) {
                self.utxo_set.insert(input.prevout, s.entry);
            }
        }
        self.mempool.retain(|h| *h != txid);
        let rec = self.txs.get_mut(&txid).expect("known");
        rec.reorged = true;
    }

    pub fn get_transaction(&self, txid: &Hash32) -> Result<UtxoTxView, LedgerError> {
        let rec = self.txs.get(txid).ok_or(LedgerError::NotFound)?;
        let confirmations = if rec.reorged {
            -1
        } else {
            confirmations(self.height, rec.inclusion)
        };
        Ok(UtxoTxView {
            txid: *txid,
            tx: rec.tx.clone(),
            confirmations,
        })
    }

    /// Outputs locked to `address` that existed and were unspent by any
    /// confirmed transaction as of `height`.
    pub fn unspent_at(&self, address: &str, height: u64) -> Vec<(OutPoint, UtxoEntry)> {
        let live = self
            .utxo_set
            .iter()
            .filter(|(op, _)| self.spent.get(op).is_none_or(|s| s.height.is_none()))
            .map(|(op, e)| (*op, e.clone()));
        let spent_later = self
            .spent
            .iter()
            .filter(|(_, s)| s.height.is_some_and(|h| h > height) || s.height.is_none())
            .map(|(op, s)| (*op, s.entry.clone()));
        let mut out: BTreeMap<OutPoint, UtxoEntry> = BTreeMap::new();
        for (op, e) in live.chain(spent_later) {
            if e.output.script_pubkey.address == address && e.created_height <= height {
                out.insert(op, e);
            }
        }
        out.into_iter().collect()
    }

    /// True once a confirmed transaction spent `outpoint` at or below `height`.
    pub fn spent_by_height(&self, outpoint: &OutPoint, height: u64) -> bool {
        self.spent
            .get(outpoint)
            .and_then(|s| s.height)
            .is_some_and(|h| h <= height)
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&UtxoEntry> {
        self.utxo_set.get(outpoint)
    }

    pub fn is_unspent(&self, outpoint: &OutPoint) -> bool {
        self.utxo_set.contains_key(outpoint) && !self.spent.contains_key(outpoint)
    }

    /// Sum of confirmed unspent value locked to `address`.
    pub fn balance(&self, address: &str) -> u64 {
        self.utxo_set
            .values()
            .filter(|e| e.output.script_pubkey.address == address)
            .map(|e| e.output.value)
            .sum()
    }

    pub fn total_value(&self) -> u64 {
        self.utxo_set.values().map(|e| e.output.value).sum()
    }

    /// Every transaction ever accepted, with its current view.
    pub fn transactions(&self) -> impl Iterator<Item = UtxoTxView> + '_ {
        self.txs.keys().map(|id| self.get_transaction(id).expect("known"))
    }

    pub fn mempool(&self) -> &[Hash32] {
        &self.mempool
    }

    pub fn block(&self, height: u64) -> Option<&[Hash32]> {
        self.blocks.get(height as usize).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tss::{OracleTss, SessionResult, ThresholdSigner};

    fn setup() -> (UtxoChain, OracleTss) {
        let tss = OracleTss::new("g", [2; 32], 0);
        let chain = UtxoChain::new("btc-sim", "bc1bridge", tss.group_key().clone());
        (chain, tss)
    }

    fn spend(op: OutPoint, from: &str, outputs: Vec<TxOut>) -> UtxoTx {
        UtxoTx {
            inputs: vec![TxIn {
                prevout: op,
                prev_address: from.into(),
                witness: vec![],
            }],
            outputs,
            memo: vec![],
        }
    }

    #[test]
    fn deposit_confirmation_trace() {
        let (mut chain, _) = setup();
        let op = chain.fund("bc1alice", 100);
        let tx = spend(
            op,
            "bc1alice",
            vec![
                TxOut::pay("bc1bridge", 60),
                TxOut::op_return(b"payload".to_vec()),
                TxOut::pay("bc1alice", 40),
            ],
        );
        let id = chain.submit_tx(tx).unwrap();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, 0);
        chain.advance_block();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, 1);
        chain.advance_block();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, 2);
        assert_eq!(chain.balance("bc1bridge"), 60);
        // OP_RETURN output is not spendable.
        assert!(chain.utxo(&OutPoint { txid: id, vout: 1 }).is_none());
        assert_eq!(chain.total_value(), 100);
    }

    #[test]
    fn double_spend_rejected() {
        let (mut chain, _) = setup();
        let op = chain.fund("bc1alice", 10);
        chain.submit_tx(spend(op, "bc1alice", vec![TxOut::pay("bc1bob", 10)])).unwrap();
        let err = chain.submit_tx(spend(op, "bc1alice", vec![TxOut::pay("bc1carol", 10)]));
        assert!(matches!(err, Err(LedgerError::DoubleSpend(_))));
        chain.advance_block();
        let err = chain.submit_tx(spend(op, "bc1alice", vec![TxOut::pay("bc1carol", 10)]));
        assert!(matches!(err, Err(LedgerError::DoubleSpend(_))));
    }

    #[test]
    fn malformed_transactions() {
        let (mut chain, _) = setup();
        let op = chain.fund("bc1alice", 10);
        let uneven = spend(op, "bc1alice", vec![TxOut::pay("bc1bob", 9)]);
        assert!(matches!(chain.submit_tx(uneven), Err(LedgerError::MalformedTx(_))));
        let wrong_prev = spend(op, "bc1mallory", vec![TxOut::pay("bc1bob", 10)]);
        assert!(matches!(chain.submit_tx(wrong_prev), Err(LedgerError::MalformedTx(_))));
        let ghost = spend(OutPoint { txid: Hash32::ZERO, vout: 0 }, "x", vec![TxOut::pay("y", 0)]);
        assert!(matches!(chain.submit_tx(ghost), Err(LedgerError::MalformedTx(_))));
    }

    #[test]
    fn bridge_inputs_need_group_witness() {
        let (mut chain, mut tss) = setup();
        let op = chain.fund("bc1bridge", 50);
        let mut tx = spend(op, "bc1bridge", vec![TxOut::pay("bc1bob", 50)]);
        assert_eq!(chain.submit_tx(tx.clone()), Err(LedgerError::BadWitness(0)));

        let good = tx.sighash(0).unwrap();
        let wrong = Hash32::digest(b"not the sighash");
        for (sid, msg) in [("a", wrong), ("b", good)] {
            tss.start_signing(sid, &[0], &[msg], 9).unwrap();
            tss.approve(sid, 0, &[msg], 0).unwrap();
        }
        let SessionResult::Signature(bad_sig) = tss.session_result("a", 1).unwrap() else { panic!() };
        tx.inject_signatures(&bad_sig).unwrap();
        assert_eq!(chain.submit_tx(tx.clone()), Err(LedgerError::BadWitness(0)));
        let SessionResult::Signature(sig) = tss.session_result("b", 1).unwrap() else { panic!() };
        tx.inject_signatures(&sig).unwrap();
        let id = chain.submit_tx(tx.clone()).unwrap();
        assert_eq!(chain.submit_tx(tx), Err(LedgerError::AlreadyKnown(id)));
    }

    #[test]
    fn reorg_restores_inputs_and_never_resurrects() {
        let (mut chain, _) = setup();
        let op = chain.fund("bc1alice", 10);
        let tx = spend(op, "bc1alice", vec![TxOut::pay("bc1bob", 10)]);
        let id = chain.submit_tx(tx.clone()).unwrap();
        assert_eq!(chain.inject_reorg(&id), Err(LedgerError::NotConfirmed));
        chain.advance_block();
        chain.advance_block();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, 2);
        chain.inject_reorg(&id).unwrap();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, -1);
        assert!(chain.is_unspent(&op));
        assert_eq!(chain.balance("bc1bob"), 0);
        chain.advance_block();
        assert_eq!(chain.get_transaction(&id).unwrap().confirmations, -1);
        assert!(matches!(chain.submit_tx(tx), Err(LedgerError::AlreadyKnown(_))));
        assert_eq!(chain.inject_reorg(&Hash32::ZERO), Err(LedgerError::UnknownTx));
    }

    #[test]
    fn reorg_cascades_to_descendants() {
        let (mut chain, _) = setup();
        let op = chain.fund("a", 10);
        let parent = chain.submit_tx(spend(op, "a", vec![TxOut::pay("b", 10)])).unwrap();
        chain.advance_block();
        let child_in = OutPoint { txid: parent, vout: 0 };
        let child = chain.submit_tx(spend(child_in, "b", vec![TxOut::pay("c", 10)])).unwrap();
        chain.advance_block();
        chain.inject_reorg(&parent).unwrap();
        assert_eq!(chain.get_transaction(&child).unwrap().confirmations, -1);
        assert_eq!(chain.balance("c"), 0);
        assert_eq!(chain.balance("a"), 10);
        assert_eq!(chain.total_value(), 10);
    }

    #[test]
    fn unspent_at_height_snapshot() {
        let (mut chain, _) = setup();
        let early = chain.fund("bc1bridge", 5);
        chain.advance_block();
        let late = chain.fund("bc1bridge", 7);
        let at0: Vec<_> = chain.unspent_at("bc1bridge", 0).into_iter().map(|x| x.0).collect();
        assert_eq!(at0, vec![early]);
        assert_eq!(chain.unspent_at("bc1bridge", 1).len(), 2);
        let _ = late;
    }

    #[test]
    fn sighash_index_rules() {
        let tx = UtxoTx {
            inputs: vec![
                TxIn { prevout: OutPoint { txid: Hash32::ZERO, vout: 0 }, prev_address: "a".into(), witness: vec![] },
                TxIn { prevout: OutPoint { txid: Hash32::ZERO, vout: 1 }, prev_address: "a".into(), witness: vec![] },
            ],
            outputs: vec![TxOut::pay("b", 1)],
            memo: vec![],
        };
        assert_ne!(tx.sighash(0).unwrap(), tx.sighash(1).unwrap());
        assert_eq!(tx.sighash(1).unwrap(), tx.sighash(1).unwrap());
        assert_eq!(tx.sighash(2), Err(IndexOutOfRange { index: 2, len: 2 }));
        let mut signed = tx.clone();
        signed.inputs[0].witness = vec![1; 64];
        assert_eq!(signed.txid(), tx.txid());
        assert_eq!(UtxoTx::decode(&signed.encode()).unwrap(), signed);
    }
}
