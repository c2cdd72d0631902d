//! Confidential-asset style chain where bridged assets are minted by a
//! group-signed emit transaction and returned by burning with a service
//! entry that names the destination.

use std::collections::BTreeMap;

use crate::codec::{DecodeError, Reader, Writer};
use crate::model::{ChainId, Hash32};
use crate::tss::{self, GroupKey, Signature};

use super::{confirmations, LedgerError};

/// Domain tag for the hash a committee signs to authorize an emit.
pub const EMIT_TAG: &str = "bridgeless/emit/v1";

/// Unsigned emit of `amount` units of `asset_id` to `receiver`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitTx {
    pub asset_id: String,
    pub amount: u64,
    pub receiver: String,
    pub memo: Vec<u8>,
}

impl EmitTx {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.asset_id)
            .u64(self.amount)
            .str(&self.receiver)
            .bytes(&self.memo);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self {
            asset_id: r.str()?.to_owned(),
            amount: r.u64()?,
            receiver: r.str()?.to_owned(),
            memo: r.bytes()?.to_vec(),
        };
        r.finish()?;
        Ok(tx)
    }

    pub fn sign_hash(&self) -> Hash32 {
        Hash32::tagged(EMIT_TAG, &self.encode())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BurnEmitOp {
    Burn {
        sender: String,
        asset_id: String,
        amount: u64,
        service_entries: Vec<Vec<u8>>,
    },
    Emit(EmitTx),
    Transfer {
        from: String,
        to: String,
        asset_id: String,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurnEmitTxView {
    pub hash: Hash32,
    pub op: BurnEmitOp,
    pub confirmations: i64,
}

#[derive(Debug, Clone)]
struct TxRecord {
    op: BurnEmitOp,
    inclusion: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BurnEmitChain {
    pub chain_id: ChainId,
    pub height: u64,
    group_key: GroupKey,
    balances: BTreeMap<(String, String), u64>,
    supply: BTreeMap<String, u64>,
    txs: BTreeMap<Hash32, TxRecord>,
    pending: Vec<Hash32>,
    nonce: u64,
}

impl BurnEmitChain {
    pub fn new(chain_id: impl Into<ChainId>, group_key: GroupKey) -> Self {
        Self {
            chain_id: chain_id.into(),
            height: 0,
            group_key,
            balances: BTreeMap::new(),
            supply: BTreeMap::new(),
            txs: BTreeMap::new(),
            pending: Vec::new(),
            nonce: 0,
        }
    }

    pub fn balance(&self, asset_id: &str, addr: &str) -> u64 {
        self.balances
            .get(&(asset_id.to_owned(), addr.to_owned()))
            .copied()
            .unwrap_or(0)
    }

    pub fn supply(&self, asset_id: &str) -> u64 {
        self.supply.get(asset_id).copied().unwrap_or(0)
    }

    /// Genesis allocation outside the bridge.
    pub fn mint_genesis(&mut self, asset_id: &str, addr: &str, amount: u64) {
        self.credit(asset_id, addr, amount);
        *self.supply.entry(asset_id.to_owned()).or_default() += amount;
    }

    fn debit(&mut self, asset_id: &str, addr: &str, amount: u64) -> Result<(), LedgerError> {
        let key = (asset_id.to_owned(), addr.to_owned());
        let have = self.balances.get(&key).copied().unwrap_or(0);
        if have < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        self.balances.insert(key, have - amount);
        Ok(())
    }

    fn credit(&mut self, asset_id: &str, addr: &str, amount: u64) {
        *self
            .balances
            .entry((asset_id.to_owned(), addr.to_owned()))
            .or_default() += amount;
    }

    fn record(&mut self, hash: Hash32, op: BurnEmitOp) -> Hash32 {
        self.txs.insert(hash, TxRecord { op, inclusion: None });
        self.pending.push(hash);
        hash
    }

    fn next_hash(&mut self, kind: &str) -> Hash32 {
        let mut w = Writer::new();
        w.str(self.chain_id.as_str()).str(kind).u64(self.nonce);
        self.nonce += 1;
        Hash32::tagged("burn-emit-tx", w.as_slice())
    }

    /// Burns `amount` of the sender's asset. Service entries are stored
    /// verbatim; the chain does not interpret them.
    pub fn submit_burn(
        &mut self,
        sender: &str,
        asset_id: &str,
        amount: u64,
        service_entries: Vec<Vec<u8>>,
    ) -> Result<Hash32, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.debit(asset_id, sender, amount)?;
        *self.supply.entry(asset_id.to_owned()).or_default() -= amount;
        let hash = self.next_hash("burn");
        Ok(self.record(
            hash,
            BurnEmitOp::Burn {
                sender: sender.to_owned(),
                asset_id: asset_id.to_owned(),
                amount,
                service_entries,
            },
        ))
    }

    /// Mints per a group-signed emit. The transaction hash is the sign hash,
    /// so the same emit can execute only once.
    pub fn submit_emit(&mut self, tx: &EmitTx, signature: &Signature) -> Result<Hash32, LedgerError> {
        if tx.amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        if tx.asset_id.is_empty() || tx.receiver.is_empty() {
            return Err(LedgerError::EmptyAddress);
        }
        let hash = tx.sign_hash();
        if !tss::verify(&self.group_key, &[hash], signature) {
            return Err(LedgerError::BadSignature);
        }
        if self.txs.contains_key(&hash) {
            return Err(LedgerError::AlreadyKnown(hash));
        }
        self.credit(&tx.asset_id, &tx.receiver, tx.amount);
        *self.supply.entry(tx.asset_id.clone()).or_default() += tx.amount;
        Ok(self.record(hash, BurnEmitOp::Emit(tx.clone())))
    }

    pub fn transfer(&mut self, from: &str, to: &str, asset_id: &str, amount: u64) -> Result<Hash32, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.debit(asset_id, from, amount)?;
        self.credit(asset_id, to, amount);
        let hash = self.next_hash("transfer");
        Ok(self.record(
            hash,
            BurnEmitOp::Transfer {
                from: from.to_owned(),
                to: to.to_owned(),
                asset_id: asset_id.to_owned(),
                amount,
            },
        ))
    }

    pub fn get_transaction(&self, hash: &Hash32) -> Result<BurnEmitTxView, LedgerError> {
        let rec = self.txs.get(hash).ok_or(LedgerError::NotFound)?;
        Ok(BurnEmitTxView {
            hash: *hash,
            op: rec.op.clone(),
            confirmations: confirmations(self.height, rec.inclusion),
        })
    }

    /// Every executed emit, in hash order.
    pub fn emits(&self) -> impl Iterator<Item = (Hash32, &EmitTx)> + '_ {
        self.txs.iter().filter_map(|(h, r)| match &r.op {
            BurnEmitOp::Emit(tx) => Some((*h, tx)),
            _ => None,
        })
    }

    pub fn advance_block(&mut self) -> u64 {
        self.height += 1;
        for hash in self.pending.drain(..) {
            if let Some(rec) = self.txs.get_mut(&hash) {
                rec.inclusion = Some(self.height);
            }
        }
        self.height
    }
}
