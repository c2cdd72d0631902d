//! Account-based chain with the bridge deposit and withdraw contracts.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::Writer;
use crate::model::{withdraw_fields_hash, ChainId, DepositData, Hash32};
use crate::tss::{self, GroupKey, Signature};

use super::{confirmations, LedgerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WithdrawKind {
    Erc20,
    Native,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvmCall {
    DepositErc20 {
        token_addr: String,
        amount: u64,
        target_chain_id: ChainId,
        target_addr: String,
    },
    DepositNative {
        amount: u64,
        target_chain_id: ChainId,
        target_addr: String,
    },
    Withdraw {
        kind: WithdrawKind,
        fields: DepositData,
    },
    Transfer {
        token_addr: String,
        to: String,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvmTx {
    pub hash: Hash32,
    pub from: String,
    pub call: EvmCall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvmEventName {
    DepositedErc20,
    DepositedNative,
    Withdrawn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventBody {
    /// Present for ERC20 deposits only.
    pub token_addr: Option<String>,
    pub amount: u64,
    pub target_chain_id: ChainId,
    pub target_addr: String,
    pub sender: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvmEvent {
    pub index: usize,
    pub name: EvmEventName,
    pub body: EventBody,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvmReceipt {
    pub events: Vec<EvmEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvmTxView {
    pub tx: EvmTx,
    pub receipt: EvmReceipt,
    pub confirmations: i64,
}

/// A withdrawal the contract executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutedWithdrawal {
    pub tx_hash: Hash32,
    pub sign_hash: Hash32,
    pub fields: DepositData,
}

#[derive(Debug, Clone)]
struct TxRecord {
    tx: EvmTx,
    receipt: EvmReceipt,
    inclusion: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct EvmChain {
    pub chain_id: ChainId,
    pub height: u64,
    /// Address of the deposit/withdraw contract; it holds bridged liquidity.
    pub bridge_address: String,
    native: BTreeMap<String, u64>,
    tokens: BTreeMap<String, BTreeMap<String, u64>>,
    txs: BTreeMap<Hash32, TxRecord>,
    pending: Vec<Hash32>,
    used_sign_hashes: BTreeSet<Hash32>,
    group_key: GroupKey,
    /// Replay protection on withdrawals; disabling it is an ablation.
    pub replay_protection: bool,
    withdrawals: Vec<ExecutedWithdrawal>,
    nonce: u64,
    /// When set, the RPC provider every validator trusts answers lookups of
    /// unknown hashes with these fabricated records.
    provider_forgeries: Option<BTreeMap<Hash32, (EvmTx, EvmReceipt)>>,
}

impl EvmChain {
    pub fn new(chain_id: impl Into<ChainId>, bridge_address: impl Into<String>, group_key: GroupKey) -> Self {
        Self {
            chain_id: chain_id.into(),
            height: 0,
            bridge_address: bridge_address.into(),
            native: BTreeMap::new(),
            tokens: BTreeMap::new(),
            txs: BTreeMap::new(),
            pending: Vec::new(),
            used_sign_hashes: BTreeSet::new(),
            group_key,
            replay_protection: true,
            withdrawals: Vec::new(),
            nonce: 0,
            provider_forgeries: None,
        }
    }

    pub fn credit_native(&mut self, addr: &str, amount: u64) {
        *self.native.entry(addr.to_owned()).or_default() += amount;
    }

    pub fn credit_token(&mut self, token: &str, addr: &str, amount: u64) {
        *self
            .tokens
            .entry(token.to_owned())
            .or_default()
            .entry(addr.to_owned())
            .or_default() += amount;
    }

    pub fn native_balance(&self, addr: &str) -> u64 {
        self.native.get(addr).copied().unwrap_or(0)
    }

    pub fn token_balance(&self, token: &str, addr: &str) -> u64 {
        self.tokens
            .get(token)
            .and_then(|m| m.get(addr))
            .copied()
            .unwrap_or(0)
    }

    /// Balance of `token` (empty for native) held by `addr`.
    pub fn balance(&self, token: &str, addr: &str) -> u64 {
        if token.is_empty() {
            self.native_balance(addr)
        } else {
            self.token_balance(token, addr)
        }
    }

    pub fn total_supply(&self, token: &str) -> u64 {
        if token.is_empty() {
            self.native.values().sum()
        } else {
            self.tokens.get(token).map(|m| m.values().sum()).unwrap_or(0)
        }
    }

    pub fn used_sign_hashes(&self) -> &BTreeSet<Hash32> {
        &self.used_sign_hashes
    }

    pub fn withdrawals(&self) -> &[ExecutedWithdrawal] {
        &self.withdrawals
    }

    fn move_funds(&mut self, token: &str, from: &str, to: &str, amount: u64) -> Result<(), LedgerError> {
        let book = if token.is_empty() {
            &mut self.native
        } else {
            self.tokens.entry(token.to_owned()).or_default()
        };
        let have = book.get(from).copied().unwrap_or(0);
        if have < amount {
            return Err(LedgerError::InsufficientBalance);
        }
        book.insert(from.to_owned(), have - amount);
        *book.entry(to.to_owned()).or_default() += amount;
        Ok(())
    }

    fn record(&mut self, from: &str, call: EvmCall, receipt: EvmReceipt) -> Hash32 {
        let mut w = Writer::new();
        w.str(self.chain_id.as_str()).u64(self.nonce).str(from);
        self.nonce += 1;
        let hash = Hash32::tagged("evm-tx", w.as_slice());
        self.txs.insert(
            hash,
            TxRecord {
                tx: EvmTx {
                    hash,
                    from: from.to_owned(),
                    call,
                },
                receipt,
                inclusion: None,
            },
        );
        self.pending.push(hash);
        hash
    }

    pub fn deposit_erc20(
        &mut self,
        sender: &str,
        token_addr: &str,
        amount: u64,
        target_chain_id: &ChainId,
        target_addr: &str,
    ) -> Result<Hash32, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        if token_addr.is_empty() {
            return Err(LedgerError::EmptyAddress);
        }
        let bridge = self.bridge_address.clone();
        self.move_funds(token_addr, sender, &bridge, amount)?;
        let receipt = EvmReceipt {
            events: vec![EvmEvent {
                index: 0,
                name: EvmEventName::DepositedErc20,
                body: EventBody {
                    token_addr: Some(token_addr.to_owned()),
                    amount,
                    target_chain_id: target_chain_id.clone(),
                    target_addr: target_addr.to_owned(),
                    sender: sender.to_owned(),
                },
            }],
        };
        let call = EvmCall::DepositErc20 {
            token_addr: token_addr.to_owned(),
            amount,
            target_chain_id: target_chain_id.clone(),
            target_addr: target_addr.to_owned(),
        };
        Ok(self.record(sender, call, receipt))
    }

    pub fn deposit_native(
        &mut self,
        sender: &str,
        amount: u64,
        target_chain_id: &ChainId,
        target_addr: &str,
    ) -> Result<Hash32, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let bridge = self.bridge_address.clone();
        self.move_funds("", sender, &bridge, amount)?;
        let receipt = EvmReceipt {
            events: vec![EvmEvent {
                index: 0,
                name: EvmEventName::DepositedNative,
                body: EventBody {
                    token_addr: None,
                    amount,
                    target_chain_id: target_chain_id.clone(),
                    target_addr: target_addr.to_owned(),
                    sender: sender.to_owned(),
                },
            }],
        };
        let call = EvmCall::DepositNative {
            amount,
            target_chain_id: target_chain_id.clone(),
            target_addr: target_addr.to_owned(),
        };
        Ok(self.record(sender, call, receipt))
    }

    /// Plain transfer between accounts; not bridge related.
    pub fn transfer(&mut self, from: &str, token_addr: &str, to: &str, amount: u64) -> Result<Hash32, LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        self.move_funds(token_addr, from, to, amount)?;
        let call = EvmCall::Transfer {
            token_addr: token_addr.to_owned(),
            to: to.to_owned(),
            amount,
        };
        Ok(self.record(from, call, EvmReceipt::default()))
    }

    /// The withdraw contract. Anyone may call it; `fields.token_addr` names
    /// the token paid out on this chain (empty for native).
    pub fn withdraw(
        &mut self,
        caller: &str,
        kind: WithdrawKind,
        fields: &DepositData,
        signature: &Signature,
    ) -> Result<Hash32, LedgerError> {
        let sign_hash = withdraw_fields_hash(fields);
        if fields.amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let token_missing = kind == WithdrawKind::Erc20 && fields.token_addr.is_empty();
        if token_missing || fields.target_addr.is_empty() {
            return Err(LedgerError::EmptyAddress);
        }
        if kind == WithdrawKind::Native && !fields.token_addr.is_empty() {
            return Err(LedgerError::MalformedTx("native withdrawal names a token"));
        }
        if fields.target_chain_id != self.chain_id {
            return Err(LedgerError::WrongTargetChain(fields.target_chain_id.clone()));
        }
        if !tss::verify(&self.group_key, &[sign_hash], signature) {
            return Err(LedgerError::BadSignature);
        }
        if self.replay_protection && self.used_sign_hashes.contains(&sign_hash) {
            return Err(LedgerError::AlreadyWithdrawn);
        }
        let bridge = self.bridge_address.clone();
        self.move_funds(&fields.token_addr, &bridge, &fields.target_addr, fields.amount)?;
        self.used_sign_hashes.insert(sign_hash);
        let receipt = EvmReceipt {
            events: vec![EvmEvent {
                index: 0,
                name: EvmEventName::Withdrawn,
                body: EventBody {
                    token_addr: (!fields.token_addr.is_empty()).then(|| fields.token_addr.clone()),
                    amount: fields.amount,
                    target_chain_id: fields.target_chain_id.clone(),
                    target_addr: fields.target_addr.clone(),
                    sender: caller.to_owned(),
                },
            }],
        };
        let call = EvmCall::Withdraw {
            kind,
            fields: fields.clone(),
        };
        let tx_hash = self.record(caller, call, receipt);
        self.withdrawals.push(ExecutedWithdrawal {
            tx_hash,
            sign_hash,
            fields: fields.clone(),
        });
        Ok(tx_hash)
    }

    pub fn get_transaction(&self, hash: &Hash32) -> Result<EvmTxView, LedgerError> {
        let rec = self.txs.get(hash).ok_or(LedgerError::NotFound)?;
        Ok(EvmTxView {
            tx: rec.tx.clone(),
            receipt: rec.receipt.clone(),
            confirmations: confirmations(self.height, rec.inclusion),
        })
    }

    pub fn get_receipt(&self, hash: &Hash32) -> Result<EvmReceipt, LedgerError> {
        self.txs
            .get(hash)
            .map(|r| r.receipt.clone())
            .ok_or(LedgerError::NotFound)
    }

    /// Lookup through the shared RPC provider, which may be lying.
    pub fn provider_get_transaction(&self, hash: &Hash32) -> Result<EvmTxView, LedgerError> {
        if let Some((tx, receipt)) = self.provider_forgeries.as_ref().and_then(|f| f.get(hash)) {
            return Ok(EvmTxView {
                tx: tx.clone(),
                receipt: receipt.clone(),
                confirmations: self.height as i64 + 1,
            });
        }
        self.get_transaction(hash)
    }

    /// Makes the provider report a fabricated deposit under `hash`.
    pub fn forge_provider_record(&mut self, hash: Hash32, sender: &str, body: EventBody) {
        let name = if body.token_addr.is_some() {
            EvmEventName::DepositedErc20
        } else {
            EvmEventName::DepositedNative
        };
        let tx = EvmTx {
            hash,
            from: sender.to_owned(),
            call: EvmCall::DepositNative {
                amount: body.amount,
                target_chain_id: body.target_chain_id.clone(),
                target_addr: body.target_addr.clone(),
            },
        };
        let receipt = EvmReceipt {
            events: vec![EvmEvent { index: 0, name, body }],
        };
        self.provider_forgeries
            .get_or_insert_with(BTreeMap::new)
            .insert(hash, (tx, receipt));
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tss::{OracleTss, SessionResult, ThresholdSigner};

    const TOKEN: &str = "0x00000000000000000000000000000000000000b7";

    fn setup() -> (EvmChain, OracleTss) {
        let tss = OracleTss::new("g", [1; 32], 0);
        let mut chain = EvmChain::new("evm-sim", "0xbridge", tss.group_key().clone());
        chain.credit_token(TOKEN, "0xalice", 100);
        chain.credit_token(TOKEN, "0xbridge", 1000);
        (chain, tss)
    }

    fn sign(tss: &mut OracleTss, msg: Hash32) -> Signature {
        let id = format!("s{msg:?}");
        tss.start_signing(&id, &[0], &[msg], 10).unwrap();
        tss.approve(&id, 0, &[msg], 0).unwrap();
        match tss.session_result(&id, 1).unwrap() {
            SessionResult::Signature(s) => s,
            other => panic!("{other:?}"),
        }
    }

    fn fields(amount: u64) -> DepositData {
        DepositData {
            source_chain_id: "btc-sim".into(),
            deposit_tx_hash: Hash32::digest(b"dep"),
            tx_nonce: 0,
            sender: "bc1sender".into(),
            token_addr: TOKEN.into(),
            amount,
            target_chain_id: "evm-sim".into(),
            target_addr: "0xbob".into(),
        }
    }

    #[test]
    fn deposit_moves_balance_and_emits_event() {
        let (mut chain, _) = setup();
        let supply = chain.total_supply(TOKEN);
        let h = chain.deposit_erc20("0xalice", TOKEN, 40, &"btc-sim".into(), "bc1x").unwrap();
        assert_eq!(chain.token_balance(TOKEN, "0xalice"), 60);
        assert_eq!(chain.token_balance(TOKEN, "0xbridge"), 1040);
        assert_eq!(chain.total_supply(TOKEN), supply);
        let view = chain.get_transaction(&h).unwrap();
        assert_eq!(view.confirmations, 0);
        assert_eq!(view.receipt.events.len(), 1);
        assert_eq!(view.receipt.events[0].index, 0);
        assert_eq!(view.receipt.events[0].name, EvmEventName::DepositedErc20);
        chain.advance_block();
        assert_eq!(chain.get_transaction(&h).unwrap().confirmations, 1);
        chain.advance_block();
        chain.advance_block();
        assert_eq!(chain.get_transaction(&h).unwrap().confirmations, 3);
    }

    #[test]
    fn deposit_errors() {
        let (mut chain, _) = setup();
        let t: ChainId = "btc-sim".into();
        assert_eq!(chain.deposit_erc20("0xalice", TOKEN, 0, &t, "a"), Err(LedgerError::ZeroAmount));
        assert_eq!(
            chain.deposit_erc20("0xalice", TOKEN, 101, &t, "a"),
            Err(LedgerError::InsufficientBalance)
        );
        assert_eq!(chain.get_transaction(&Hash32::ZERO), Err(LedgerError::NotFound));
    }

    #[test]
    fn withdraw_then_replay() {
        let (mut chain, mut tss) = setup();
        let f = fields(25);
        let sig = sign(&mut tss, withdraw_fields_hash(&f));
        chain.withdraw("0xanyone", WithdrawKind::Erc20, &f, &sig).unwrap();
        assert_eq!(chain.token_balance(TOKEN, "0xbob"), 25);
        assert_eq!(
            chain.withdraw("0xanyone", WithdrawKind::Erc20, &f, &sig),
            Err(LedgerError::AlreadyWithdrawn)
        );
        assert_eq!(chain.token_balance(TOKEN, "0xbob"), 25);
        assert_eq!(chain.withdrawals().len(), 1);
    }

    #[test]
    fn replay_without_protection_pays_twice() {
        let (mut chain, mut tss) = setup();
        chain.replay_protection = false;
        let f = fields(25);
        let sig = sign(&mut tss, withdraw_fields_hash(&f));
        chain.withdraw("c", WithdrawKind::Erc20, &f, &sig).unwrap();
        chain.withdraw("c", WithdrawKind::Erc20, &f, &sig).unwrap();
        assert_eq!(chain.token_balance(TOKEN, "0xbob"), 50);
    }

    #[test]
    fn withdraw_checks() {
        let (mut chain, mut tss) = setup();
        let zero = fields(0);
        let sig = sign(&mut tss, withdraw_fields_hash(&zero));
        assert_eq!(chain.withdraw("c", WithdrawKind::Erc20, &zero, &sig), Err(LedgerError::ZeroAmount));

        let f = fields(5);
        let mut sig = sign(&mut tss, withdraw_fields_hash(&f));
        sig.0[3] ^= 0x10;
        assert_eq!(chain.withdraw("c", WithdrawKind::Erc20, &f, &sig), Err(LedgerError::BadSignature));

        let mut no_recv = fields(5);
        no_recv.target_addr.clear();
        assert_eq!(chain.withdraw("c", WithdrawKind::Erc20, &no_recv, &sig), Err(LedgerError::EmptyAddress));
        let mut no_token = fields(5);
        no_token.token_addr.clear();
        assert_eq!(chain.withdraw("c", WithdrawKind::Erc20, &no_token, &sig), Err(LedgerError::EmptyAddress));

        // A signature for one amount does not authorize another.
        let good = sign(&mut tss, withdraw_fields_hash(&fields(6)));
        assert_eq!(chain.withdraw("c", WithdrawKind::Erc20, &fields(7), &good), Err(LedgerError::BadSignature));
    }

    #[test]
    fn native_withdraw() {
        let (mut chain, mut tss) = setup();
        chain.credit_native("0xbridge", 10);
        let mut f = fields(4);
        f.token_addr.clear();
        let sig = sign(&mut tss, withdraw_fields_hash(&f));
        chain.withdraw("c", WithdrawKind::Native, &f, &sig).unwrap();
        assert_eq!(chain.native_balance("0xbob"), 4);
        assert_eq!(chain.native_balance("0xbridge"), 6);
    }

    #[test]
    fn reads_are_pure() {
        let (mut chain, _) = setup();
        let h = chain.deposit_erc20("0xalice", TOKEN, 1, &"x".into(), "a").unwrap();
        let a = chain.get_transaction(&h).unwrap();
        let b = chain.get_transaction(&h).unwrap();
        assert_eq!(a, b);
        assert_eq!(chain.get_receipt(&h).unwrap(), a.receipt);
    }
}
