//! Per-chain verifiers and withdrawal builders used by validators.
//!
//! Every client implements the same four operations: extract deposit data
//! from a source-chain transaction, build the withdrawal transaction for a
//! target chain, compute the hash(es) to sign, and submit a signed
//! withdrawal. Building is a pure function of the chain snapshot at an
//! anchor height, the locked input set and the deposit data, so honest
//! validators derive identical transactions.

pub mod target;

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::ledger::burn_emit::{BurnEmitOp, EmitTx};
use crate::ledger::evm::{EvmEventName, WithdrawKind};
use crate::ledger::utxo::{OutPoint, TxIn, TxOut, UtxoTx};
use crate::ledger::{LedgerError, Ledgers};
use crate::model::{
    canonical_sign_hash, ChainId, ChainKind, DepositData, DepositIdentifier, Hash32, InvalidDeposit,
    WithdrawalPreimage,
};
use crate::tss::Signature;

pub use target::{decode_target, encode_target, TargetDecodeError, TargetSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transaction not found")]
    NotFound,
    #[error("{confirmations} confirmations, {required} required")]
    NotConfirmed { confirmations: i64, required: u64 },
    #[error("no event at index {0}")]
    NoSuchEvent(u64),
    #[error("event is not a deposit")]
    WrongEventKind,
    #[error("no output at index {0}")]
    NoSuchOutput(u64),
    #[error("deposit output does not pay the bridge address")]
    WrongAddress,
    #[error("output after the deposit carries no OP_RETURN")]
    MissingOpReturn,
    #[error("malformed OP_RETURN payload: {0}")]
    MalformedOpReturn(TargetDecodeError),
    #[error("transaction is not a burn")]
    NotABurn,
    #[error("service entry missing or malformed")]
    BadServiceEntry,
    #[error("deposit identifier names chain {got}, client serves {expected}")]
    WrongChain { expected: ChainId, got: ChainId },
    #[error("chain {0} is not supported")]
    UnsupportedChain(ChainId),
    #[error("token {token:?} on {chain} has no counterpart on {target}")]
    UnsupportedAsset {
        chain: ChainId,
        token: String,
        target: ChainId,
    },
    #[error("invalid target address {0:?}")]
    InvalidTargetAddress(String),
    #[error("invalid deposit: {0}")]
    InvalidDeposit(#[from] InvalidDeposit),
    #[error("bridge holds {available} spendable units, {need} needed")]
    InsufficientFunds { need: u64, available: u64 },
    #[error("withdrawal transaction does not match the target chain kind")]
    WrongTransactionKind,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Required source-chain confirmations when a scenario does not override them.
pub fn default_required_confirmations(kind: ChainKind) -> u64 {
    match kind {
        ChainKind::Evm => 3,
        ChainKind::Utxo => 2,
        ChainKind::BurnEmit => 1,
    }
}

pub fn default_address_pattern(kind: ChainKind) -> &'static str {
    match kind {
        ChainKind::Evm => r"^0x[0-9a-fA-F]{40}$",
        ChainKind::Utxo => r"^bc1[a-z0-9]{3,87}$",
        ChainKind::BurnEmit => r"^Zx[A-Za-z0-9]{3,96}$",
    }
}

/// Maps each bridged asset to its token on every chain that carries it.
/// An empty token string denotes the chain's native asset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetRegistry {
    assets: BTreeMap<String, BTreeMap<ChainId, String>>,
}

impl AssetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, asset: &str, chain: impl Into<ChainId>, token: &str) -> &mut Self {
        self.assets
            .entry(asset.to_owned())
            .or_default()
            .insert(chain.into(), token.to_owned());
        self
    }

    pub fn asset_of(&self, chain: &ChainId, token: &str) -> Option<&str> {
        self.assets
            .iter()
            .find(|(_, tokens)| tokens.get(chain).map(String::as_str) == Some(token))
            .map(|(name, _)| name.as_str())
    }

    pub fn token_on(&self, asset: &str, chain: &ChainId) -> Option<&str> {
        self.assets.get(asset)?.get(chain).map(String::as_str)
    }

    /// The target-chain token a deposit is paid out in.
    pub fn target_token(&self, data: &DepositData) -> Result<String, ClientError> {
        let unsupported = || ClientError::UnsupportedAsset {
            chain: data.source_chain_id.clone(),
            token: data.token_addr.clone(),
            target: data.target_chain_id.clone(),
        };
        let asset = self
            .asset_of(&data.source_chain_id, &data.token_addr)
            .ok_or_else(unsupported)?;
        self.token_on(asset, &data.target_chain_id)
            .map(str::to_owned)
            .ok_or_else(unsupported)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<ChainId, String>)> {
        self.assets.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// A withdrawal transaction before signatures are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WithdrawalTx {
    /// Call to the withdraw contract; `fields.token_addr` is the target token.
    Evm { kind: WithdrawKind, fields: DepositData },
    Emit(EmitTx),
    Utxo(UtxoTx),
}

impl WithdrawalTx {
    pub fn chain_kind(&self) -> ChainKind {
        match self {
            WithdrawalTx::Evm { .. } => ChainKind::Evm,
            WithdrawalTx::Emit(_) => ChainKind::BurnEmit,
            WithdrawalTx::Utxo(_) => ChainKind::Utxo,
        }
    }
}

/// Memo bytes identifying the deposit a withdrawal pays out.
pub fn deposit_memo(id: &DepositIdentifier) -> Vec<u8> {
    let mut w = Writer::new();
    id.encode(&mut w);
    w.finish()
}

pub fn parse_deposit_memo(memo: &[u8]) -> Result<DepositIdentifier, DecodeError> {
    let mut r = Reader::new(memo);
    let id = DepositIdentifier::decode(&mut r)?;
    r.finish()?;
    Ok(id)
}

/// One validator's connection to one chain.
#[derive(Debug, Clone)]
pub struct ChainClient {
    pub chain_id: ChainId,
    pub kind: ChainKind,
    pub required_confirmations: u64,
    pub bridge_address: String,
    address_rule: Regex,
    /// Bridge outpoints committed to in-flight withdrawals (UTXO only).
    pub locked_inputs: BTreeSet<OutPoint>,
}

impl ChainClient {
    pub fn new(chain_id: impl Into<ChainId>, kind: ChainKind, bridge_address: impl Into<String>) -> Self {
        Self {
            chain_id: chain_id.into(),
            kind,
            required_confirmations: default_required_confirmations(kind),
            bridge_address: bridge_address.into(),
            address_rule: Regex::new(default_address_pattern(kind)).expect("static pattern"),
            locked_inputs: BTreeSet::new(),
        }
    }

    pub fn with_confirmations(mut self, required: u64) -> Self {
        self.required_confirmations = required;
        self
    }

    pub fn with_address_pattern(mut self, pattern: &str) -> Result<Self, regex::Error> {
        self.address_rule = Regex::new(pattern)?;
        Ok(self)
    }

    pub fn is_valid_address(&self, addr: &str) -> bool {
        self.address_rule.is_match(addr)
    }

    pub fn is_valid_amount(&self, amount: u64) -> bool {
        amount > 0
    }

    fn check_confirmations(&self, confirmations: i64) -> Result<(), ClientError> {
        if confirmations <= 0 || (confirmations as u64) < self.required_confirmations {
            return Err(ClientError::NotConfirmed {
                confirmations,
                required: self.required_confirmations,
            });
        }
        Ok(())
    }

    pub fn get_deposit_data(&self, ledgers: &Ledgers, id: &DepositIdentifier) -> Result<DepositData, ClientError> {
        if id.chain_id != self.chain_id {
            return Err(ClientError::WrongChain {
                expected: self.chain_id.clone(),
                got: id.chain_id.clone(),
            });
        }
        let unsupported = || ClientError::UnsupportedChain(self.chain_id.clone());
        let data = match self.kind {
            ChainKind::Evm => self.evm_deposit(ledgers.evm(&self.chain_id).ok_or_else(unsupported)?, id)?,
            ChainKind::Utxo => self.utxo_deposit(ledgers.utxo(&self.chain_id).ok_or_else(unsupported)?, id)?,
            ChainKind::BurnEmit => {
                self.burn_deposit(ledgers.burn_emit(&self.chain_id).ok_or_else(unsupported)?, id)?
            }
        };
        data.validate()?;
        Ok(data)
    }

    fn evm_deposit(
        &self,
        chain: &crate::ledger::EvmChain,
        id: &DepositIdentifier,
    ) -> Result<DepositData, ClientError> {
        let view = chain.provider_get_transaction(&id.tx_hash).map_err(|_| ClientError::NotFound)?;
        self.check_confirmations(view.confirmations)?;
        let event = usize::try_from(id.tx_nonce)
            .ok()
            .and_then(|i| view.receipt.events.get(i))
            .ok_or(ClientError::NoSuchEvent(id.tx_nonce))?;
        let token_addr = match event.name {
            EvmEventName::DepositedErc20 => event.body.token_addr.clone().ok_or(ClientError::WrongEventKind)?,
            EvmEventName::DepositedNative => String::new(),
            EvmEventName::Withdrawn => return Err(ClientError::WrongEventKind),
        };
        Ok(DepositData {
            source_chain_id: self.chain_id.clone(),
            deposit_tx_hash: id.tx_hash,
            tx_nonce: id.tx_nonce,
            sender: event.body.sender.clone(),
            token_addr,
            amount: event.body.amount,
            target_chain_id: event.body.target_chain_id.clone(),
            target_addr: event.body.target_addr.clone(),
        })
    }

    fn utxo_deposit(
        &self,
        chain: &crate::ledger::UtxoChain,
        id: &DepositIdentifier,
    ) -> Result<DepositData, ClientError> {
        let view = chain.get_transaction(&id.tx_hash).map_err(|_| ClientError::NotFound)?;
        self.check_confirmations(view.confirmations)?;
        let index = usize::try_from(id.tx_nonce).map_err(|_| ClientError::NoSuchOutput(id.tx_nonce))?;
        let out = view.tx.outputs.get(index).ok_or(ClientError::NoSuchOutput(id.tx_nonce))?;
        if out.script_pubkey.op_return.is_some() || out.script_pubkey.address != self.bridge_address {
            return Err(ClientError::WrongAddress);
        }
        let payload = view
            .tx
            .outputs
            .get(index + 1)
            .and_then(|o| o.script_pubkey.op_return.as_deref())
            .ok_or(ClientError::MissingOpReturn)?;
        let dest = decode_target(payload).map_err(ClientError::MalformedOpReturn)?;
        let sender = view
            .tx
            .inputs
            .first()
            .map(|i| i.prev_address.clone())
            .unwrap_or_default();
        Ok(DepositData {
            source_chain_id: self.chain_id.clone(),
            deposit_tx_hash: id.tx_hash,
            tx_nonce: id.tx_nonce,
            sender,
            token_addr: String::new(),
            amount: out.value,
            target_chain_id: dest.chain_id,
            target_addr: dest.address,
        })
    }

    fn burn_deposit(
        &self,
        chain: &crate::ledger::BurnEmitChain,
        id: &DepositIdentifier,
    ) -> Result<DepositData, ClientError> {
        let view = chain.get_transaction(&id.tx_hash).map_err(|_| ClientError::NotFound)?;
        let BurnEmitOp::Burn {
            sender,
            asset_id,
            amount,
            service_entries,
        } = view.op
        else {
            return Err(ClientError::NotABurn);
        };
        self.check_confirmations(view.confirmations)?;
        let entry = usize::try_from(id.tx_nonce)
            .ok()
            .and_then(|i| service_entries.get(i))
            .ok_or(ClientError::BadServiceEntry)?;
        let dest = decode_target(entry).map_err(|_| ClientError::BadServiceEntry)?;
        Ok(DepositData {
            source_chain_id: self.chain_id.clone(),
            deposit_tx_hash: id.tx_hash,
            tx_nonce: id.tx_nonce,
            sender,
            token_addr: asset_id,
            amount,
            target_chain_id: dest.chain_id,
            target_addr: dest.address,
        })
    }

    /// Builds the unsigned withdrawal paying `data` out on this chain.
    /// `target_token` is the mapped token on this chain; `anchor_height`
    /// fixes the UTXO snapshot used for coin selection.
    pub fn get_withdrawal_tx(
        &self,
        ledgers: &Ledgers,
        data: &DepositData,
        target_token: &str,
        anchor_height: u64,
    ) -> Result<WithdrawalTx, ClientError> {
        if data.target_chain_id != self.chain_id {
            return Err(ClientError::WrongChain {
                expected: self.chain_id.clone(),
                got: data.target_chain_id.clone(),
            });
        }
        match self.kind {
            ChainKind::Evm => {
                let kind = if target_token.is_empty() {
                    WithdrawKind::Native
                } else {
                    WithdrawKind::Erc20
                };
                let mut fields = data.clone();
                fields.token_addr = target_token.to_owned();
                Ok(WithdrawalTx::Evm { kind, fields })
            }
            ChainKind::BurnEmit => Ok(WithdrawalTx::Emit(EmitTx {
                asset_id: target_token.to_owned(),
                amount: data.amount,
                receiver: data.target_addr.clone(),
                memo: deposit_memo(&data.identifier()),
            })),
            ChainKind::Utxo => {
                let chain = ledgers
                    .utxo(&self.chain_id)
                    .ok_or_else(|| ClientError::UnsupportedChain(self.chain_id.clone()))?;
                let candidates: Vec<(OutPoint, u64)> = chain
                    .unspent_at(&self.bridge_address, anchor_height)
                    .into_iter()
                    .filter(|(op, _)| !self.locked_inputs.contains(op))
                    .map(|(op, e)| (op, e.output.value))
                    .collect();
                let tx = build_utxo_withdrawal(&candidates, &self.bridge_address, data)?;
                Ok(WithdrawalTx::Utxo(tx))
            }
        }
    }

    /// Hashes the committee signs for `tx`.
    pub fn get_hash_of_withdrawal(tx: &WithdrawalTx) -> Vec<Hash32> {
        match tx {
            WithdrawalTx::Evm { fields, .. } => canonical_sign_hash(fields, WithdrawalPreimage::Evm),
            WithdrawalTx::Emit(emit) => vec![emit.sign_hash()],
            WithdrawalTx::Utxo(utxo) => (0..utxo.inputs.len())
                .map(|i| utxo.sighash(i).expect("index in range"))
                .collect(),
        }
    }

    pub fn submit_tx(
        &self,
        ledgers: &mut Ledgers,
        tx: &WithdrawalTx,
        signature: &Signature,
        caller: &str,
    ) -> Result<Hash32, ClientError> {
        if tx.chain_kind() != self.kind {
            return Err(ClientError::WrongTransactionKind);
        }
        let unsupported = || ClientError::UnsupportedChain(self.chain_id.clone());
        let hash = match tx {
            WithdrawalTx::Evm { kind, fields } => ledgers
                .evm_mut(&self.chain_id)
                .ok_or_else(unsupported)?
                .withdraw(caller, *kind, fields, signature)?,
            WithdrawalTx::Emit(emit) => ledgers
                .burn_emit_mut(&self.chain_id)
                .ok_or_else(unsupported)?
                .submit_emit(emit, signature)?,
            WithdrawalTx::Utxo(utxo) => {
                let mut signed = utxo.clone();
                signed.inject_signatures(signature)?;
                ledgers
                    .utxo_mut(&self.chain_id)
                    .ok_or_else(unsupported)?
                    .submit_tx(signed)?
            }
        };
        Ok(hash)
    }

    pub fn lock_inputs(&mut self, tx: &WithdrawalTx) {
        if let WithdrawalTx::Utxo(utxo) = tx {
            self.locked_inputs.extend(utxo.inputs.iter().map(|i| i.prevout));
        }
    }

    /// Forgets locked outpoints whose spend confirmed at or below `height`.
    pub fn prune_locked(&mut self, ledgers: &Ledgers, height: u64) {
        if let Some(chain) = ledgers.utxo(&self.chain_id) {
            self.locked_inputs.retain(|op| !chain.spent_by_height(op, height));
        }
    }
}

/// Greedy selection over `candidates` in (txid, vout) order until the sum
/// covers the amount; surplus returns to the bridge as change. Zero fee.
pub fn build_utxo_withdrawal(
    candidates: &[(OutPoint, u64)],
    bridge_address: &str,
    data: &DepositData,
) -> Result<UtxoTx, ClientError> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by_key(|(op, _)| *op);
    let mut inputs = Vec::new();
    let mut total: u64 = 0;
    for (op, value) in &sorted {
        if total >= data.amount {
            break;
        }
        inputs.push(TxIn {
            prevout: *op,
            prev_address: bridge_address.to_owned(),
            witness: Vec::new(),
        });
        total = total.saturating_add(*value);
    }
    if total < data.amount {
        return Err(ClientError::InsufficientFunds {
            need: data.amount,
            available: total,
        });
    }
    let mut outputs = vec![TxOut::pay(data.target_addr.clone(), data.amount)];
    if total > data.amount {
        outputs.push(TxOut::pay(bridge_address, total - data.amount));
    }
    Ok(UtxoTx {
        inputs,
        outputs,
        memo: deposit_memo(&data.identifier()),
    })
}

/// The chain clients of one validator plus the asset mapping they share.
#[derive(Debug, Clone, Default)]
pub struct ChainClients {
    clients: BTreeMap<ChainId, ChainClient>,
    pub assets: AssetRegistry,
}

impl ChainClients {
    pub fn new(assets: AssetRegistry) -> Self {
        Self {
            clients: BTreeMap::new(),
            assets,
        }
    }

    pub fn insert(&mut self, client: ChainClient) {
        self.clients.insert(client.chain_id.clone(), client);
    }

    pub fn get(&self, chain: &ChainId) -> Option<&ChainClient> {
        self.clients.get(chain)
    }

    pub fn get_mut(&mut self, chain: &ChainId) -> Option<&mut ChainClient> {
        self.clients.get_mut(chain)
    }

    pub fn supports(&self, chain: &ChainId) -> bool {
        self.clients.contains_key(chain)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChainClient> {
        self.clients.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ChainClient> {
        self.clients.values_mut()
    }

    fn client(&self, chain: &ChainId) -> Result<&ChainClient, ClientError> {
        self.clients
            .get(chain)
            .ok_or_else(|| ClientError::UnsupportedChain(chain.clone()))
    }

    /// Reads and validates a deposit: source lookup, then target address,
    /// amount and asset mapping checks.
    pub fn verify_deposit(&self, ledgers: &Ledgers, id: &DepositIdentifier) -> Result<DepositData, ClientError> {
        let data = self.client(&id.chain_id)?.get_deposit_data(ledgers, id)?;
        let target = self.client(&data.target_chain_id)?;
        if !target.is_valid_address(&data.target_addr) {
            return Err(ClientError::InvalidTargetAddress(data.target_addr.clone()));
        }
        if !target.is_valid_amount(data.amount) {
            return Err(ClientError::InvalidDeposit(InvalidDeposit::ZeroAmount));
        }
        self.assets.target_token(&data)?;
        Ok(data)
    }

    pub fn get_withdrawal_tx(
        &self,
        ledgers: &Ledgers,
        data: &DepositData,
        anchor_height: u64,
    ) -> Result<WithdrawalTx, ClientError> {
        let token = self.assets.target_token(data)?;
        self.client(&data.target_chain_id)?
            .get_withdrawal_tx(ledgers, data, &token, anchor_height)
    }

    /// The withdrawal transaction together with the hashes to sign.
    pub fn get_hash_of_withdrawal(
        &self,
        ledgers: &Ledgers,
        data: &DepositData,
        anchor_height: u64,
    ) -> Result<(WithdrawalTx, Vec<Hash32>), ClientError> {
        let tx = self.get_withdrawal_tx(ledgers, data, anchor_height)?;
        let hashes = ChainClient::get_hash_of_withdrawal(&tx);
        Ok((tx, hashes))
    }

    pub fn submit_tx(
        &self,
        ledgers: &mut Ledgers,
        target: &ChainId,
        tx: &WithdrawalTx,
        signature: &Signature,
        caller: &str,
    ) -> Result<Hash32, ClientError> {
        self.client(target)?.submit_tx(ledgers, tx, signature, caller)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{BurnEmitChain, Chain, EvmChain, UtxoChain};
    use crate::tss::{OracleTss, SessionResult, ThresholdSigner};

    const EVM: &str = "evm-sim";
    const BTC: &str = "btc-sim";
    const ZANO: &str = "zano-sim";
    const WBTC: &str = "0x00000000000000000000000000000000000000b7";
    const EVM_BRIDGE: &str = "0x00000000000000000000000000000000000b1d6e";
    const ALICE: &str = "0x000000000000000000000000000000000000a11c";

    fn assets() -> AssetRegistry {
        let mut a = AssetRegistry::new();
        a.add("BTC", BTC, "").add("BTC", EVM, WBTC).add("BTC", ZANO, "zBTC");
        a.add("ETH", EVM, "").add("ETH", ZANO, "zETH");
        a
    }

    fn world() -> (Ledgers, ChainClients, OracleTss) {
        let tss = OracleTss::new("g", [9; 32], 0);
        let gk = tss.group_key().clone();
        let mut ledgers = Ledgers::new();
        ledgers.insert(Chain::Evm(EvmChain::new(EVM, EVM_BRIDGE, gk.clone())));
        ledgers.insert(Chain::Utxo(UtxoChain::new(BTC, "bc1bridge", gk.clone())));
        ledgers.insert(Chain::BurnEmit(BurnEmitChain::new(ZANO, gk)));
        let mut clients = ChainClients::new(assets());
        clients.insert(ChainClient::new(EVM, ChainKind::Evm, EVM_BRIDGE));
        clients.insert(ChainClient::new(BTC, ChainKind::Utxo, "bc1bridge"));
        clients.insert(ChainClient::new(ZANO, ChainKind::BurnEmit, "ZxBridge"));
        (ledgers, clients, tss)
    }

    fn sign(tss: &mut OracleTss, sid: &str, msg: &[Hash32]) -> Signature {
        tss.start_signing(sid, &[0], msg, 100).unwrap();
        tss.approve(sid, 0, msg, 0).unwrap();
        match tss.session_result(sid, 1).unwrap() {
            SessionResult::Signature(s) => s,
            other => panic!("{other:?}"),
        }
    }

    fn advance(ledgers: &mut Ledgers, k: usize) {
        for _ in 0..k {
            ledgers.advance_all();
        }
    }

    #[test]
    fn evm_erc20_deposit_roundtrip() {
        let (mut ledgers, clients, _) = world();
        let evm = ledgers.evm_mut(&EVM.into()).unwrap();
        evm.credit_token(WBTC, ALICE, 100);
        let hash = evm.deposit_erc20(ALICE, WBTC, 40, &BTC.into(), "bc1bob").unwrap();
        let id = DepositIdentifier::new(EVM, hash, 0);
        advance(&mut ledgers, 1);
        assert_eq!(
            clients.verify_deposit(&ledgers, &id),
            Err(ClientError::NotConfirmed { confirmations: 1, required: 3 })
        );
        advance(&mut ledgers, 2);
        let data = clients.verify_deposit(&ledgers, &id).unwrap();
        assert_eq!(data.token_addr, WBTC);
        assert_eq!((data.amount, data.sender.as_str()), (40, ALICE));
        assert_eq!(data.target_addr, "bc1bob");
        let bad = DepositIdentifier::new(EVM, hash, 1);
        assert_eq!(clients.verify_deposit(&ledgers, &bad), Err(ClientError::NoSuchEvent(1)));
    }

    #[test]
    fn evm_withdraw_event_is_not_a_deposit() {
        let (mut ledgers, clients, mut tss) = world();
        let evm = ledgers.evm_mut(&EVM.into()).unwrap();
        evm.credit_native(EVM_BRIDGE, 50);
        let fields = DepositData {
            source_chain_id: ZANO.into(),
            deposit_tx_hash: Hash32::digest(b"burn"),
            tx_nonce: 0,
            sender: "ZxAlice".into(),
            token_addr: String::new(),
            amount: 5,
            target_chain_id: EVM.into(),
            target_addr: ALICE.into(),
        };
        let tx = WithdrawalTx::Evm { kind: WithdrawKind::Native, fields };
        let sig = sign(&mut tss, "s", &ChainClient::get_hash_of_withdrawal(&tx));
        let h = clients.submit_tx(&mut ledgers, &EVM.into(), &tx, &sig, ALICE).unwrap();
        assert_eq!(
            clients.submit_tx(&mut ledgers, &EVM.into(), &tx, &sig, ALICE),
            Err(ClientError::Ledger(LedgerError::AlreadyWithdrawn))
        );
        advance(&mut ledgers, 5);
        let id = DepositIdentifier::new(EVM, h, 0);
        assert_eq!(clients.verify_deposit(&ledgers, &id), Err(ClientError::WrongEventKind));
    }

    fn btc_deposit(ledgers: &mut Ledgers, value: u64, op_return: Option<Vec<u8>>) -> DepositIdentifier {
        let chain = ledgers.utxo_mut(&BTC.into()).unwrap();
        let funding = chain.fund("bc1alice", value);
        let mut outputs = vec![TxOut::pay("bc1bridge", value)];
        if let Some(p) = op_return {
            outputs.push(TxOut::op_return(p));
        }
        let tx = UtxoTx {
            inputs: vec![TxIn { prevout: funding, prev_address: "bc1alice".into(), witness: vec![] }],
            outputs,
            memo: vec![],
        };
        DepositIdentifier::new(BTC, chain.submit_tx(tx).unwrap(), 0)
    }

    #[test]
    fn utxo_deposit_checks() {
        let (mut ledgers, clients, _) = world();
        let good = btc_deposit(&mut ledgers, 30, encode_target(&EVM.into(), ALICE));
        let missing = btc_deposit(&mut ledgers, 30, None);
        let garbled = btc_deposit(&mut ledgers, 30, Some(vec![9, 1]));
        advance(&mut ledgers, 2);
        let data = clients.verify_deposit(&ledgers, &good).unwrap();
        assert_eq!((data.amount, data.sender.as_str(), data.token_addr.as_str()), (30, "bc1alice", ""));
        assert_eq!(clients.verify_deposit(&ledgers, &missing), Err(ClientError::MissingOpReturn));
        assert!(matches!(
            clients.verify_deposit(&ledgers, &garbled),
            Err(ClientError::MalformedOpReturn(_))
        ));
        let wrong_vout = DepositIdentifier::new(BTC, good.tx_hash, 1);
        assert_eq!(clients.verify_deposit(&ledgers, &wrong_vout), Err(ClientError::WrongAddress));
        ledgers.utxo_mut(&BTC.into()).unwrap().inject_reorg(&good.tx_hash).unwrap();
        assert!(matches!(
            clients.verify_deposit(&ledgers, &good),
            Err(ClientError::NotConfirmed { confirmations: -1, .. })
        ));
    }

    #[test]
    fn burn_deposit_checks() {
        let (mut ledgers, clients, _) = world();
        let zano = ledgers.burn_emit_mut(&ZANO.into()).unwrap();
        zano.mint_genesis("zBTC", "ZxAlice", 100);
        let entry = encode_target(&BTC.into(), "bc1bob").unwrap();
        let h = zano.submit_burn("ZxAlice", "zBTC", 25, vec![entry]).unwrap();
        advance(&mut ledgers, 1);
        let data = clients.verify_deposit(&ledgers, &DepositIdentifier::new(ZANO, h, 0)).unwrap();
        assert_eq!((data.amount, data.token_addr.as_str()), (25, "zBTC"));
        assert_eq!(
            clients.verify_deposit(&ledgers, &DepositIdentifier::new(ZANO, h, 1)),
            Err(ClientError::BadServiceEntry)
        );
    }

    #[test]
    fn target_validation() {
        let (mut ledgers, clients, _) = world();
        let id = btc_deposit(&mut ledgers, 30, encode_target(&EVM.into(), "not-an-address"));
        advance(&mut ledgers, 2);
        assert!(matches!(
            clients.verify_deposit(&ledgers, &id),
            Err(ClientError::InvalidTargetAddress(_))
        ));
        let id = btc_deposit(&mut ledgers, 30, encode_target(&"solana".into(), "x"));
        advance(&mut ledgers, 2);
        assert_eq!(
            clients.verify_deposit(&ledgers, &id),
            Err(ClientError::UnsupportedChain("solana".into()))
        );
        let id = btc_deposit(&mut ledgers, 30, encode_target(&BTC.into(), "bc1bob"));
        advance(&mut ledgers, 2);
        assert_eq!(
            clients.verify_deposit(&ledgers, &id),
            Err(ClientError::InvalidDeposit(InvalidDeposit::SameChain))
        );
    }

    fn op(b: u8, vout: u32) -> OutPoint {
        OutPoint { txid: Hash32([b; 32]), vout }
    }

    fn payout(amount: u64) -> DepositData {
        DepositData {
            source_chain_id: EVM.into(),
            deposit_tx_hash: Hash32::digest(b"d"),
            tx_nonce: 0,
            sender: ALICE.into(),
            token_addr: WBTC.into(),
            amount,
            target_chain_id: BTC.into(),
            target_addr: "bc1bob".into(),
        }
    }

    #[test]
    fn greedy_selection_hand_trace() {
        let (a, b) = (op(0xaa, 0), op(0xbb, 1));
        let tx = build_utxo_withdrawal(&[(b, 30), (a, 30)], "bc1bridge", &payout(50)).unwrap();
        let ins: Vec<_> = tx.inputs.iter().map(|i| i.prevout).collect();
        assert_eq!(ins, vec![a, b]);
        assert_eq!(tx.outputs, vec![TxOut::pay("bc1bob", 50), TxOut::pay("bc1bridge", 10)]);
        assert_eq!(
            build_utxo_withdrawal(&[(b, 30)], "bc1bridge", &payout(50)),
            Err(ClientError::InsufficientFunds { need: 50, available: 30 })
        );
        let exact = build_utxo_withdrawal(&[(a, 30), (b, 30)], "bc1bridge", &payout(30)).unwrap();
        assert_eq!((exact.inputs.len(), exact.outputs.len()), (1, 1));
        assert_eq!(parse_deposit_memo(&exact.memo).unwrap(), payout(30).identifier());
    }

    #[test]
    fn locked_inputs_are_skipped_and_pruned() {
        let (mut ledgers, mut clients, mut tss) = world();
        let btc = ledgers.utxo_mut(&BTC.into()).unwrap();
        btc.fund("bc1bridge", 30);
        btc.fund("bc1bridge", 30);
        let data = payout(20);
        let h0 = ledgers.utxo(&BTC.into()).unwrap().height;
        let (tx, hashes) = clients.get_hash_of_withdrawal(&ledgers, &data, h0).unwrap();
        assert_eq!(hashes.len(), 1);
        let sig = sign(&mut tss, "w", &hashes);
        clients.submit_tx(&mut ledgers, &BTC.into(), &tx, &sig, "v0").unwrap();
        clients.get_mut(&BTC.into()).unwrap().lock_inputs(&tx);
        // A second payout at the same anchor avoids the locked input.
        let (tx2, _) = clients.get_hash_of_withdrawal(&ledgers, &payout(25), h0).unwrap();
        let WithdrawalTx::Utxo(u1) = &tx else { panic!() };
        let WithdrawalTx::Utxo(u2) = &tx2 else { panic!() };
        assert_ne!(u1.inputs[0].prevout, u2.inputs[0].prevout);
        assert!(matches!(
            clients.get_withdrawal_tx(&ledgers, &payout(40), h0),
            Err(ClientError::InsufficientFunds { .. })
        ));
        advance(&mut ledgers, 1);
        let h1 = ledgers.utxo(&BTC.into()).unwrap().height;
        let client = clients.get_mut(&BTC.into()).unwrap();
        client.prune_locked(&ledgers, h0);
        assert_eq!(client.locked_inputs.len(), 1);
        client.prune_locked(&ledgers, h1);
        assert!(client.locked_inputs.is_empty());
        assert_eq!(ledgers.utxo(&BTC.into()).unwrap().balance("bc1bob"), 20);
        assert_eq!(ledgers.utxo(&BTC.into()).unwrap().balance("bc1bridge"), 40);
    }

    #[test]
    fn emit_withdrawal_uses_mapped_asset() {
        let (mut ledgers, clients, mut tss) = world();
        let mut data = payout(25);
        data.target_chain_id = ZANO.into();
        data.target_addr = "ZxBob".into();
        let (tx, hashes) = clients.get_hash_of_withdrawal(&ledgers, &data, 0).unwrap();
        let WithdrawalTx::Emit(emit) = &tx else { panic!() };
        assert_eq!((emit.asset_id.as_str(), emit.amount), ("zBTC", 25));
        assert_eq!(clients.get_hash_of_withdrawal(&ledgers, &data, 0).unwrap().1, hashes);
        assert_eq!(
            clients.submit_tx(&mut ledgers, &ZANO.into(), &tx, &Signature(vec![0; 64]), "v"),
            Err(ClientError::Ledger(LedgerError::BadSignature))
        );
        let sig = sign(&mut tss, "e", &hashes);
        clients.submit_tx(&mut ledgers, &ZANO.into(), &tx, &sig, "v").unwrap();
        assert_eq!(ledgers.burn_emit(&ZANO.into()).unwrap().balance("zBTC", "ZxBob"), 25);
    }

    #[test]
    fn evm_sign_hash_binds_target_token() {
        let (ledgers, clients, _) = world();
        let mut data = payout(5);
        data.source_chain_id = BTC.into();
        data.token_addr = String::new();
        data.target_chain_id = EVM.into();
        data.target_addr = ALICE.into();
        let (tx, hashes) = clients.get_hash_of_withdrawal(&ledgers, &data, 0).unwrap();
        let WithdrawalTx::Evm { kind, fields } = &tx else { panic!() };
        assert_eq!((*kind, fields.token_addr.as_str()), (WithdrawKind::Erc20, WBTC));
        assert_eq!(hashes, vec![crate::model::withdraw_fields_hash(fields)]);
        assert_ne!(hashes, vec![crate::model::withdraw_fields_hash(&data)]);
    }
}
