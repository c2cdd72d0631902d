//! In-process simulated ledgers: an account/event chain with bridge
//! contracts, a UTXO chain, and a burn/emit asset chain.
//!
//! Each chain produces one block per call to `advance_block`. Reads never
//! mutate state.

pub mod burn_emit;
pub mod evm;
pub mod utxo;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{ChainId, ChainKind, Hash32};

pub use burn_emit::BurnEmitChain;
pub use evm::EvmChain;
pub use utxo::{OutPoint, TxIn, TxOut, UtxoChain, UtxoTx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction not found")]
    NotFound,
    #[error("insufficient balance")]
    InsufficientBalance,
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("signature does not verify")]
    BadSignature,
    #[error("token or receiver address is empty")]
    EmptyAddress,
    #[error("withdrawal already executed")]
    AlreadyWithdrawn,
    #[error("withdrawal targets chain {0}")]
    WrongTargetChain(ChainId),
    #[error("input {0} already spent")]
    DoubleSpend(String),
    #[error("input {0} carries an invalid witness")]
    BadWitness(usize),
    #[error("malformed transaction: {0}")]
    MalformedTx(&'static str),
    #[error("unknown transaction")]
    UnknownTx,
    #[error("transaction is not confirmed")]
    NotConfirmed,
    #[error("transaction {0} already known")]
    AlreadyKnown(Hash32),
}

impl LedgerError {
    /// Errors a validator can treat as "someone already submitted this".
    pub fn is_duplicate_submission(&self) -> bool {
        matches!(self, LedgerError::AlreadyWithdrawn | LedgerError::AlreadyKnown(_))
    }
}

#[derive(Debug, Clone)]
pub enum Chain {
    Evm(EvmChain),
    Utxo(UtxoChain),
    BurnEmit(BurnEmitChain),
}

impl Chain {
    pub fn kind(&self) -> ChainKind {
        match self {
            Chain::Evm(_) => ChainKind::Evm,
            Chain::Utxo(_) => ChainKind::Utxo,
            Chain::BurnEmit(_) => ChainKind::BurnEmit,
        }
    }

    pub fn chain_id(&self) -> &ChainId {
        match self {
            Chain::Evm(c) => &c.chain_id,
            Chain::Utxo(c) => &c.chain_id,
            Chain::BurnEmit(c) => &c.chain_id,
        }
    }

    pub fn height(&self) -> u64 {
        match self {
            Chain::Evm(c) => c.height,
            Chain::Utxo(c) => c.height,
            Chain::BurnEmit(c) => c.height,
        }
    }

    pub fn advance_block(&mut self) -> u64 {
        match self {
            Chain::Evm(c) => c.advance_block(),
            Chain::Utxo(c) => c.advance_block(),
            Chain::BurnEmit(c) => c.advance_block(),
        }
    }
}

/// Every ledger of one simulation, keyed by chain id.
#[derive(Debug, Clone, Default)]
pub struct Ledgers {
    chains: BTreeMap<ChainId, Chain>,
}

impl Ledgers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, chain: Chain) {
        self.chains.insert(chain.chain_id().clone(), chain);
    }

    pub fn get(&self, id: &ChainId) -> Option<&Chain> {
        self.chains.get(id)
    }

    pub fn get_mut(&mut self, id: &ChainId) -> Option<&mut Chain> {
        self.chains.get_mut(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Chain> {
        self.chains.values()
    }

    pub fn evm(&self, id: &ChainId) -> Option<&EvmChain> {
        match self.chains.get(id)? {
            Chain::Evm(c) => Some(c),
            _ => None,
        }
    }

    pub fn evm_mut(&mut self, id: &ChainId) -> Option<&mut EvmChain> {
        match self.chains.get_mut(id)? {
            Chain::Evm(c) => Some(c),
            _ => None,
        }
    }

    pub fn utxo(&self, id: &ChainId) -> Option<&UtxoChain> {
        match self.chains.get(id)? {
            Chain::Utxo(c) => Some(c),
            _ => None,
        }
    }

    pub fn utxo_mut(&mut self, id: &ChainId) -> Option<&mut UtxoChain> {
        match self.chains.get_mut(id)? {
            Chain::Utxo(c) => Some(c),
            _ => None,
        }
    }

    pub fn burn_emit(&self, id: &ChainId) -> Option<&BurnEmitChain> {
        match self.chains.get(id)? {
            Chain::BurnEmit(c) => Some(c),
            _ => None,
        }
    }

    pub fn burn_emit_mut(&mut self, id: &ChainId) -> Option<&mut BurnEmitChain> {
        match self.chains.get_mut(id)? {
            Chain::BurnEmit(c) => Some(c),
            _ => None,
        }
    }

    /// One block on every chain.
    pub fn advance_all(&mut self) {
        for chain in self.chains.values_mut() {
            chain.advance_block();
        }
    }
}

/// Confirmation depth of a transaction included at `inclusion` when the
/// chain is at `height`; 0 while pending.
pub(crate) fn confirmations(height: u64, inclusion: Option<u64>) -> i64 {
    match inclusion {
        Some(h) => (height - h + 1) as i64,
        None => 0,
    }
}
