//! Building simulated worlds and acting in them as a bridge client.

use std::collections::BTreeSet;

use bridgeless_core::clients::{encode_target, AssetRegistry, ChainClient, ChainClients, ClientError, WithdrawalTx};
use bridgeless_core::ledger::{BurnEmitChain, Chain, EvmChain, LedgerError, Ledgers, TxIn, TxOut, UtxoChain, UtxoTx};
use bridgeless_core::model::{ChainId, ChainKind, DepositIdentifier, Hash32, ProtocolParams, Tick};
use bridgeless_core::sim::{SimError, Simulation};
use bridgeless_core::tss::{OracleTss, Signature, ThresholdSigner};
use bridgeless_core::validator::{AdversaryFlags, SessionMode};
use thiserror::Error;

pub const EVM: &str = "evm-sim";
pub const BTC: &str = "btc-sim";
pub const ZANO: &str = "zano-sim";
pub const WBTC: &str = "0x00000000000000000000000000000000000000b7";
pub const EVM_BRIDGE: &str = "0x00000000000000000000000000000000000b1d6e";
pub const BTC_BRIDGE: &str = "bc1bridge";
pub const ZANO_BRIDGE: &str = "ZxBridge";

/// Value pre-funded to each lock/unlock bridge per asset.
pub const LIQUIDITY: u64 = 1 << 40;
const BTC_LIQUIDITY_UTXOS: u64 = 8;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("invalid address pattern for {0}: {1}")]
    Pattern(ChainId, regex::Error),
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("asset {asset} has no token on {chain}")]
    UnknownAsset { asset: String, chain: ChainId },
    #[error("cannot encode target {0:?}")]
    Target(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSpec {
    pub id: ChainId,
    pub kind: ChainKind,
    pub bridge: String,
    pub confirmations: Option<u64>,
    pub address_pattern: Option<String>,
    pub replay_protection: bool,
}

impl ChainSpec {
    pub fn new(id: &str, kind: ChainKind, bridge: &str) -> Self {
        Self {
            id: id.into(),
            kind,
            bridge: bridge.to_owned(),
            confirmations: None,
            address_pattern: None,
            replay_protection: true,
        }
    }
}

pub fn default_chains() -> Vec<ChainSpec> {
    vec![
        ChainSpec::new(EVM, ChainKind::Evm, EVM_BRIDGE),
        ChainSpec::new(BTC, ChainKind::Utxo, BTC_BRIDGE),
        ChainSpec::new(ZANO, ChainKind::BurnEmit, ZANO_BRIDGE),
    ]
}

/// BTC native on the UTXO chain, wrapped on EVM and Zano; ETH native on
/// EVM, wrapped on Zano.
pub fn default_assets() -> AssetRegistry {
    let mut a = AssetRegistry::new();
    a.add("BTC", BTC, "").add("BTC", EVM, WBTC).add("BTC", ZANO, "zBTC");
    a.add("ETH", EVM, "").add("ETH", ZANO, "zETH");
    a
}

/// Default client account on a chain of the given kind.
pub fn default_sender(kind: ChainKind) -> &'static str {
    match kind {
        ChainKind::Evm => "0x000000000000000000000000000000000000a11c",
        ChainKind::Utxo => "bc1alice",
        ChainKind::BurnEmit => "ZxAlice",
    }
}

pub fn default_receiver(kind: ChainKind) -> &'static str {
    match kind {
        ChainKind::Evm => "0x0000000000000000000000000000000000000b0b",
        ChainKind::Utxo => "bc1bob",
        ChainKind::BurnEmit => "ZxBob",
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub params: ProtocolParams,
    pub mode: SessionMode,
    pub chains: Vec<ChainSpec>,
    pub assets: AssetRegistry,
    pub flags: Vec<AdversaryFlags>,
    pub colluders: BTreeSet<usize>,
    pub first_session_tick: Tick,
    pub tss_seed: [u8; 32],
    pub log: bool,
}

impl WorldConfig {
    pub fn honest(params: ProtocolParams) -> Self {
        let n = params.n;
        Self {
            params,
            mode: SessionMode::Protocol,
            chains: default_chains(),
            assets: default_assets(),
            flags: vec![AdversaryFlags::default(); n],
            colluders: BTreeSet::new(),
            first_session_tick: 5,
            tss_seed: [7; 32],
            log: false,
        }
    }
}

/// Ledgers with funded bridges, per-validator chain clients and the group
/// signer, wired into a simulation.
pub fn build_simulation(cfg: &WorldConfig) -> Result<Simulation, WorldError> {
    let tss = OracleTss::new("bridgeless", cfg.tss_seed, cfg.params.t);
    let gk = tss.group_key().clone();
    let mut ledgers = Ledgers::new();
    let mut clients = ChainClients::new(cfg.assets.clone());
    for spec in &cfg.chains {
        let tokens: Vec<String> = cfg
            .assets
            .iter()
            .filter_map(|(_, m)| m.get(&spec.id).cloned())
            .collect();
        let chain = match spec.kind {
            ChainKind::Evm => {
                let mut evm = EvmChain::new(spec.id.clone(), spec.bridge.clone(), gk.clone());
                evm.replay_protection = spec.replay_protection;
                for token in &tokens {
                    if token.is_empty() {
                        evm.credit_native(&spec.bridge, LIQUIDITY);
                    } else {
                        evm.credit_token(token, &spec.bridge, LIQUIDITY);
                    }
                }
                Chain::Evm(evm)
            }
            ChainKind::Utxo => {
                let mut utxo = UtxoChain::new(spec.id.clone(), spec.bridge.clone(), gk.clone());
                for _ in 0..BTC_LIQUIDITY_UTXOS {
                    utxo.fund(&spec.bridge, LIQUIDITY / BTC_LIQUIDITY_UTXOS);
                }
                Chain::Utxo(utxo)
            }
            ChainKind::BurnEmit => Chain::BurnEmit(BurnEmitChain::new(spec.id.clone(), gk.clone())),
        };
        ledgers.insert(chain);
        let mut client = ChainClient::new(spec.id.clone(), spec.kind, spec.bridge.clone());
        if let Some(c) = spec.confirmations {
            client = client.with_confirmations(c);
        }
        if let Some(p) = &spec.address_pattern {
            client = client
                .with_address_pattern(p)
                .map_err(|e| WorldError::Pattern(spec.id.clone(), e))?;
        }
        clients.insert(client);
    }
    let mut sim = Simulation::new(
        cfg.params.clone(),
        cfg.mode,
        ledgers,
        tss,
        clients,
        cfg.flags.clone(),
        cfg.first_session_tick,
        cfg.log,
    )?;
    for v in &mut sim.validators {
        v.colluders = cfg.colluders.clone();
    }
    Ok(sim)
}

/// A client's bridging intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub source: ChainId,
    pub asset: String,
    pub amount: u64,
    pub sender: String,
    pub target: ChainId,
    pub target_addr: String,
}

fn kind_of(sim: &Simulation, chain: &ChainId) -> Result<ChainKind, WorldError> {
    sim.ledgers
        .get(chain)
        .map(|c| c.kind())
        .ok_or_else(|| WorldError::UnknownChain(chain.clone()))
}

fn token_on(assets: &AssetRegistry, asset: &str, chain: &ChainId) -> Result<String, WorldError> {
    assets
        .token_on(asset, chain)
        .map(str::to_owned)
        .ok_or_else(|| WorldError::UnknownAsset {
            asset: asset.to_owned(),
            chain: chain.clone(),
        })
}

/// Gives the sender exactly `amount` of the asset on the source chain.
pub fn fund_sender(sim: &mut Simulation, assets: &AssetRegistry, t: &Transfer) -> Result<(), WorldError> {
    let token = token_on(assets, &t.asset, &t.source)?;
    match kind_of(sim, &t.source)? {
        ChainKind::Evm => {
            let evm = sim.ledgers.evm_mut(&t.source).expect("kind checked");
            if token.is_empty() {
                evm.credit_native(&t.sender, t.amount);
            } else {
                evm.credit_token(&token, &t.sender, t.amount);
            }
        }
        ChainKind::Utxo => {
            sim.ledgers.utxo_mut(&t.source).expect("kind checked").fund(&t.sender, t.amount);
        }
        ChainKind::BurnEmit => {
            let chain = sim.ledgers.burn_emit_mut(&t.source).expect("kind checked");
            chain.mint_genesis(&token, &t.sender, t.amount);
        }
    }
    Ok(())
}

/// Performs the deposit transaction and returns its identifier.
pub fn deposit(sim: &mut Simulation, assets: &AssetRegistry, t: &Transfer) -> Result<DepositIdentifier, WorldError> {
    let token = token_on(assets, &t.asset, &t.source)?;
    let target = encode_target(&t.target, &t.target_addr).ok_or_else(|| WorldError::Target(t.target_addr.clone()))?;
    let hash = match kind_of(sim, &t.source)? {
        ChainKind::Evm => {
            let evm = sim.ledgers.evm_mut(&t.source).expect("kind checked");
            if token.is_empty() {
                evm.deposit_native(&t.sender, t.amount, &t.target, &t.target_addr)?
            } else {
                evm.deposit_erc20(&t.sender, &token, t.amount, &t.target, &t.target_addr)?
            }
        }
        ChainKind::Utxo => {
            let chain = sim.ledgers.utxo_mut(&t.source).expect("kind checked");
            let bridge = bridge_of(&sim.validators[0].clients, &t.source);
            let chain_ref = &*chain;
            let mut coins = chain_ref.unspent_at(&t.sender, u64::MAX);
            coins.retain(|(op, _)| chain_ref.is_unspent(op));
            let mut inputs = Vec::new();
            let mut total = 0;
            for (op, entry) in coins {
                if total >= t.amount {
                    break;
                }
                total += entry.output.value;
                inputs.push(TxIn {
                    prevout: op,
                    prev_address: t.sender.clone(),
                    witness: vec![],
                });
            }
            let mut outputs = vec![TxOut::pay(bridge, t.amount), TxOut::op_return(target)];
            if total > t.amount {
                outputs.push(TxOut::pay(t.sender.clone(), total - t.amount));
            }
            chain.submit_tx(UtxoTx {
                inputs,
                outputs,
                memo: vec![],
            })?
        }
        ChainKind::BurnEmit => {
            let chain = sim.ledgers.burn_emit_mut(&t.source).expect("kind checked");
            chain.submit_burn(&t.sender, &token, t.amount, vec![target])?
        }
    };
    Ok(DepositIdentifier::new(t.source.clone(), hash, 0))
}

fn bridge_of(clients: &ChainClients, chain: &ChainId) -> String {
    clients.get(chain).map(|c| c.bridge_address.clone()).unwrap_or_default()
}

/// Sum over chains of the asset value held outside the bridge: balances
/// minus bridge holdings on lock/unlock chains, supply on burn/emit chains.
pub fn circulating(sim: &Simulation, assets: &AssetRegistry, asset: &str) -> u128 {
    let Some((_, tokens)) = assets.iter().find(|(name, _)| *name == asset) else {
        return 0;
    };
    let mut total = 0u128;
    for (chain_id, token) in tokens {
        let bridge = bridge_of(&sim.validators[0].clients, chain_id);
        total += match sim.ledgers.get(chain_id) {
            Some(Chain::Evm(evm)) => (evm.total_supply(token) - evm.balance(token, &bridge)) as u128,
            Some(Chain::Utxo(utxo)) => (utxo.total_value() - utxo.balance(&bridge)) as u128,
            Some(Chain::BurnEmit(be)) => be.supply(token) as u128,
            None => 0,
        };
    }
    total
}

/// Submits a signed EVM withdrawal as an ordinary client would.
pub fn client_evm_withdraw(
    sim: &mut Simulation,
    tx: &WithdrawalTx,
    signature: &Signature,
    caller: &str,
) -> Result<Hash32, WorldError> {
    let WithdrawalTx::Evm { kind, fields } = tx else {
        return Err(ClientError::WrongTransactionKind.into());
    };
    let evm = sim
        .ledgers
        .evm_mut(&fields.target_chain_id)
        .ok_or_else(|| WorldError::UnknownChain(fields.target_chain_id.clone()))?;
    Ok(evm.withdraw(caller, *kind, fields, signature)?)
}

/// Background transfers between wallets the bridge never touches.
#[derive(Debug, Clone, Default)]
pub struct Noise {
    /// Confirmable noise transactions on UTXO chains, eligible for reorgs.
    pub utxo_txs: Vec<(ChainId, Hash32)>,
    counter: u64,
}

impl Noise {
    pub fn transfer(&mut self, sim: &mut Simulation, chain: &ChainId) -> Result<(), WorldError> {
        self.counter += 1;
        let k = self.counter;
        match sim.ledgers.get_mut(chain) {
            Some(Chain::Evm(evm)) => {
                let from = format!("0x{:040x}", 0xfeed_0000 + (k % 3));
                let to = format!("0x{:040x}", 0xfeed_0000 + ((k + 1) % 3));
                evm.credit_native(&from, 10);
                evm.transfer(&from, "", &to, 10)?;
            }
            Some(Chain::Utxo(utxo)) => {
                let from = format!("bc1noise{}", k % 3);
                let to = format!("bc1noise{}", (k + 1) % 3);
                let coin = utxo.fund(&from, 10);
                let txid = utxo.submit_tx(UtxoTx {
                    inputs: vec![TxIn {
                        prevout: coin,
                        prev_address: from,
                        witness: vec![],
                    }],
                    outputs: vec![TxOut::pay(to, 10)],
                    memo: vec![],
                })?;
                self.utxo_txs.push((chain.clone(), txid));
            }
            Some(Chain::BurnEmit(be)) => {
                let from = format!("ZxNoise{}", k % 3);
                let to = format!("ZxNoise{}", (k + 1) % 3);
                be.mint_genesis("zNOISE", &from, 10);
                be.transfer(&from, &to, "zNOISE", 10)?;
            }
            None => return Err(WorldError::UnknownChain(chain.clone())),
        }
        Ok(())
    }

    /// Reorgs the `pick`-th confirmed noise transaction, if any.
    pub fn reorg(&mut self, sim: &mut Simulation, pick: usize) -> Option<Hash32> {
        let confirmed: Vec<_> = self
            .utxo_txs
            .iter()
            .filter(|(c, h)| {
                sim.ledgers
                    .utxo(c)
                    .and_then(|u| u.get_transaction(h).ok())
                    .is_some_and(|v| v.confirmations > 0)
            })
            .cloned()
            .collect();
        if confirmed.is_empty() {
            return None;
        }
        let (chain, txid) = &confirmed[pick % confirmed.len()];
        sim.ledgers.utxo_mut(chain)?.inject_reorg(txid).ok()?;
        Some(*txid)
    }
}
