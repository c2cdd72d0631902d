//! Scenario files: TOML tables describing validators, chains and scripted
//! deposits. See the README for the full grammar.

use std::collections::{BTreeMap, BTreeSet};

use bridgeless_core::clients::AssetRegistry;
use bridgeless_core::model::{ChainId, ChainKind, ParamsError, ProtocolParams, Tick, ValidatorIndex};
use bridgeless_core::validator::{AdversaryFlags, SessionMode, SplitMix64, UnknownFlag};
use serde::Deserialize;
use thiserror::Error;

use crate::world::{default_assets, default_chains, default_receiver, default_sender, ChainSpec, Transfer, WorldConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Flag(#[from] UnknownFlag),
    #[error("validator index {0} out of range")]
    ValidatorIndex(ValidatorIndex),
    #[error("validator {0} listed twice")]
    DuplicateValidator(ValidatorIndex),
    #[error("chain {0} listed twice")]
    DuplicateChain(String),
    #[error("unknown chain {0}")]
    UnknownChain(String),
    #[error("asset {asset} has no token on {chain}")]
    UnknownAsset { asset: String, chain: String },
    #[error("request {0}: {1}")]
    Request(usize, &'static str),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    #[default]
    Protocol,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum KindEntry {
    #[serde(rename = "evm")]
    Evm,
    #[serde(rename = "utxo")]
    Utxo,
    #[serde(rename = "burn-emit")]
    BurnEmit,
}

impl From<KindEntry> for ChainKind {
    fn from(k: KindEntry) -> Self {
        match k {
            KindEntry::Evm => ChainKind::Evm,
            KindEntry::Utxo => ChainKind::Utxo,
            KindEntry::BurnEmit => ChainKind::BurnEmit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Boundaries {
    pub acceptance: Tick,
    pub consensus: Tick,
    pub sign: Tick,
    pub finalize: Tick,
}

impl Default for Boundaries {
    fn default() -> Self {
        Self {
            acceptance: 5,
            consensus: 10,
            sign: 10,
            finalize: 10,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub id: String,
    pub kind: KindEntry,
    pub bridge: Option<String>,
    pub confirmations: Option<u64>,
    pub address_pattern: Option<String>,
    #[serde(default = "yes")]
    pub replay_protection: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub name: String,
    /// Chain id to token address; empty string for the native coin.
    pub tokens: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidatorEntry {
    pub index: ValidatorIndex,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestEntry {
    pub source: String,
    pub asset: String,
    pub amount: u64,
    pub target: String,
    pub target_addr: Option<String>,
    pub sender: Option<String>,
    /// Validators the client submits the identifier to; all when absent.
    pub submit_to: Option<Vec<ValidatorIndex>>,
    #[serde(default)]
    pub at_tick: Tick,
    /// The client submits the EVM withdrawal itself once signed.
    #[serde(default)]
    pub client_withdraw: bool,
    /// The client submits its EVM withdrawal twice.
    #[serde(default)]
    pub double_submit: bool,
    /// No deposit is made; forgeDeposit validators are handed the request.
    #[serde(default)]
    pub forged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseEntry {
    /// Chance per tick and chain of one background transfer, in percent.
    pub rate_percent: u32,
    /// Reorgs of confirmed background UTXO transactions, at random ticks.
    pub reorgs: u32,
}

fn default_max_sessions() -> u64 {
    4
}

fn default_first_tick() -> Tick {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n: usize,
    pub t: Option<usize>,
    pub committee_size: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_max_sessions")]
    pub max_sessions: u64,
    /// Permits n < 3t+1.
    #[serde(default, rename = "unsafe")]
    pub allow_unsafe: bool,
    #[serde(default = "default_first_tick")]
    pub first_session_tick: Tick,
    #[serde(default)]
    pub boundaries: Boundaries,
    #[serde(default)]
    pub chains: Vec<ChainEntry>,
    #[serde(default)]
    pub assets: Vec<AssetEntry>,
    #[serde(default)]
    pub validators: Vec<ValidatorEntry>,
    /// Validators an arbitraryCommittee proposer prefers.
    #[serde(default)]
    pub colluders: Vec<ValidatorIndex>,
    #[serde(default)]
    pub requests: Vec<RequestEntry>,
    #[serde(default)]
    pub noise: NoiseEntry,
}

/// A request with defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedRequest {
    pub transfer: Transfer,
    pub submit_to: Vec<ValidatorIndex>,
    pub at_tick: Tick,
    pub client_withdraw: bool,
    pub double_submit: bool,
    pub forged: bool,
}

/// Expands a 64-bit seed into key material.
pub fn seed_bytes(seed: u64) -> [u8; 32] {
    let mut prg = SplitMix64::new(seed);
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        chunk.copy_from_slice(&prg.next_u64().to_le_bytes());
    }
    out
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn params(&self) -> Result<ProtocolParams, ConfigError> {
        let mut p = match self.t {
            Some(t) => ProtocolParams::with_threshold(self.n, t),
            None => ProtocolParams::new(self.n),
        };
        if let Some(c) = self.committee_size {
            p.committee_size = c;
        }
        p.acceptance_boundary = self.boundaries.acceptance;
        p.consensus_boundary = self.boundaries.consensus;
        p.sign_boundary = self.boundaries.sign;
        p.finalize_boundary = self.boundaries.finalize;
        p.allow_unsafe = self.allow_unsafe;
        p.validate()?;
        Ok(p)
    }

    fn chain_specs(&self) -> Result<Vec<ChainSpec>, ConfigError> {
        if self.chains.is_empty() {
            return Ok(default_chains());
        }
        let mut seen = BTreeSet::new();
        let mut specs = Vec::new();
        for c in &self.chains {
            if !seen.insert(c.id.clone()) {
                return Err(ConfigError::DuplicateChain(c.id.clone()));
            }
            let kind = ChainKind::from(c.kind);
            let default = default_chains().into_iter().find(|d| d.kind == kind).expect("one per kind");
            let mut spec = ChainSpec::new(&c.id, kind, c.bridge.as_deref().unwrap_or(&default.bridge));
            spec.confirmations = c.confirmations;
            spec.address_pattern = c.address_pattern.clone();
            spec.replay_protection = c.replay_protection;
            specs.push(spec);
        }
        Ok(specs)
    }

    fn asset_registry(&self) -> AssetRegistry {
        if self.assets.is_empty() {
            return default_assets();
        }
        let mut reg = AssetRegistry::new();
        for a in &self.assets {
            for (chain, token) in &a.tokens {
                reg.add(&a.name, chain.as_str(), token);
            }
        }
        reg
    }

    /// Validates the scenario and expands it into a world and a script.
    pub fn resolve(&self) -> Result<(WorldConfig, Vec<ScriptedRequest>), ConfigError> {
        let params = self.params()?;
        let n = params.n;
        let mut flags = vec![AdversaryFlags::default(); n];
        let mut seen = BTreeSet::new();
        for v in &self.validators {
            if v.index >= n {
                return Err(ConfigError::ValidatorIndex(v.index));
            }
            if !seen.insert(v.index) {
                return Err(ConfigError::DuplicateValidator(v.index));
            }
            for name in &v.flags {
                flags[v.index].set(name)?;
            }
        }
        if let Some(&bad) = self.colluders.iter().find(|&&c| c >= n) {
            return Err(ConfigError::ValidatorIndex(bad));
        }
        let chains = self.chain_specs()?;
        let assets = self.asset_registry();
        let kind_of = |id: &str| -> Result<ChainKind, ConfigError> {
            chains
                .iter()
                .find(|c| c.id.as_str() == id)
                .map(|c| c.kind)
                .ok_or_else(|| ConfigError::UnknownChain(id.to_owned()))
        };
        let mut script = Vec::new();
        for (i, r) in self.requests.iter().enumerate() {
            let source_kind = kind_of(&r.source)?;
            let target_kind = kind_of(&r.target)?;
            for chain in [&r.source, &r.target] {
                if assets.token_on(&r.asset, &ChainId::new(chain.as_str())).is_none() {
                    return Err(ConfigError::UnknownAsset {
                        asset: r.asset.clone(),
                        chain: chain.clone(),
                    });
                }
            }
            if r.source == r.target {
                return Err(ConfigError::Request(i, "source and target chain coincide"));
            }
            if r.amount == 0 {
                return Err(ConfigError::Request(i, "amount must be positive"));
            }
            if (r.client_withdraw || r.double_submit) && target_kind != ChainKind::Evm {
                return Err(ConfigError::Request(i, "client withdrawals need an evm target"));
            }
            let submit_to = r.submit_to.clone().unwrap_or_else(|| (0..n).collect());
            if let Some(&bad) = submit_to.iter().find(|&&v| v >= n) {
                return Err(ConfigError::ValidatorIndex(bad));
            }
            if submit_to.is_empty() && !r.forged {
                return Err(ConfigError::Request(i, "submit_to is empty"));
            }
            script.push(ScriptedRequest {
                transfer: Transfer {
                    source: r.source.as_str().into(),
                    asset: r.asset.clone(),
                    amount: r.amount,
                    sender: r.sender.clone().unwrap_or_else(|| default_sender(source_kind).to_owned()),
                    target: r.target.as_str().into(),
                    target_addr: r
                        .target_addr
                        .clone()
                        .unwrap_or_else(|| default_receiver(target_kind).to_owned()),
                },
                submit_to,
                at_tick: r.at_tick,
                client_withdraw: r.client_withdraw || r.double_submit,
                double_submit: r.double_submit,
                forged: r.forged,
            });
        }
        let world = WorldConfig {
            params,
            mode: match self.mode {
                Mode::Protocol => SessionMode::Protocol,
                Mode::MonteCarlo => SessionMode::MonteCarlo { seed: self.seed },
            },
            chains,
            assets,
            flags,
            colluders: self.colluders.iter().copied().collect(),
            first_session_tick: self.first_session_tick,
            tss_seed: seed_bytes(self.seed),
            log: false,
        };
        Ok((world, script))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
n = 4

[[requests]]
source = "evm-sim"
asset = "ETH"
amount = 10
target = "zano-sim"
"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let cfg = ScenarioConfig::parse(MINIMAL).unwrap();
        let (world, script) = cfg.resolve().unwrap();
        assert_eq!(world.params.t, 1);
        assert_eq!(world.params.committee_size, 2);
        assert_eq!(world.chains.len(), 3);
        assert_eq!(script[0].submit_to, vec![0, 1, 2, 3]);
        assert_eq!(script[0].transfer.target_addr, "ZxBob");
        assert_eq!(cfg.max_sessions, 4);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad_flag = format!("{MINIMAL}\n[[validators]]\nindex = 1\nflags = [\"sneaky\"]\n");
        assert!(matches!(ScenarioConfig::parse(&bad_flag).unwrap().resolve(), Err(ConfigError::Flag(_))));
        let bad_index = format!("{MINIMAL}\n[[validators]]\nindex = 4\n");
        assert!(matches!(
            ScenarioConfig::parse(&bad_index).unwrap().resolve(),
            Err(ConfigError::ValidatorIndex(4))
        ));
        let too_many = "seed = 1\nn = 4\nt = 2\n";
        assert!(matches!(ScenarioConfig::parse(too_many).unwrap().resolve(), Err(ConfigError::Params(_))));
        let allowed = "seed = 1\nn = 4\nt = 2\nunsafe = true\n";
        assert!(ScenarioConfig::parse(allowed).unwrap().resolve().is_ok());
        assert!(matches!(ScenarioConfig::parse("seed = 1\nn = 4\nbogus = 2\n"), Err(ConfigError::Syntax(_))));
        let wrong_asset = MINIMAL.replace("ETH", "DOGE");
        assert!(matches!(
            ScenarioConfig::parse(&wrong_asset).unwrap().resolve(),
            Err(ConfigError::UnknownAsset { .. })
        ));
        let eth_to_btc = MINIMAL.replace("zano-sim", "btc-sim");
        assert!(ScenarioConfig::parse(&eth_to_btc).unwrap().resolve().is_err());
    }

    #[test]
    fn seed_bytes_are_stable() {
        assert_eq!(seed_bytes(0)[..8], 0xE220_A839_7B1D_CDAFu64.to_le_bytes());
        assert_ne!(seed_bytes(1), seed_bytes(2));
    }
}
