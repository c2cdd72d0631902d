//! Shared domain types: deposit identifiers, request records, the request
//! status state machine and the canonical signing hash.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::Writer;
use crate::ledger::utxo::UtxoTx;
use crate::tss::Signature;

pub type ValidatorIndex = usize;
pub type Tick = u64;

/// A 256-bit digest. All hashing in the crate is SHA-256.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn digest(data: &[u8]) -> Self {
        Hash32(Sha256::digest(data).into())
    }

    /// Hash of `tag ‖ data`; tags keep hashes of different object kinds apart.
    pub fn tagged(tag: &str, data: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update((tag.len() as u32).to_be_bytes());
        h.update(tag.as_bytes());
        h.update(data);
        Hash32(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}…", &self.to_hex()[..12])
    }
}

impl FromStr for Hash32 {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseIdError::BadHash)?;
        Ok(Hash32(out))
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ChainId(pub String);

impl ChainId {
    pub fn new(s: impl Into<String>) -> Self {
        ChainId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for ChainId {
    fn from(s: &str) -> Self {
        ChainId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChainKind {
    Evm,
    Utxo,
    BurnEmit,
}

impl ChainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainKind::Evm => "evm",
            ChainKind::Utxo => "utxo",
            ChainKind::BurnEmit => "burn-emit",
        }
    }
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseIdError {
    #[error("expected chainID:txHash:txNonce")]
    Shape,
    #[error("empty chain id")]
    EmptyChain,
    #[error("tx hash must be 64 hex characters")]
    BadHash,
    #[error("tx nonce must be a non-negative integer")]
    BadNonce,
}

/// Names a deposit on its source chain. The unique key of a request.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DepositIdentifier {
    pub tx_hash: Hash32,
    pub tx_nonce: u64,
    pub chain_id: ChainId,
}

impl DepositIdentifier {
    pub fn new(chain_id: impl Into<ChainId>, tx_hash: Hash32, tx_nonce: u64) -> Self {
        Self {
            tx_hash,
            tx_nonce,
            chain_id: chain_id.into(),
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        w.str(self.chain_id.as_str()).hash(&self.tx_hash).u64(self.tx_nonce);
    }

    pub fn decode(r: &mut crate::codec::Reader<'_>) -> Result<Self, crate::codec::DecodeError> {
        let chain = r.str()?;
        let tx_hash = r.hash()?;
        let tx_nonce = r.u64()?;
        Ok(Self::new(ChainId::new(chain), tx_hash, tx_nonce))
    }
}

impl From<String> for ChainId {
    fn from(s: String) -> Self {
        ChainId(s)
    }
}

/// `chainID:txHash-hex:txNonce`
impl fmt::Display for DepositIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.chain_id, self.tx_hash, self.tx_nonce)
    }
}

impl FromStr for DepositIdentifier {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Chain ids may themselves contain ':', so split from the right.
        let mut parts = s.rsplitn(3, ':');
        let nonce = parts.next().ok_or(ParseIdError::Shape)?;
        let hash = parts.next().ok_or(ParseIdError::Shape)?;
        let chain = parts.next().ok_or(ParseIdError::Shape)?;
        if chain.is_empty() {
            return Err(ParseIdError::EmptyChain);
        }
        if hash.len() != 64 {
            return Err(ParseIdError::BadHash);
        }
        if nonce.is_empty() || !nonce.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseIdError::BadNonce);
        }
        let tx_nonce = nonce.parse().map_err(|_| ParseIdError::BadNonce)?;
        Ok(Self::new(chain, hash.parse()?, tx_nonce))
    }
}

/// Facts a chain client extracted from a verified deposit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DepositData {
    pub source_chain_id: ChainId,
    pub deposit_tx_hash: Hash32,
    pub tx_nonce: u64,
    pub sender: String,
    /// Source-chain token; empty for the native asset.
    pub token_addr: String,
    pub amount: u64,
    pub target_chain_id: ChainId,
    pub target_addr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidDeposit {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("target chain equals source chain")]
    SameChain,
}

impl DepositData {
    pub fn identifier(&self) -> DepositIdentifier {
        DepositIdentifier::new(self.source_chain_id.clone(), self.deposit_tx_hash, self.tx_nonce)
    }

    pub fn validate(&self) -> Result<(), InvalidDeposit> {
        if self.amount == 0 {
            return Err(InvalidDeposit::ZeroAmount);
        }
        if self.target_chain_id == self.source_chain_id {
            return Err(InvalidDeposit::SameChain);
        }
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.str(self.source_chain_id.as_str())
            .hash(&self.deposit_tx_hash)
            .u64(self.tx_nonce)
            .str(&self.sender)
            .str(&self.token_addr)
            .u64(self.amount)
            .str(self.target_chain_id.as_str())
            .str(&self.target_addr);
    }

    pub fn decode(r: &mut crate::codec::Reader<'_>) -> Result<Self, crate::codec::DecodeError> {
        Ok(Self {
            source_chain_id: ChainId::new(r.str()?),
            deposit_tx_hash: r.hash()?,
            tx_nonce: r.u64()?,
            sender: r.str()?.to_owned(),
            token_addr: r.str()?.to_owned(),
            amount: r.u64()?,
            target_chain_id: ChainId::new(r.str()?),
            target_addr: r.str()?.to_owned(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WithdrawalData {
    pub sign_hash: Vec<Hash32>,
    pub signers: Vec<ValidatorIndex>,
    pub signature: Option<Signature>,
    pub withdrawal_tx_id: Option<Hash32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RequestStatus {
    Invalid,
    Pending,
    Processing,
    Processed,
    Finalized,
}

impl RequestStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestStatus::Invalid => "invalid",
            RequestStatus::Pending => "pending",
            RequestStatus::Processing => "processing",
            RequestStatus::Processed => "processed",
            RequestStatus::Finalized => "finalized",
        }
    }
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusEvent {
    DepositVerified,
    SignStartDelivered,
    ValidSignatureDelivered,
    SigningFailed,
    WithdrawalSubmitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition from {from} on {event:?}")]
pub struct IllegalTransition {
    pub from: RequestStatus,
    pub event: StatusEvent,
}

/// The request status state machine. Any pair not listed is illegal.
pub fn status_transition(
    current: RequestStatus,
    event: StatusEvent,
) -> Result<RequestStatus, IllegalTransition> {
    use RequestStatus::*;
    use StatusEvent::*;
    match (current, event) {
        (Invalid, DepositVerified) => Ok(Pending),
        (Pending, SignStartDelivered) => Ok(Processing),
        // A valid signature may arrive at a validator that never delivered
        // signStart, or never managed to verify the deposit in time.
        (Invalid | Pending | Processing, ValidSignatureDelivered) => Ok(Processed),
        (Processing, SigningFailed) => Ok(Pending),
        (Processed, WithdrawalSubmitted) => Ok(Finalized),
        (from, event) => Err(IllegalTransition { from, event }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestData {
    pub deposit_id: DepositIdentifier,
    pub deposit_data: Option<DepositData>,
    pub withdrawal_data: WithdrawalData,
    pub status: RequestStatus,
}

impl RequestData {
    pub fn new_invalid(deposit_id: DepositIdentifier) -> Self {
        Self {
            deposit_id,
            deposit_data: None,
            withdrawal_data: WithdrawalData::default(),
            status: RequestStatus::Invalid,
        }
    }

    /// Applies `event`; on error the request is left untouched.
    pub fn apply(&mut self, event: StatusEvent) -> Result<RequestStatus, IllegalTransition> {
        let next = status_transition(self.status, event)?;
        self.status = next;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("need n >= 3t+1 (n={n}, t={t})")]
    TooManyFaults { n: usize, t: usize },
    #[error("acceptance boundary must be shorter than the consensus boundary")]
    Boundaries,
    #[error("committee size must be in 1..=n")]
    CommitteeSize,
    #[error("required confirmations must be positive")]
    Confirmations,
}

/// Protocol constants shared by every validator of a bridge instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolParams {
    pub n: usize,
    pub t: usize,
    /// Signing committee size, proposer included. Defaults to `t + 1`.
    pub committee_size: usize,
    pub acceptance_boundary: Tick,
    pub consensus_boundary: Tick,
    pub sign_boundary: Tick,
    pub finalize_boundary: Tick,
    pub required_confirmations: BTreeMap<ChainId, u64>,
    /// Permits `n < 3t+1` for demonstrating what breaks beyond the bound.
    pub allow_unsafe: bool,
}

impl ProtocolParams {
    /// The largest `t` with `n >= 3t+1` (`floor(n/3)` unless 3 divides
    /// `n`), with the default phase lengths (5/10/10/10 ticks).
    pub fn new(n: usize) -> Self {
        Self::with_threshold(n, n.saturating_sub(1) / 3)
    }

    pub fn with_threshold(n: usize, t: usize) -> Self {
        Self {
            n,
            t,
            committee_size: t + 1,
            acceptance_boundary: 5,
            consensus_boundary: 10,
            sign_boundary: 10,
            finalize_boundary: 10,
            required_confirmations: BTreeMap::new(),
            allow_unsafe: false,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !self.allow_unsafe && self.n < 3 * self.t + 1 {
            return Err(ParamsError::TooManyFaults { n: self.n, t: self.t });
        }
        if self.acceptance_boundary >= self.consensus_boundary {
            return Err(ParamsError::Boundaries);
        }
        if self.committee_size == 0 || self.committee_size > self.n {
            return Err(ParamsError::CommitteeSize);
        }
        if self.required_confirmations.values().any(|&c| c == 0) {
            return Err(ParamsError::Confirmations);
        }
        Ok(())
    }

    pub fn session_length(&self) -> Tick {
        self.consensus_boundary + self.sign_boundary + self.finalize_boundary
    }

    /// Acceptances the proposer needs besides itself.
    pub fn acceptance_quorum(&self) -> usize {
        self.committee_size - 1
    }
}

/// What the signing committee signs over, depending on the target chain.
#[derive(Debug, Clone, Copy)]
pub enum WithdrawalPreimage<'a> {
    /// The withdraw contract recomputes the hash from the request fields.
    Evm,
    /// Serialized emit transaction.
    Emit(&'a [u8]),
    /// Unsigned withdrawal transaction; one hash per input.
    Utxo(&'a UtxoTx),
}

const SIGN_HASH_TAG: &str = "bridgeless/withdraw-fields/v1";

/// Hash of the withdrawal fields with every field length-prefixed, as the
/// EVM withdraw contract recomputes it.
pub fn withdraw_fields_hash(data: &DepositData) -> Hash32 {
    let mut w = Writer::new();
    w.str(data.source_chain_id.as_str())
        .hash(&data.deposit_tx_hash)
        .u64(data.tx_nonce)
        .str(data.target_chain_id.as_str())
        .str(&data.token_addr)
        .u64(data.amount)
        .str(&data.target_addr);
    Hash32::tagged(SIGN_HASH_TAG, w.as_slice())
}

/// The hash(es) a committee signs for `data`. `data.token_addr` must
/// already name the target-chain token.
pub fn canonical_sign_hash(data: &DepositData, preimage: WithdrawalPreimage<'_>) -> Vec<Hash32> {
    match preimage {
        WithdrawalPreimage::Evm => vec![withdraw_fields_hash(data)],
        WithdrawalPreimage::Emit(bytes) => vec![Hash32::tagged(crate::ledger::burn_emit::EMIT_TAG, bytes)],
        WithdrawalPreimage::Utxo(tx) => (0..tx.inputs.len())
            .map(|i| tx.sighash(i).expect("index in range"))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> DepositData {
        DepositData {
            source_chain_id: "evm-sim".into(),
            deposit_tx_hash: Hash32::digest(b"tx"),
            tx_nonce: 0,
            sender: "0xaa".into(),
            token_addr: "0xbb".into(),
            amount: 40,
            target_chain_id: "btc-sim".into(),
            target_addr: "bc1target".into(),
        }
    }

    #[test]
    fn transition_table_examples() {
        use RequestStatus::*;
        use StatusEvent::*;
        assert_eq!(status_transition(Invalid, DepositVerified), Ok(Pending));
        assert_eq!(status_transition(Processing, SigningFailed), Ok(Pending));
        assert_eq!(status_transition(Pending, ValidSignatureDelivered), Ok(Processed));
        assert!(status_transition(Finalized, DepositVerified).is_err());
    }

    #[test]
    fn transition_relation_is_exact() {
        use RequestStatus::*;
        use StatusEvent::*;
        let allowed = [
            (Invalid, DepositVerified, Pending),
            (Pending, SignStartDelivered, Processing),
            (Invalid, ValidSignatureDelivered, Processed),
            (Pending, ValidSignatureDelivered, Processed),
            (Processing, ValidSignatureDelivered, Processed),
            (Processing, SigningFailed, Pending),
            (Processed, WithdrawalSubmitted, Finalized),
        ];
        let statuses = [Invalid, Pending, Processing, Processed, Finalized];
        let events = [
            DepositVerified,
            SignStartDelivered,
            ValidSignatureDelivered,
            SigningFailed,
            WithdrawalSubmitted,
        ];
        for s in statuses {
            for e in events {
                let expected = allowed.iter().find(|(a, b, _)| *a == s && *b == e).map(|x| x.2);
                assert_eq!(status_transition(s, e).ok(), expected, "{s} {e:?}");
            }
        }
    }

    #[test]
    fn failed_apply_leaves_request_unchanged() {
        let mut req = RequestData::new_invalid(sample().identifier());
        assert!(req.apply(StatusEvent::WithdrawalSubmitted).is_err());
        assert_eq!(req.status, RequestStatus::Invalid);
    }

    #[test]
    fn deposit_identifier_roundtrip_and_errors() {
        let id = DepositIdentifier::new("evm-sim", Hash32::digest(b"x"), 3);
        let s = id.to_string();
        assert!(s.starts_with("evm-sim:"));
        assert!(s.ends_with(":3"));
        assert_eq!(s.parse::<DepositIdentifier>(), Ok(id));
        let colon = DepositIdentifier::new("eip155:1", Hash32::ZERO, 0);
        assert_eq!(colon.to_string().parse::<DepositIdentifier>(), Ok(colon));

        assert_eq!("abc".parse::<DepositIdentifier>(), Err(ParseIdError::Shape));
        assert_eq!(
            format!(":{}:1", Hash32::ZERO).parse::<DepositIdentifier>(),
            Err(ParseIdError::EmptyChain)
        );
        assert_eq!("c:abcd:1".parse::<DepositIdentifier>(), Err(ParseIdError::BadHash));
        assert_eq!(
            format!("c:{}:-1", Hash32::ZERO).parse::<DepositIdentifier>(),
            Err(ParseIdError::BadNonce)
        );
    }

    #[test]
    fn sign_hash_is_deterministic_and_single_for_evm() {
        let d = sample();
        let a = canonical_sign_hash(&d, WithdrawalPreimage::Evm);
        assert_eq!(a, canonical_sign_hash(&d, WithdrawalPreimage::Evm));
        assert_eq!(a.len(), 1);
        let mut other = d.clone();
        other.amount += 1;
        assert_ne!(a, canonical_sign_hash(&other, WithdrawalPreimage::Evm));
    }

    #[test]
    fn length_prefix_prevents_field_shifting() {
        let mut a = sample();
        a.token_addr = "0xb".into();
        a.target_addr = "bc1".into();
        let mut b = a.clone();
        // Same concatenated bytes without prefixes.
        b.token_addr = "0x".into();
        b.target_addr = "bbc1".into();
        assert_ne!(withdraw_fields_hash(&a), withdraw_fields_hash(&b));
    }

    #[test]
    fn params_defaults() {
        let p = ProtocolParams::new(10);
        assert_eq!((p.t, p.committee_size, p.session_length()), (3, 4, 30));
        p.validate().unwrap();
        let mut bad = ProtocolParams::with_threshold(4, 2);
        assert!(bad.validate().is_err());
        bad.allow_unsafe = true;
        bad.validate().unwrap();
    }

    fn arb_deposit() -> impl Strategy<Value = DepositData> {
        (
            "[a-z]{1,6}",
            any::<[u8; 32]>(),
            any::<u64>(),
            "[a-z0-9]{0,6}",
            1u64..,
            "[a-z]{1,6}",
            "[a-z0-9]{0,8}",
        )
            .prop_map(|(src, h, nonce, token, amount, dst, addr)| DepositData {
                source_chain_id: ChainId(src),
                deposit_tx_hash: Hash32(h),
                tx_nonce: nonce,
                sender: String::new(),
                token_addr: token,
                amount,
                target_chain_id: ChainId(dst),
                target_addr: addr,
            })
    }

    proptest! {
        #[test]
        fn sign_hash_injective_on_serialized_fields(a in arb_deposit(), b in arb_deposit()) {
            let key = |d: &DepositData| (
                d.source_chain_id.clone(), d.deposit_tx_hash, d.tx_nonce,
                d.target_chain_id.clone(), d.token_addr.clone(), d.amount, d.target_addr.clone(),
            );
            let same = key(&a) == key(&b);
            prop_assert_eq!(same, withdraw_fields_hash(&a) == withdraw_fields_hash(&b));
        }

        #[test]
        fn single_field_perturbation_changes_hash(d in arb_deposit(), which in 0usize..7, bump in 1u64..1000) {
            let mut e = d.clone();
            match which {
                0 => e.source_chain_id.0.push('x'),
                1 => e.deposit_tx_hash.0[0] ^= 1,
                2 => e.tx_nonce = e.tx_nonce.wrapping_add(bump),
                3 => e.target_chain_id.0.push('x'),
                4 => e.token_addr.push('x'),
                5 => e.amount = e.amount.wrapping_add(bump).max(1),
                _ => e.target_addr.push('x'),
            }
            prop_assume!(e != d);
            prop_assert_ne!(withdraw_fields_hash(&d), withdraw_fields_hash(&e));
        }

        #[test]
        fn equal_identifiers_hash_equally(h in any::<[u8; 32]>(), n in any::<u64>(), c in "[a-z:]{1,8}") {
            use std::collections::hash_map::DefaultHasher;
            use std::hash::{Hash, Hasher};
            let a = DepositIdentifier::new(c.as_str(), Hash32(h), n);
            let b: DepositIdentifier = a.to_string().parse().unwrap();
            let hash = |x: &DepositIdentifier| { let mut s = DefaultHasher::new(); x.hash(&mut s); s.finish() };
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(hash(&a), hash(&b));
        }
    }
}
