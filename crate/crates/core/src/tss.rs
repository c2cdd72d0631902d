//! Threshold signing behind a trusted-oracle emulation.
//!
//! A single engine holds the group signing key. It releases a signature for
//! a session only once every member of the session's signer set approved the
//! session message before the deadline. Any missing or mismatched approval
//! makes the session resolve to an abort that every signer observes alike,
//! which is the observable behaviour of an all-must-sign threshold ECDSA
//! protocol without identifiable abort.
//!
//! Signatures are Ed25519 under the group key, one 64-byte signature per
//! message hash, concatenated.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use thiserror::Error;

use crate::model::{Hash32, Tick, ValidatorIndex};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// The signature over the `index`-th message hash.
    pub fn part(&self, index: usize) -> Option<&[u8]> {
        self.0.chunks_exact(SIGNATURE_LEN).nth(index)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({} bytes)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupKey {
    pub group_id: String,
    pub public_key: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TssError {
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("signer set is empty")]
    EmptySigners,
    #[error("signer set has {got} members, threshold requires {need}")]
    TooFewSigners { got: usize, need: usize },
    #[error("validator {0} is not a signer of this session")]
    NotASigner(ValidatorIndex),
    #[error("session is closed")]
    SessionClosed,
    #[error("unknown session {0}")]
    UnknownSession(String),
}

/// Outcome of a signing session as seen by any of its signers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionResult {
    Pending,
    Signature(Signature),
    /// The protocol aborted; no signature will be produced.
    Error,
}

#[derive(Debug, Clone)]
pub struct SigningSession {
    pub session_id: String,
    pub signers: BTreeSet<ValidatorIndex>,
    pub message: Vec<Hash32>,
    pub approvals: BTreeMap<ValidatorIndex, Vec<Hash32>>,
    pub deadline_tick: Tick,
    /// Tick at which the last matching approval arrived.
    completed_at: Option<Tick>,
    signature: Option<Signature>,
}

impl SigningSession {
    fn all_matching(&self) -> bool {
        self.signers
            .iter()
            .all(|s| self.approvals.get(s) == Some(&self.message))
    }

    fn result(&self, at_tick: Tick) -> SessionResult {
        match (&self.signature, self.completed_at) {
            (Some(sig), Some(done)) if at_tick > done => SessionResult::Signature(sig.clone()),
            _ if at_tick >= self.deadline_tick && self.signature.is_none() => SessionResult::Error,
            _ => SessionResult::Pending,
        }
    }
}

/// Abstraction over the threshold signing backend.
pub trait ThresholdSigner {
    fn group_key(&self) -> &GroupKey;

    fn start_signing(
        &mut self,
        session_id: &str,
        signers: &[ValidatorIndex],
        message: &[Hash32],
        deadline_tick: Tick,
    ) -> Result<(), TssError>;

    fn approve(
        &mut self,
        session_id: &str,
        validator: ValidatorIndex,
        message: &[Hash32],
        now: Tick,
    ) -> Result<(), TssError>;

    fn session_result(&self, session_id: &str, at_tick: Tick) -> Result<SessionResult, TssError>;

    /// Same answer as [`verify`] under this signer's group key.
    fn verify(&mut self, message: &[Hash32], signature: &Signature) -> bool {
        verify(self.group_key(), message, signature)
    }
}

pub struct OracleTss {
    key: GroupKey,
    signing_key: SigningKey,
    min_signers: usize,
    sessions: BTreeMap<String, SigningSession>,
    /// Pairs already found valid; relayed copies skip the curve arithmetic.
    verified: HashSet<(Vec<Hash32>, Signature)>,
}

impl fmt::Debug for OracleTss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleTss")
            .field("key", &self.key)
            .field("min_signers", &self.min_signers)
            .field("sessions", &self.sessions.len())
            .finish()
    }
}

impl OracleTss {
    /// Mints a fresh group key from `seed`. Sessions need at least
    /// `threshold + 1` signers.
    pub fn new(group_id: impl Into<String>, seed: [u8; 32], threshold: usize) -> Self {
        let signing_key = SigningKey::from_bytes(&seed);
        let key = GroupKey {
            group_id: group_id.into(),
            public_key: signing_key.verifying_key().to_bytes(),
        };
        Self {
            key,
            signing_key,
            min_signers: threshold + 1,
            sessions: BTreeMap::new(),
            verified: HashSet::new(),
        }
    }

    pub fn session(&self, session_id: &str) -> Option<&SigningSession> {
        self.sessions.get(session_id)
    }
}

fn sign_with(key: &SigningKey, message: &[Hash32]) -> Signature {
    let mut out = Vec::with_capacity(message.len() * SIGNATURE_LEN);
    for h in message {
        out.extend_from_slice(&key.sign(h.as_bytes()).to_bytes());
    }
    Signature(out)
}

impl ThresholdSigner for OracleTss {
    fn group_key(&self) -> &GroupKey {
        &self.key
    }

    fn verify(&mut self, message: &[Hash32], signature: &Signature) -> bool {
        let key = (message.to_vec(), signature.clone());
        if self.verified.contains(&key) {
            return true;
        }
        let ok = verify(&self.key, message, signature);
        if ok {
            self.verified.insert(key);
        }
        ok
    }

    fn start_signing(
        &mut self,
        session_id: &str,
        signers: &[ValidatorIndex],
        message: &[Hash32],
        deadline_tick: Tick,
    ) -> Result<(), TssError> {
        if self.sessions.contains_key(session_id) {
            return Err(TssError::DuplicateSession(session_id.to_owned()));
        }
        let signers: BTreeSet<_> = signers.iter().copied().collect();
        if signers.is_empty() {
            return Err(TssError::EmptySigners);
        }
        if signers.len() < self.min_signers {
            return Err(TssError::TooFewSigners {
                got: signers.len(),
                need: self.min_signers,
            });
        }
        self.sessions.insert(
            session_id.to_owned(),
            SigningSession {
                session_id: session_id.to_owned(),
                signers,
                message: message.to_vec(),
                approvals: BTreeMap::new(),
                deadline_tick,
                completed_at: None,
                signature: None,
            },
        );
        Ok(())
    }

    fn approve(
        &mut self,
        session_id: &str,
        validator: ValidatorIndex,
        message: &[Hash32],
        now: Tick,
    ) -> Result<(), TssError> {
        let session = self
            .sessions
            .get_mut(session_id)
            .ok_or_else(|| TssError::UnknownSession(session_id.to_owned()))?;
        if !session.signers.contains(&validator) {
            return Err(TssError::NotASigner(validator));
        }
        if session.signature.is_some() || now >= session.deadline_tick {
            return Err(TssError::SessionClosed);
        }
        session.approvals.insert(validator, message.to_vec());
        if session.all_matching() {
            session.signature = Some(sign_with(&self.signing_key, &session.message));
            session.completed_at = Some(now);
        }
        Ok(())
    }

    fn session_result(&self, session_id: &str, at_tick: Tick) -> Result<SessionResult, TssError> {
        self.sessions
            .get(session_id)
            .map(|s| s.result(at_tick))
            .ok_or_else(|| TssError::UnknownSession(session_id.to_owned()))
    }
}

/// True iff `signature` is a group signature over every hash in `message`.
pub fn verify(group_key: &GroupKey, message: &[Hash32], signature: &Signature) -> bool {
    if message.is_empty() || signature.0.len() != message.len() * SIGNATURE_LEN {
        return false;
    }
    let Ok(vk) = VerifyingKey::from_bytes(&group_key.public_key) else {
        return false;
    };
    message.iter().zip(signature.0.chunks_exact(SIGNATURE_LEN)).all(|(h, part)| {
        let sig = ed25519_dalek::Signature::from_bytes(part.try_into().expect("64 bytes"));
        vk.verify_strict(h.as_bytes(), &sig).is_ok()
    })
}
