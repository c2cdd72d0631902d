//! Per-validator protocol state machine.
//!
//! Time is split into consecutive sessions of fixed length. Within session
//! `sid`, at offset `o` ticks from its start:
//!
//! | offset | action |
//! |---|---|
//! | 0 | re-verify invalid requests, fix the chain anchor, proposer RB-broadcasts its proposal |
//! | on delivery | validators check the proposal and reply with an acceptance |
//! | acceptance boundary | proposer picks signers and RB-broadcasts `signStart` |
//! | on delivery | every validator marks the request processing |
//! | consensus boundary | signers run the threshold signing session |
//! | until sign boundary | signers relay the signature; receivers mark processed |
//! | sign boundary | processing reverts to pending; processed requests are submitted |
//!
//! All validators share one event loop and act on the same tick.

pub mod messages;
pub mod selection;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::clients::{ChainClients, ClientError, WithdrawalTx};
use crate::ledger::{LedgerError, Ledgers};
use crate::model::{
    ChainId, DepositData, DepositIdentifier, Hash32, ProtocolParams, RequestData, RequestStatus,
    StatusEvent, Tick, ValidatorIndex,
};
use crate::simnet::{Network, RbDelivery, RbInstanceId, RbMessage, ReliableBroadcast};
use crate::tss::{SessionResult, Signature, ThresholdSigner, TssError};

pub use messages::{ProtocolMessage, RbValue};
pub use selection::{select_signers, select_signers_with, SessionMode, SplitMix64, TooFewAcceptors};

/// Byzantine behaviours a validator may exhibit. All false means honest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AdversaryFlags {
    /// Accepts proposals but never approves in signing.
    pub silent_signer: bool,
    /// Never sends acceptances.
    pub never_accept: bool,
    /// Sends nothing at all.
    pub crashed_proposer: bool,
    /// As proposer, fills the committee with colluders first.
    pub arbitrary_committee: bool,
    /// Accepts every proposal, then approves a different message.
    pub accept_then_abort: bool,
    /// Proposes, accepts and signs requests planted by the harness without
    /// verifying any deposit.
    pub forge_deposit: bool,
}

impl AdversaryFlags {
    pub const NAMES: [&'static str; 6] = [
        "silentSigner",
        "neverAccept",
        "crashedProposer",
        "arbitraryCommittee",
        "acceptThenAbort",
        "forgeDeposit",
    ];

    pub fn is_honest(&self) -> bool {
        *self == Self::default()
    }

    pub fn set(&mut self, name: &str) -> Result<(), UnknownFlag> {
        match name {
            "silentSigner" => self.silent_signer = true,
            "neverAccept" => self.never_accept = true,
            "crashedProposer" => self.crashed_proposer = true,
            "arbitraryCommittee" => self.arbitrary_committee = true,
            "acceptThenAbort" => self.accept_then_abort = true,
            "forgeDeposit" => self.forge_deposit = true,
            other => return Err(UnknownFlag(other.to_owned())),
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        let bits = [
            self.silent_signer,
            self.never_accept,
            self.crashed_proposer,
            self.arbitrary_committee,
            self.accept_then_abort,
            self.forge_deposit,
        ];
        Self::NAMES
            .iter()
            .zip(bits)
            .filter_map(|(n, b)| b.then_some(*n))
            .collect()
    }

    fn skips_approval(&self) -> bool {
        self.silent_signer || self.accept_then_abort
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown adversary flag {0:?}")]
pub struct UnknownFlag(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("request not found")]
    NotFound,
}

/// Shared world a validator acts on during one tick.
pub struct Env<'a> {
    pub now: Tick,
    pub ledgers: &'a mut Ledgers,
    pub tss: &'a mut dyn ThresholdSigner,
    pub net: &'a mut Network,
}

/// What consensus agreed on in a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chosen {
    pub deposit_id: DepositIdentifier,
    pub sign_hash: Vec<Hash32>,
    pub signers: Vec<ValidatorIndex>,
}

#[derive(Debug, Clone)]
struct SessionCtx {
    sid: u64,
    start: Tick,
    proposer: ValidatorIndex,
    anchors: BTreeMap<ChainId, u64>,
    proposal: Option<(DepositIdentifier, Vec<Hash32>)>,
    /// Own computation matched the delivered proposal.
    proposal_matches: bool,
    my_proposal: Option<(DepositIdentifier, Vec<Hash32>)>,
    acceptors: BTreeSet<ValidatorIndex>,
    chosen: Option<Chosen>,
    signing_started: bool,
    signing_done: bool,
}

/// A validator's view of the current session, for outcome reporting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionReport {
    pub sid: u64,
    pub proposer: ValidatorIndex,
    pub proposal: Option<DepositIdentifier>,
    pub chosen: Option<Chosen>,
    pub proposed_by_me: Option<DepositIdentifier>,
}

#[derive(Debug, Clone)]
pub struct Validator {
    pub index: ValidatorIndex,
    pub params: ProtocolParams,
    pub mode: SessionMode,
    pub clients: ChainClients,
    pub flags: AdversaryFlags,
    /// Validators an adversary coordinates with.
    pub colluders: BTreeSet<ValidatorIndex>,
    /// Account used when submitting withdrawals.
    pub address: String,
    first_session_tick: Tick,
    requests: BTreeMap<DepositIdentifier, RequestData>,
    arrival: BTreeMap<DepositIdentifier, Tick>,
    forwarded: BTreeSet<DepositIdentifier>,
    withdrawal_txs: BTreeMap<DepositIdentifier, WithdrawalTx>,
    forged: BTreeSet<DepositIdentifier>,
    rb: ReliableBroadcast,
    session: Option<SessionCtx>,
}

fn tss_session_id(sid: u64, id: &DepositIdentifier) -> String {
    format!("sid={sid}/{id}")
}

impl Validator {
    pub fn new(
        index: ValidatorIndex,
        params: ProtocolParams,
        mode: SessionMode,
        clients: ChainClients,
        flags: AdversaryFlags,
        first_session_tick: Tick,
    ) -> Self {
        let rb = ReliableBroadcast::new(index, params.n, params.t);
        Self {
            index,
            mode,
            clients,
            flags,
            colluders: BTreeSet::new(),
            address: format!("validator-{index}"),
            first_session_tick,
            requests: BTreeMap::new(),
            arrival: BTreeMap::new(),
            forwarded: BTreeSet::new(),
            withdrawal_txs: BTreeMap::new(),
            forged: BTreeSet::new(),
            rb,
            session: None,
            params,
        }
    }

    pub fn is_honest(&self) -> bool {
        self.flags.is_honest()
    }

    /// `(sid, offset)` of tick `now`, or `None` before the first session.
    pub fn session_position(&self, now: Tick) -> Option<(u64, Tick)> {
        let rel = now.checked_sub(self.first_session_tick)?;
        let len = self.params.session_length();
        Some((rel / len, rel % len))
    }

    pub fn requests(&self) -> &BTreeMap<DepositIdentifier, RequestData> {
        &self.requests
    }

    pub fn status_of(&self, id: &DepositIdentifier) -> Option<RequestStatus> {
        self.requests.get(id).map(|r| r.status)
    }

    pub fn check_withdrawal(&self, id: &DepositIdentifier) -> Result<&RequestData, QueryError> {
        self.requests.get(id).ok_or(QueryError::NotFound)
    }

    pub fn withdrawal_tx(&self, id: &DepositIdentifier) -> Option<&WithdrawalTx> {
        self.withdrawal_txs.get(id)
    }

    pub fn session_report(&self) -> Option<SessionReport> {
        self.session.as_ref().map(|s| SessionReport {
            sid: s.sid,
            proposer: s.proposer,
            proposal: s.proposal.as_ref().map(|p| p.0.clone()),
            chosen: s.chosen.clone(),
            proposed_by_me: s.my_proposal.as_ref().map(|p| p.0.clone()),
        })
    }

    /// Plants a pending request backed by no deposit (forgeDeposit only).
    pub fn inject_forged(&mut self, data: DepositData, now: Tick) {
        let id = data.identifier();
        let mut req = RequestData::new_invalid(id.clone());
        req.deposit_data = Some(data);
        req.status = RequestStatus::Pending;
        self.requests.insert(id.clone(), req);
        self.arrival.insert(id.clone(), now);
        self.forged.insert(id);
    }

    fn silent(&self) -> bool {
        self.flags.crashed_proposer
    }

    fn send(&self, env: &mut Env<'_>, to: ValidatorIndex, msg: &ProtocolMessage) {
        let label = if env.net.log.is_enabled() { msg.label() } else { String::new() };
        env.net.send(self.index, to, msg.encode(), &label);
    }

    fn send_all(&self, env: &mut Env<'_>, msg: &ProtocolMessage) {
        let label = if env.net.log.is_enabled() { msg.label() } else { String::new() };
        let bytes = msg.encode();
        for to in 0..self.params.n {
            env.net.send(self.index, to, bytes.clone(), &label);
        }
    }

    fn rb_broadcast(&mut self, env: &mut Env<'_>, tag: String, value: &RbValue) {
        let instance = RbInstanceId::new(tag, self.index);
        if let Ok(first) = self.rb.broadcast(instance, value.encode()) {
            self.send_all(env, &ProtocolMessage::Rb(first));
        }
    }

    /// Client-facing entry point; peers forward it too.
    pub fn submit_withdrawal(&mut self, env: &mut Env<'_>, id: &DepositIdentifier) {
        if self.silent() {
            return;
        }
        if let Some(r) = self.requests.get(id) {
            if r.status != RequestStatus::Invalid {
                return;
            }
        }
        if !self.clients.supports(&id.chain_id) {
            return;
        }
        let first_sight = !self.requests.contains_key(id);
        if first_sight {
            self.requests.insert(id.clone(), RequestData::new_invalid(id.clone()));
            self.arrival.insert(id.clone(), env.now);
        }
        self.reverify(env.ledgers, id);
        if first_sight && self.forwarded.insert(id.clone()) {
            let msg = ProtocolMessage::SubmitWithdrawal { deposit_id: id.clone() };
            for to in (0..self.params.n).filter(|&p| p != self.index) {
                self.send(env, to, &msg);
            }
        }
    }

    /// Re-reads an invalid request's deposit; true if it is now pending.
    fn reverify(&mut self, ledgers: &Ledgers, id: &DepositIdentifier) -> bool {
        let Some(req) = self.requests.get_mut(id) else {
            return false;
        };
        if req.status != RequestStatus::Invalid {
            return req.status == RequestStatus::Pending;
        }
        match self.clients.verify_deposit(ledgers, id) {
            Ok(data) => {
                req.deposit_data = Some(data);
                req.apply(StatusEvent::DepositVerified).is_ok()
            }
            Err(_) => false,
        }
    }

    fn anchor_for(&self, ledgers: &Ledgers, chain: &ChainId) -> u64 {
        self.session
            .as_ref()
            .and_then(|s| s.anchors.get(chain).copied())
            .or_else(|| ledgers.get(chain).map(|c| c.height()))
            .unwrap_or(0)
    }

    fn build_withdrawal(
        &self,
        ledgers: &Ledgers,
        data: &DepositData,
    ) -> Result<(WithdrawalTx, Vec<Hash32>), ClientError> {
        let anchor = self.anchor_for(ledgers, &data.target_chain_id);
        self.clients.get_hash_of_withdrawal(ledgers, data, anchor)
    }

    pub fn handle_message(&mut self, env: &mut Env<'_>, from: ValidatorIndex, payload: &[u8]) {
        if self.silent() {
            return;
        }
        let Ok(msg) = ProtocolMessage::decode(payload) else {
            return;
        };
        match msg {
            ProtocolMessage::Rb(m) => self.handle_rb(env, from, m),
            ProtocolMessage::SubmitWithdrawal { deposit_id } => self.submit_withdrawal(env, &deposit_id),
            ProtocolMessage::Acceptance {
                sid,
                deposit_id,
                sign_hash,
            } => self.handle_acceptance(env, from, sid, deposit_id, sign_hash),
            ProtocolMessage::Signature {
                sid,
                deposit_id,
                sign_hash,
                signature,
            } => self.handle_signature(env, sid, deposit_id, sign_hash, signature),
        }
    }

    fn handle_rb(&mut self, env: &mut Env<'_>, from: ValidatorIndex, m: RbMessage) {
        let step = self.rb.handle(from, m);
        for out in step.multicast {
            self.send_all(env, &ProtocolMessage::Rb(out));
        }
        if let Some((instance, delivery)) = step.delivered {
            env.net.log.record(
                env.now,
                "rb-deliver",
                delivery.sender,
                self.index,
                &instance.to_string(),
                delivery.value.len(),
            );
            self.on_rb_deliver(env, &instance, delivery);
        }
    }

    fn current_offset(&self, now: Tick) -> Option<Tick> {
        self.session.as_ref().map(|s| now - s.start)
    }

    fn on_rb_deliver(&mut self, env: &mut Env<'_>, instance: &RbInstanceId, delivery: RbDelivery) {
        let Ok(value) = RbValue::decode(&delivery.value) else {
            return;
        };
        let Some(ctx) = self.session.as_ref() else {
            return;
        };
        let in_consensus = self.current_offset(env.now).is_some_and(|o| o < self.params.consensus_boundary);
        if value.sid() != ctx.sid || delivery.sender != ctx.proposer || !in_consensus {
            return;
        }
        match value {
            RbValue::Proposal {
                sid,
                deposit_id,
                sign_hash,
            } if instance.tag == format!("proposal/sid={sid}") => self.on_proposal(env, deposit_id, sign_hash),
            RbValue::SignStart {
                sid,
                deposit_id,
                sign_hash,
                signers,
            } if instance.tag == format!("signStart/sid={sid}") => {
                self.on_sign_start(deposit_id, sign_hash, signers)
            }
            _ => {}
        }
    }

    fn on_proposal(&mut self, env: &mut Env<'_>, id: DepositIdentifier, sign_hash: Vec<Hash32>) {
        let ctx = self.session.as_ref().expect("checked by caller");
        if ctx.proposal.is_some() {
            return;
        }
        let (sid, proposer) = (ctx.sid, ctx.proposer);
        let matches = self.check_proposal(env, &id, &sign_hash);
        let ctx = self.session.as_mut().expect("checked by caller");
        ctx.proposal = Some((id.clone(), sign_hash.clone()));
        ctx.proposal_matches = matches;
        if proposer == self.index {
            return;
        }
        let accept = if self.flags.never_accept {
            false
        } else if self.flags.accept_then_abort {
            true
        } else {
            matches
        };
        if accept {
            let msg = ProtocolMessage::Acceptance {
                sid,
                deposit_id: id,
                sign_hash,
            };
            self.send(env, proposer, &msg);
        }
    }

    /// Honest acceptance check: the request is invalid or pending here,
    /// verifies, and hashes to the proposed sign hash.
    fn check_proposal(&mut self, env: &mut Env<'_>, id: &DepositIdentifier, sign_hash: &[Hash32]) -> bool {
        if self.flags.forge_deposit && self.forged.contains(id) {
            return self.own_hash_matches(env.ledgers, id, sign_hash);
        }
        if !self.requests.contains_key(id) {
            self.submit_withdrawal(env, id);
        }
        match self.status_of(id) {
            Some(RequestStatus::Invalid | RequestStatus::Pending) => {}
            _ => return false,
        }
        if !self.reverify(env.ledgers, id) {
            return false;
        }
        self.own_hash_matches(env.ledgers, id, sign_hash)
    }

    fn own_hash_matches(&mut self, ledgers: &Ledgers, id: &DepositIdentifier, sign_hash: &[Hash32]) -> bool {
        let Some(data) = self.requests.get(id).and_then(|r| r.deposit_data.clone()) else {
            return false;
        };
        match self.build_withdrawal(ledgers, &data) {
            Ok((tx, hashes)) if hashes == sign_hash => {
                self.withdrawal_txs.insert(id.clone(), tx);
                true
            }
            _ => false,
        }
    }

    fn on_sign_start(&mut self, id: DepositIdentifier, sign_hash: Vec<Hash32>, signers: Vec<ValidatorIndex>) {
        let ctx = self.session.as_ref().expect("checked by caller");
        if ctx.chosen.is_some() || ctx.proposal.as_ref() != Some(&(id.clone(), sign_hash.clone())) {
            return;
        }
        let well_formed = signers.len() == self.params.committee_size
            && signers.contains(&ctx.proposer)
            && signers.windows(2).all(|w| w[0] < w[1])
            && signers.iter().all(|&s| s < self.params.n);
        if !well_formed {
            return;
        }
        let follow = ctx.proposal_matches || !self.is_honest();
        if !follow {
            return;
        }
        if let Some(req) = self.requests.get_mut(&id) {
            if req.apply(StatusEvent::SignStartDelivered).is_ok() {
                req.withdrawal_data.sign_hash = sign_hash.clone();
                req.withdrawal_data.signers = signers.clone();
            }
        }
        let ctx = self.session.as_mut().expect("checked by caller");
        ctx.chosen = Some(Chosen {
            deposit_id: id,
            sign_hash,
            signers,
        });
    }

    fn handle_acceptance(
        &mut self,
        env: &mut Env<'_>,
        from: ValidatorIndex,
        sid: u64,
        id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
    ) {
        let boundary = self.params.acceptance_boundary;
        let Some(offset) = self.current_offset(env.now) else {
            return;
        };
        let Some(ctx) = self.session.as_mut() else {
            return;
        };
        if ctx.sid != sid || offset > boundary || from == self.index {
            return;
        }
        if ctx.my_proposal.as_ref() == Some(&(id, sign_hash)) {
            ctx.acceptors.insert(from);
        }
    }

    fn handle_signature(
        &mut self,
        env: &mut Env<'_>,
        sid: u64,
        id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
        signature: Signature,
    ) {
        let sign_end = self.params.consensus_boundary + self.params.sign_boundary;
        let Some(ctx) = self.session.as_ref() else {
            return;
        };
        if ctx.sid != sid || self.current_offset(env.now).is_some_and(|o| o >= sign_end) {
            return;
        }
        let forged = self.flags.forge_deposit && self.forged.contains(&id);
        if !forged {
            if !self.requests.contains_key(&id) {
                self.submit_withdrawal(env, &id);
            }
            match self.status_of(&id) {
                Some(RequestStatus::Invalid) => {
                    if !self.reverify(env.ledgers, &id) {
                        return;
                    }
                }
                Some(RequestStatus::Pending | RequestStatus::Processing) => {}
                _ => return,
            }
            let stored = self.requests[&id].withdrawal_data.sign_hash.clone();
            let known_tx = self.withdrawal_txs.contains_key(&id);
            let agrees = if !stored.is_empty() && known_tx {
                stored == sign_hash
            } else {
                self.own_hash_matches(env.ledgers, &id, &sign_hash)
            };
            if !agrees {
                return;
            }
        } else if !self.withdrawal_txs.contains_key(&id) && !self.own_hash_matches(env.ledgers, &id, &sign_hash) {
            return;
        }
        // Checked last: relayed copies for processed requests stop above.
        if !env.tss.verify(&sign_hash, &signature) {
            return;
        }
        let Some(req) = self.requests.get_mut(&id) else {
            return;
        };
        if req.apply(StatusEvent::ValidSignatureDelivered).is_ok() {
            req.withdrawal_data.sign_hash = sign_hash;
            req.withdrawal_data.signature = Some(signature);
        }
    }

    /// Timed actions for tick `env.now`, run after message delivery.
    pub fn on_tick(&mut self, env: &mut Env<'_>) {
        if self.silent() {
            return;
        }
        let Some((sid, offset)) = self.session_position(env.now) else {
            return;
        };
        let p = &self.params;
        let (acc, cons, sign) = (p.acceptance_boundary, p.consensus_boundary, p.consensus_boundary + p.sign_boundary);
        if offset == 0 {
            self.begin_session(env, sid);
        }
        if self.session.as_ref().map(|s| s.sid) != Some(sid) {
            return;
        }
        if offset == acc {
            self.close_acceptance(env);
        }
        if offset == cons {
            self.start_signing(env);
        }
        if offset > cons && offset < sign {
            self.poll_signature(env);
        }
        if offset == sign {
            self.revert_and_finalize(env);
        }
    }

    fn begin_session(&mut self, env: &mut Env<'_>, sid: u64) {
        self.rb.prune(|_| true);
        let anchors: BTreeMap<ChainId, u64> = env
            .ledgers
            .iter()
            .map(|c| (c.chain_id().clone(), c.height()))
            .collect();
        for client in self.clients.iter_mut() {
            if let Some(&h) = anchors.get(&client.chain_id) {
                client.prune_locked(env.ledgers, h);
            }
        }
        let invalid: Vec<_> = self
            .requests
            .iter()
            .filter(|(_, r)| r.status == RequestStatus::Invalid)
            .map(|(id, _)| id.clone())
            .collect();
        for id in invalid {
            self.reverify(env.ledgers, &id);
        }
        let proposer = self.mode.proposer_of(sid, self.params.n);
        self.session = Some(SessionCtx {
            sid,
            start: env.now,
            proposer,
            anchors,
            proposal: None,
            proposal_matches: false,
            my_proposal: None,
            acceptors: BTreeSet::new(),
            chosen: None,
            signing_started: false,
            signing_done: false,
        });
        if proposer == self.index {
            self.propose(env, sid);
        }
    }

    /// Pending requests, oldest first by (arrival tick, identifier string).
    fn proposal_candidates(&self) -> Vec<DepositIdentifier> {
        let mut pending: Vec<(bool, Tick, String, DepositIdentifier)> = self
            .requests
            .iter()
            .filter(|(_, r)| r.status == RequestStatus::Pending)
            .map(|(id, _)| {
                let forged_first = !(self.flags.forge_deposit && self.forged.contains(id));
                (forged_first, self.arrival[id], id.to_string(), id.clone())
            })
            .collect();
        pending.sort();
        pending.into_iter().map(|c| c.3).collect()
    }

    fn propose(&mut self, env: &mut Env<'_>, sid: u64) {
        for id in self.proposal_candidates() {
            let data = self.requests[&id].deposit_data.clone().expect("pending has data");
            let Ok((tx, hashes)) = self.build_withdrawal(env.ledgers, &data) else {
                continue;
            };
            self.withdrawal_txs.insert(id.clone(), tx);
            let ctx = self.session.as_mut().expect("session started");
            ctx.my_proposal = Some((id.clone(), hashes.clone()));
            let value = RbValue::Proposal {
                sid,
                deposit_id: id,
                sign_hash: hashes,
            };
            self.rb_broadcast(env, format!("proposal/sid={sid}"), &value);
            return;
        }
    }

    fn close_acceptance(&mut self, env: &mut Env<'_>) {
        let ctx = self.session.as_ref().expect("session started");
        let Some((id, hashes)) = ctx.my_proposal.clone() else {
            return;
        };
        let acceptors: Vec<_> = ctx.acceptors.iter().copied().collect();
        let keep = self.params.committee_size - 1;
        if acceptors.len() < keep {
            return;
        }
        let signers = if self.flags.arbitrary_committee {
            let mut ranked = acceptors.clone();
            ranked.sort_by_key(|a| (!self.colluders.contains(a), *a));
            select_signers_with(&ranked[..keep], self.index, keep, || 0)
        } else {
            select_signers(self.mode.selection_seed(ctx.sid), &acceptors, self.index, keep)
        };
        let Ok(signers) = signers else {
            return;
        };
        let sid = ctx.sid;
        let value = RbValue::SignStart {
            sid,
            deposit_id: id,
            sign_hash: hashes,
            signers,
        };
        self.rb_broadcast(env, format!("signStart/sid={sid}"), &value);
    }

    fn start_signing(&mut self, env: &mut Env<'_>) {
        let ctx = self.session.as_ref().expect("session started");
        let Some(chosen) = ctx.chosen.clone() else {
            return;
        };
        if !chosen.signers.contains(&self.index) {
            return;
        }
        let session_id = tss_session_id(ctx.sid, &chosen.deposit_id);
        let deadline = ctx.start + self.params.consensus_boundary + self.params.sign_boundary - 2;
        let may_start = self.is_honest() || (self.flags.forge_deposit && self.forged.contains(&chosen.deposit_id));
        if may_start {
            match env
                .tss
                .start_signing(&session_id, &chosen.signers, &chosen.sign_hash, deadline)
            {
                Ok(()) | Err(TssError::DuplicateSession(_)) => {}
                Err(_) => return,
            }
        }
        if !self.flags.skips_approval() {
            let _ = env.tss.approve(&session_id, self.index, &chosen.sign_hash, env.now);
        } else if self.flags.accept_then_abort {
            let mangled: Vec<Hash32> = chosen
                .sign_hash
                .iter()
                .map(|h| Hash32::tagged("abort", h.as_bytes()))
                .collect();
            let _ = env.tss.approve(&session_id, self.index, &mangled, env.now);
        }
        self.session.as_mut().expect("session started").signing_started = true;
    }

    fn poll_signature(&mut self, env: &mut Env<'_>) {
        let ctx = self.session.as_ref().expect("session started");
        if !ctx.signing_started || ctx.signing_done || self.flags.skips_approval() {
            return;
        }
        let chosen = ctx.chosen.clone().expect("signing implies chosen");
        let sid = ctx.sid;
        let session_id = tss_session_id(sid, &chosen.deposit_id);
        match env.tss.session_result(&session_id, env.now) {
            Ok(SessionResult::Pending) => {}
            Ok(SessionResult::Signature(signature)) => {
                let msg = ProtocolMessage::Signature {
                    sid,
                    deposit_id: chosen.deposit_id,
                    sign_hash: chosen.sign_hash,
                    signature,
                };
                self.send_all(env, &msg);
                self.session.as_mut().expect("session started").signing_done = true;
            }
            Ok(SessionResult::Error) | Err(_) => {
                self.session.as_mut().expect("session started").signing_done = true;
            }
        }
    }

    fn revert_and_finalize(&mut self, env: &mut Env<'_>) {
        for req in self.requests.values_mut() {
            if req.status == RequestStatus::Processing {
                let _ = req.apply(StatusEvent::SigningFailed);
            }
        }
        let processed: Vec<_> = self
            .requests
            .iter()
            .filter(|(_, r)| r.status == RequestStatus::Processed)
            .map(|(id, _)| id.clone())
            .collect();
        for id in processed {
            self.finalize(env, &id);
        }
    }

    fn finalize(&mut self, env: &mut Env<'_>, id: &DepositIdentifier) {
        let req = &self.requests[id];
        let (Some(data), Some(signature)) = (req.deposit_data.clone(), req.withdrawal_data.signature.clone()) else {
            return;
        };
        let tx = match self.withdrawal_txs.get(id) {
            Some(tx) => tx.clone(),
            None => match self.build_withdrawal(env.ledgers, &data) {
                Ok((tx, _)) => tx,
                Err(_) => return,
            },
        };
        let target = data.target_chain_id.clone();
        let tx_id = match self.clients.submit_tx(env.ledgers, &target, &tx, &signature, &self.address) {
            Ok(h) => Some(h),
            Err(ClientError::Ledger(LedgerError::AlreadyKnown(h))) => Some(h),
            Err(ClientError::Ledger(LedgerError::AlreadyWithdrawn)) => None,
            Err(_) => return,
        };
        if let Some(client) = self.clients.get_mut(&target) {
            client.lock_inputs(&tx);
        }
        let req = self.requests.get_mut(id).expect("present");
        if req.apply(StatusEvent::WithdrawalSubmitted).is_ok() {
            req.withdrawal_data.withdrawal_tx_id = tx_id;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_roundtrip() {
        let mut f = AdversaryFlags::default();
        assert!(f.is_honest());
        for name in AdversaryFlags::NAMES {
            f.set(name).unwrap();
        }
        assert_eq!(f.names(), AdversaryFlags::NAMES.to_vec());
        assert!(!f.is_honest());
        assert_eq!(f.set("bogus"), Err(UnknownFlag("bogus".into())));
    }

    #[test]
    fn session_positions() {
        let params = ProtocolParams::new(4);
        let v = Validator::new(0, params, SessionMode::Protocol, ChainClients::default(), AdversaryFlags::default(), 10);
        assert_eq!(v.session_position(9), None);
        assert_eq!(v.session_position(10), Some((0, 0)));
        assert_eq!(v.session_position(39), Some((0, 29)));
        assert_eq!(v.session_position(40), Some((1, 0)));
    }
}
