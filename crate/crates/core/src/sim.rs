//! Single-threaded driver owning the ledgers, the network, the signer and
//! every validator.
//!
//! Each tick runs: clock advance, one block on every chain, message
//! delivery in `(from, to, seq)` order, then each validator's timed actions
//! in index order. Harness actions happen between ticks.

use thiserror::Error;

use crate::ledger::Ledgers;
use crate::model::{DepositData, DepositIdentifier, ParamsError, ProtocolParams, RequestData, RequestStatus, Tick, ValidatorIndex};
use crate::simnet::Network;
use crate::tss::OracleTss;
use crate::clients::ChainClients;
use crate::validator::{AdversaryFlags, Chosen, Env, QueryError, SessionMode, Validator};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("expected {expected} adversary flag sets, got {got}")]
    FlagCount { expected: usize, got: usize },
    #[error("no validator {0}")]
    UnknownValidator(ValidatorIndex),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutcomeKind {
    /// No honest validator had a pending request.
    Idle,
    /// Pending work existed but no proposal was delivered.
    NoProposal,
    /// A proposal was delivered but no committee was announced.
    NoCommittee,
    /// A committee was announced but the request was not finalized.
    SigningFailed,
    Finalized(DepositIdentifier),
}

impl std::fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeKind::Idle => f.write_str("idle"),
            OutcomeKind::NoProposal => f.write_str("no-proposal"),
            OutcomeKind::NoCommittee => f.write_str("no-committee"),
            OutcomeKind::SigningFailed => f.write_str("signing-failed"),
            OutcomeKind::Finalized(id) => write!(f, "finalized {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    pub sid: u64,
    pub proposer: ValidatorIndex,
    pub kind: OutcomeKind,
    pub proposal: Option<DepositIdentifier>,
    pub committee: Option<Vec<ValidatorIndex>>,
    /// Status of the proposed request at each validator when the session ends.
    pub statuses: Vec<Option<RequestStatus>>,
    pub start_tick: Tick,
    pub end_tick: Tick,
}

pub struct Simulation {
    pub params: ProtocolParams,
    pub mode: SessionMode,
    pub ledgers: Ledgers,
    pub tss: OracleTss,
    pub net: Network,
    pub validators: Vec<Validator>,
    pub first_session_tick: Tick,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("params", &self.params)
            .field("now", &self.net.now())
            .finish_non_exhaustive()
    }
}

impl Simulation {
    /// Every validator starts from a copy of `clients`. `flags` has one
    /// entry per validator.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: ProtocolParams,
        mode: SessionMode,
        ledgers: Ledgers,
        tss: OracleTss,
        clients: ChainClients,
        flags: Vec<AdversaryFlags>,
        first_session_tick: Tick,
        log: bool,
    ) -> Result<Self, SimError> {
        params.validate()?;
        if flags.len() != params.n {
            return Err(SimError::FlagCount {
                expected: params.n,
                got: flags.len(),
            });
        }
        let mut net = Network::new(params.n, log);
        let validators = flags
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                if f.crashed_proposer {
                    net.drop_outgoing(i);
                }
                Validator::new(i, params.clone(), mode, clients.clone(), f, first_session_tick)
            })
            .collect();
        Ok(Self {
            params,
            mode,
            ledgers,
            tss,
            net,
            validators,
            first_session_tick,
        })
    }

    pub fn now(&self) -> Tick {
        self.net.now()
    }

    pub fn honest(&self) -> impl Iterator<Item = &Validator> {
        self.validators.iter().filter(|v| v.is_honest())
    }

    pub fn session_start(&self, sid: u64) -> Tick {
        self.first_session_tick + sid * self.params.session_length()
    }

    fn env(&mut self) -> (Env<'_>, &mut Vec<Validator>) {
        let now = self.net.now();
        (
            Env {
                now,
                ledgers: &mut self.ledgers,
                tss: &mut self.tss,
                net: &mut self.net,
            },
            &mut self.validators,
        )
    }

    pub fn step(&mut self) {
        let due = self.net.advance_tick();
        self.ledgers.advance_all();
        let (mut env, validators) = self.env();
        for e in due {
            validators[e.to].handle_message(&mut env, e.from, &e.payload);
        }
        for v in validators.iter_mut() {
            v.on_tick(&mut env);
        }
    }

    pub fn run_until(&mut self, tick: Tick) {
        while self.now() < tick {
            self.step();
        }
    }

    /// A client submitting a deposit identifier to validator `v`.
    pub fn submit_withdrawal(&mut self, v: ValidatorIndex, id: &DepositIdentifier) -> Result<(), SimError> {
        let (mut env, validators) = self.env();
        let validator = validators.get_mut(v).ok_or(SimError::UnknownValidator(v))?;
        validator.submit_withdrawal(&mut env, id);
        Ok(())
    }

    pub fn check_withdrawal(&self, v: ValidatorIndex, id: &DepositIdentifier) -> Result<&RequestData, QueryError> {
        self.validators
            .get(v)
            .ok_or(QueryError::NotFound)?
            .check_withdrawal(id)
    }

    /// Plants a forged request at every `forgeDeposit` validator.
    pub fn inject_forged(&mut self, data: &DepositData) {
        let now = self.now();
        for v in self.validators.iter_mut().filter(|v| v.flags.forge_deposit) {
            v.inject_forged(data.clone(), now);
        }
    }

    /// Runs to the last tick of the session containing the next tick.
    pub fn run_session(&mut self) -> SessionOutcome {
        let next = self.now() + 1;
        let len = self.params.session_length();
        let sid = next.saturating_sub(self.first_session_tick) / len;
        self.run_until(self.session_start(sid) + len - 1);
        self.outcome_of(sid)
    }

    /// Summary of session `sid` as seen by the honest validators now.
    pub fn outcome_of(&self, sid: u64) -> SessionOutcome {
        let start = self.session_start(sid);
        let end = start + self.params.session_length() - 1;
        let proposer = self.mode.proposer_of(sid, self.params.n);
        let reports: Vec<_> = self
            .honest()
            .filter_map(|v| v.session_report())
            .filter(|r| r.sid == sid)
            .collect();
        let proposal = reports.iter().find_map(|r| r.proposal.clone());
        let chosen: Option<Chosen> = reports.iter().find_map(|r| r.chosen.clone());
        let statuses = self
            .validators
            .iter()
            .map(|v| proposal.as_ref().and_then(|id| v.status_of(id)))
            .collect();
        let kind = match (&proposal, &chosen) {
            (None, _) => {
                let pending = self
                    .honest()
                    .any(|v| v.requests().values().any(|r| r.status == RequestStatus::Pending));
                if pending {
                    OutcomeKind::NoProposal
                } else {
                    OutcomeKind::Idle
                }
            }
            (Some(_), None) => OutcomeKind::NoCommittee,
            (Some(id), Some(_)) => {
                let done = self
                    .honest()
                    .any(|v| v.status_of(id) == Some(RequestStatus::Finalized));
                if done {
                    OutcomeKind::Finalized(id.clone())
                } else {
                    OutcomeKind::SigningFailed
                }
            }
        };
        SessionOutcome {
            sid,
            proposer,
            kind,
            proposal,
            committee: chosen.map(|c| c.signers),
            statuses,
            start_tick: start,
            end_tick: end,
        }
    }
}
