//! A committee member that accepts and then aborts signing: the session
//! ends with the request back at pending everywhere, and the first
//! all-honest committee afterwards finalizes it.

use bridgeless_core::model::{ChainKind, ProtocolParams, RequestStatus};
use bridgeless_core::sim::OutcomeKind;
use bridgeless_core::validator::selection::mix;

use super::SuiteReport;
use crate::scenario::seed_bytes;
use crate::world::{build_simulation, default_receiver, default_sender, deposit, fund_sender, Transfer, WorldConfig, EVM, ZANO};

/// Validator 0 proposes session 0, so it is always on that committee.
const ABORTER: usize = 0;
const MAX_SESSIONS: usize = 16;

fn run_case(n: usize, seed: u64) -> Result<usize, String> {
    let mut cfg = WorldConfig::honest(ProtocolParams::new(n));
    cfg.flags[ABORTER].accept_then_abort = true;
    cfg.tss_seed = seed_bytes(seed);
    let assets = cfg.assets.clone();
    let mut sim = build_simulation(&cfg).map_err(|e| e.to_string())?;
    let transfer = Transfer {
        source: EVM.into(),
        asset: "ETH".into(),
        amount: 42,
        sender: default_sender(ChainKind::Evm).into(),
        target: ZANO.into(),
        target_addr: default_receiver(ChainKind::BurnEmit).into(),
    };
    fund_sender(&mut sim, &assets, &transfer).map_err(|e| e.to_string())?;
    let id = deposit(&mut sim, &assets, &transfer).map_err(|e| e.to_string())?;
    for v in 0..n {
        sim.submit_withdrawal(v, &id).map_err(|e| e.to_string())?;
    }
    let mut reverted = 0;
    for _ in 0..MAX_SESSIONS {
        let out = sim.run_session();
        let Some(committee) = out.committee.clone() else {
            return Err(format!("session {} formed no committee: {:?}", out.sid, out.kind));
        };
        if out.proposal.as_ref() != Some(&id) {
            return Err(format!("session {} proposed {:?}", out.sid, out.proposal));
        }
        let honest_statuses: Vec<_> = out
            .statuses
            .iter()
            .enumerate()
            .filter(|(v, _)| *v != ABORTER)
            .map(|(_, s)| *s)
            .collect();
        if committee.contains(&ABORTER) {
            if out.kind != OutcomeKind::SigningFailed {
                return Err(format!("session {} with the aborter ended {:?}", out.sid, out.kind));
            }
            if honest_statuses.iter().any(|s| *s != Some(RequestStatus::Pending)) {
                return Err(format!("session {} left statuses {honest_statuses:?}", out.sid));
            }
            reverted += 1;
        } else {
            if out.kind != OutcomeKind::Finalized(id.clone()) {
                return Err(format!("honest committee {committee:?} in session {} ended {:?}", out.sid, out.kind));
            }
            if honest_statuses.iter().any(|s| *s != Some(RequestStatus::Finalized)) {
                return Err(format!("finalized session {} left statuses {honest_statuses:?}", out.sid));
            }
            if reverted == 0 {
                return Err("the aborter never sat on a committee".into());
            }
            return Ok(reverted);
        }
    }
    Err(format!("no all-honest committee within {MAX_SESSIONS} sessions"))
}

pub fn revert_suite(seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("revert after aborted signing");
    for n in 4..=13 {
        let case_seed = mix(seed, n as u64);
        report.case(run_case(n, case_seed).err().map(|e| format!("n={n} seed={case_seed}: {e}")));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_validators() {
        assert!(run_case(4, 1).unwrap() >= 1);
    }
}
