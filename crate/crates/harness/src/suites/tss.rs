//! Threshold signing properties against the oracle engine.

use bridgeless_core::model::Hash32;
use bridgeless_core::tss::{verify, OracleTss, SessionResult, Signature, ThresholdSigner, TssError};
use bridgeless_core::validator::selection::mix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SuiteReport;
use crate::scenario::seed_bytes;

fn flip(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

/// Checks one honest, one silent and one aborting session per round.
pub fn tss_suite(rounds: u64, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("threshold signing");
    for k in 0..rounds {
        let round_seed = mix(seed, k);
        let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
        let n: usize = rng.gen_range(4..=13);
        let t = (n - 1) / 3;
        let mut engine = OracleTss::new("suite", seed_bytes(round_seed), t);
        let gk = engine.group_key().clone();
        let mut signers = sample(&mut rng, n, t + 1).into_vec();
        signers.sort_unstable();
        let message: Vec<Hash32> = (0..rng.gen_range(1..=3)).map(|_| Hash32(rng.gen())).collect();
        let deadline = 8;
        let ctx = format!("round {k} n={n} signers={signers:?}");

        // All signers approve at tick 1.
        let honest = format!("honest/{k}");
        let mut failure = engine.start_signing(&honest, &signers, &message, deadline).err().map(|e| e.to_string());
        for &s in &signers {
            if let Err(e) = engine.approve(&honest, s, &message, 1) {
                failure.get_or_insert(e.to_string());
            }
        }
        match engine.session_result(&honest, 2) {
            Ok(SessionResult::Signature(sig)) => {
                if !verify(&gk, &message, &sig) {
                    failure.get_or_insert("honest signature does not verify".into());
                }
                for bit in 0..sig.0.len() * 8 {
                    let mut bad = sig.0.clone();
                    flip(&mut bad, bit);
                    if verify(&gk, &message, &Signature(bad)) {
                        failure.get_or_insert(format!("signature with bit {bit} flipped verifies"));
                    }
                }
                for bit in 0..256 {
                    let mut other = message.clone();
                    flip(&mut other[0].0, bit);
                    if verify(&gk, &other, &sig) {
                        failure.get_or_insert(format!("signature verifies for message with bit {bit} flipped"));
                    }
                }
            }
            other => {
                failure.get_or_insert(format!("honest session gave {other:?}"));
            }
        }
        report.case(failure.map(|e| format!("{ctx}: {e}")));

        // One silent signer: pending until the deadline, then Error.
        let silent = format!("silent/{k}");
        let quiet = signers[rng.gen_range(0..signers.len())];
        let mut failure = engine.start_signing(&silent, &signers, &message, deadline).err().map(|e| e.to_string());
        for &s in signers.iter().filter(|&&s| s != quiet) {
            let _ = engine.approve(&silent, s, &message, 1);
        }
        for tick in 0..deadline + 4 {
            let want = if tick < deadline { SessionResult::Pending } else { SessionResult::Error };
            match engine.session_result(&silent, tick) {
                Ok(got) if got == want => {}
                got => {
                    failure.get_or_insert(format!("silent signer {quiet}: tick {tick} gave {got:?}"));
                }
            }
        }
        if engine.approve(&silent, quiet, &message, deadline) != Err(TssError::SessionClosed) {
            failure.get_or_insert("late approval accepted".into());
        }
        report.case(failure.map(|e| format!("{ctx}: {e}")));

        // One signer approves a different message.
        let abort = format!("abort/{k}");
        let mut failure = engine.start_signing(&abort, &signers, &message, deadline).err().map(|e| e.to_string());
        let mangled: Vec<Hash32> = message.iter().map(|h| Hash32::tagged("abort", h.as_bytes())).collect();
        for (i, &s) in signers.iter().enumerate() {
            let m = if i == 0 { &mangled } else { &message };
            let _ = engine.approve(&abort, s, m, 1);
        }
        if engine.session_result(&abort, deadline) != Ok(SessionResult::Error) {
            failure.get_or_insert("mismatched approval did not abort".into());
        }
        report.case(failure.map(|e| format!("{ctx}: {e}")));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_rounds_pass() {
        let r = tss_suite(2, 1);
        assert!(r.passed(), "{r}");
        assert_eq!(r.cases, 6);
    }
}
