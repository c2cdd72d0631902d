//! Proposer rotation and signer selection.
//!
//! Both must be computable by every validator from public inputs, so they
//! use a fixed 64-bit generator (SplitMix64):
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15          (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9    (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB    (wrapping)
//! output z ^ (z >> 31)
//! ```

use thiserror::Error;

use crate::model::ValidatorIndex;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Combines two 64-bit values into one well-mixed seed.
pub fn mix(a: u64, b: u64) -> u64 {
    SplitMix64::new(a ^ b.rotate_left(32) ^ 0x6A09_E667_F3BC_C908).next_u64()
}

/// How sessions pick their proposer and seed signer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionMode {
    /// Proposer `sid mod n`; selection seeded with `sid`.
    Protocol,
    /// Proposer uniform at random per session and selection seeded per
    /// session, both derived from `seed`. Used by liveness experiments.
    MonteCarlo { seed: u64 },
}

impl SessionMode {
    pub fn proposer_of(&self, sid: u64, n: usize) -> ValidatorIndex {
        match *self {
            SessionMode::Protocol => (sid % n as u64) as ValidatorIndex,
            SessionMode::MonteCarlo { seed } => (mix(seed, sid) % n as u64) as ValidatorIndex,
        }
    }

    pub fn selection_seed(&self, sid: u64) -> u64 {
        match *self {
            SessionMode::Protocol => sid,
            SessionMode::MonteCarlo { seed } => mix(seed ^ 0x5eed, sid),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{got} acceptors, at least {need} required")]
pub struct TooFewAcceptors {
    pub got: usize,
    pub need: usize,
}

/// Sorts the acceptors, then removes `draw() mod m` from the remaining `m`
/// until `keep` remain. Returns the survivors plus the proposer, ascending.
pub fn select_signers_with(
    acceptors: &[ValidatorIndex],
    proposer: ValidatorIndex,
    keep: usize,
    mut draw: impl FnMut() -> u64,
) -> Result<Vec<ValidatorIndex>, TooFewAcceptors> {
    let mut pool: Vec<ValidatorIndex> = acceptors.iter().copied().filter(|&a| a != proposer).collect();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < keep {
        return Err(TooFewAcceptors {
            got: pool.len(),
            need: keep,
        });
    }
    while pool.len() > keep {
        let idx = (draw() % pool.len() as u64) as usize;
        pool.remove(idx);
    }
    pool.push(proposer);
    pool.sort_unstable();
    Ok(pool)
}

pub fn select_signers(
    seed: u64,
    acceptors: &[ValidatorIndex],
    proposer: ValidatorIndex,
    keep: usize,
) -> Result<Vec<ValidatorIndex>, TooFewAcceptors> {
    let mut prg = SplitMix64::new(seed);
    select_signers_with(acceptors, proposer, keep, || prg.next_u64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of SplitMix64 seeded with 0 and with 1234567.
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        let mut g = SplitMix64::new(1_234_567);
        assert_eq!(g.next_u64(), 6_457_827_717_110_365_317);
        assert_eq!(g.next_u64(), 3_203_168_211_198_807_973);
    }

    #[test]
    fn stubbed_draws_hand_trace() {
        // Acceptors A..D = 1..4, proposer 0, keep 2, draws 5 then 2.
        let mut draws = [5u64, 2].into_iter();
        let s = select_signers_with(&[3, 1, 4, 2], 0, 2, || draws.next().unwrap()).unwrap();
        assert_eq!(s, vec![0, 1, 3]);
    }

    #[test]
    fn exact_and_short_acceptor_sets() {
        let s = select_signers(9, &[5, 2], 7, 2).unwrap();
        assert_eq!(s, vec![2, 5, 7]);
        assert_eq!(select_signers(9, &[5], 7, 2), Err(TooFewAcceptors { got: 1, need: 2 }));
        // The proposer never counts as its own acceptor.
        assert!(select_signers(9, &[5, 7], 7, 2).is_err());
    }

    #[test]
    fn selection_is_reproducible() {
        let acceptors: Vec<_> = (1..10).collect();
        let a = select_signers(42, &acceptors, 0, 3).unwrap();
        assert_eq!(a, select_signers(42, &acceptors, 0, 3).unwrap());
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn proposer_rules() {
        assert_eq!(SessionMode::Protocol.proposer_of(6, 4), 2);
        let cycle: Vec<_> = (0..4).map(|s| SessionMode::Protocol.proposer_of(s, 4)).collect();
        assert_eq!(cycle, vec![0, 1, 2, 3]);
        let mc = SessionMode::MonteCarlo { seed: 7 };
        let a: Vec<_> = (0..50).map(|s| mc.proposer_of(s, 4)).collect();
        let b: Vec<_> = (0..50).map(|s| mc.proposer_of(s, 4)).collect();
        assert_eq!(a, b);
        assert!((0..4).all(|v| a.contains(&v)));
    }
}
