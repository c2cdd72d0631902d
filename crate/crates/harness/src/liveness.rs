//! Monte Carlo estimate of the probability of finalizing a lone request
//! within `r` sessions, paired with the closed form.
//!
//! Each trial is a full protocol run: random proposer per session, `t`
//! randomly placed validators that accept every proposal and then abort
//! signing, and one deposit pending at every honest validator.

use std::fmt::Write as _;

use bridgeless_core::model::ProtocolParams;
use bridgeless_core::sim::OutcomeKind;
use bridgeless_core::validator::{selection::mix, AdversaryFlags, SessionMode};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::formula::{p_liveness, DomainError};
use crate::scenario::seed_bytes;
use crate::world::{build_simulation, default_receiver, default_sender, deposit, fund_sender, Transfer, WorldConfig, EVM, ZANO};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;
/// Allowed deviation beyond the confidence half-width.
pub const SLACK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct LivenessPoint {
    pub r: u32,
    pub analytic: f64,
    pub empirical: f64,
    pub trials: u64,
    /// Half-width of the 99% normal-approximation interval around `analytic`.
    pub ci_half_width: f64,
}

impl LivenessPoint {
    pub fn within_tolerance(&self) -> bool {
        (self.empirical - self.analytic).abs() <= self.ci_half_width + SLACK
    }
}

/// Session (1-based) in which the trial's request was finalized.
pub fn run_trial(n: usize, t: usize, max_sessions: u32, trial_seed: u64) -> Option<u32> {
    let mut params = ProtocolParams::with_threshold(n, t);
    params.allow_unsafe = true;
    let mut cfg = WorldConfig::honest(params);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    for i in sample(&mut rng, n, t) {
        cfg.flags[i] = AdversaryFlags {
            accept_then_abort: true,
            ..AdversaryFlags::default()
        };
    }
    cfg.mode = SessionMode::MonteCarlo { seed: trial_seed };
    cfg.tss_seed = seed_bytes(trial_seed);
    let mut sim = build_simulation(&cfg).expect("static world is valid");
    let assets = cfg.assets.clone();
    let transfer = Transfer {
        source: EVM.into(),
        asset: "ETH".into(),
        amount: 1,
        sender: default_sender(bridgeless_core::model::ChainKind::Evm).into(),
        target: ZANO.into(),
        target_addr: default_receiver(bridgeless_core::model::ChainKind::BurnEmit).into(),
    };
    fund_sender(&mut sim, &assets, &transfer).expect("funding");
    let id = deposit(&mut sim, &assets, &transfer).expect("deposit");
    for v in 0..n {
        sim.submit_withdrawal(v, &id).expect("index in range");
    }
    (1..=max_sessions).find(|_| matches!(sim.run_session().kind, OutcomeKind::Finalized(_)))
}

/// Runs `trials` independent trials in parallel and reduces them in trial
/// order.
pub fn monte_carlo_liveness(
    n: usize,
    t: usize,
    trials: u64,
    max_sessions: u32,
    seed: u64,
) -> Result<Vec<LivenessPoint>, DomainError> {
    // Validate the domain before spending any time.
    p_liveness(n as u64, t as u64, 1)?;
    let finals: Vec<Option<u32>> = (0..trials)
        .into_par_iter()
        .map(|i| run_trial(n, t, max_sessions, mix(seed, i)))
        .collect();
    let mut counts = vec![0u64; max_sessions as usize + 1];
    for s in finals.into_iter().flatten() {
        counts[s as usize] += 1;
    }
    let mut cumulative = 0;
    let mut points = Vec::with_capacity(max_sessions as usize);
    for r in 1..=max_sessions {
        cumulative += counts[r as usize];
        let analytic = p_liveness(n as u64, t as u64, r)?;
        let empirical = cumulative as f64 / trials as f64;
        let ci_half_width = Z99 * (analytic * (1.0 - analytic) / trials as f64).sqrt();
        points.push(LivenessPoint {
            r,
            analytic,
            empirical,
            trials,
            ci_half_width,
        });
    }
    Ok(points)
}

pub fn to_csv(points: &[LivenessPoint]) -> String {
    let mut out = String::from("r,analytic,empirical,ci\n");
    for p in points {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", p.r, p.analytic, p.empirical, p.ci_half_width);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_adversary_always_first_session() {
        let pts = monte_carlo_liveness(4, 0, 20, 3, 5).unwrap();
        assert!(pts.iter().all(|p| p.empirical == 1.0 && p.analytic == 1.0));
    }

    #[test]
    fn deterministic_curves() {
        let a = monte_carlo_liveness(4, 1, 40, 4, 9).unwrap();
        let b = monte_carlo_liveness(4, 1, 40, 4, 9).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_liveness(4, 1, 40, 4, 10).unwrap();
        assert_eq!(a.len(), c.len());
    }

    #[test]
    fn csv_layout() {
        let p = LivenessPoint {
            r: 2,
            analytic: 0.75,
            empirical: 0.7,
            trials: 10,
            ci_half_width: 0.1,
        };
        assert_eq!(to_csv(&[p]), "r,analytic,empirical,ci\n2,0.750000,0.700000,0.100000\n");
    }

    #[test]
    fn domain_checked_first() {
        assert!(monte_carlo_liveness(3, 3, 1, 1, 0).is_err());
    }
}
