//! Randomized bridge scenarios checked by the global observer.

use std::fmt::Write as _;

use bridgeless_core::validator::{selection::mix, AdversaryFlags};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{SuiteReport, CHAIN_PAIRS};
use crate::observer::ViolationKind;
use crate::runner::run_scenario;
use crate::scenario::ScenarioConfig;
use crate::world::{EVM, ZANO};

/// A random scenario file: n in [4, 13] with t = floor(n/3), up to t
/// adversaries with random flag sets, 1 to 3 requests over random chain
/// pairs, background traffic and reorgs of background UTXO transactions.
pub fn random_scenario(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.gen_range(4..=13);
    let t = n / 3;
    let max_sessions: u64 = rng.gen_range(3..=5);
    let k = rng.gen_range(0..=t);
    let mut adversaries = sample(&mut rng, n, k).into_vec();
    adversaries.sort_unstable();

    let mut validators = String::new();
    let mut forgers = false;
    let mut colluding = false;
    for &v in &adversaries {
        let mask: u32 = rng.gen_range(1..1 << AdversaryFlags::NAMES.len());
        let names: Vec<String> = AdversaryFlags::NAMES
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, name)| format!("\"{name}\""))
            .collect();
        forgers |= names.iter().any(|f| f.contains("forgeDeposit"));
        colluding |= names.iter().any(|f| f.contains("arbitraryCommittee"));
        let _ = writeln!(validators, "[[validators]]\nindex = {v}\nflags = [{}]", names.join(", "));
    }

    let mut out = String::new();
    let _ = writeln!(out, "seed = {}\nn = {n}\nt = {t}\nmax_sessions = {max_sessions}", seed >> 1);
    // floor(n/3) exceeds the n >= 3t+1 bound when 3 divides n.
    if n < 3 * t + 1 {
        out.push_str("unsafe = true\n");
    }
    if colluding {
        let list: Vec<String> = adversaries.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "colluders = [{}]", list.join(", "));
    }
    let _ = writeln!(
        out,
        "[noise]\nrate_percent = {}\nreorgs = {}",
        rng.gen_range(0..=60),
        rng.gen_range(0..=4)
    );
    out.push_str(&validators);

    let last_tick = 5 + 30 * (max_sessions - 2);
    let requests = rng.gen_range(1..=3);
    for _ in 0..requests {
        let (source, target) = CHAIN_PAIRS[rng.gen_range(0..CHAIN_PAIRS.len())];
        let eth_ok = [source, target].iter().all(|c| *c == EVM || *c == ZANO);
        let asset = if eth_ok && rng.gen_bool(0.5) { "ETH" } else { "BTC" };
        let _ = writeln!(
            out,
            "[[requests]]\nsource = \"{source}\"\nasset = \"{asset}\"\namount = {}\ntarget = \"{target}\"\nat_tick = {}",
            rng.gen_range(1..=5_000),
            rng.gen_range(0..=last_tick),
        );
        if !rng.gen_bool(0.7) {
            let k = rng.gen_range(1..=n);
            let mut to = sample(&mut rng, n, k).into_vec();
            to.sort_unstable();
            let list: Vec<String> = to.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "submit_to = [{}]", list.join(", "));
        }
        if target == EVM && rng.gen_bool(0.3) {
            out.push_str("client_withdraw = true\n");
        }
    }
    if forgers && rng.gen_bool(0.5) {
        let (source, target) = CHAIN_PAIRS[rng.gen_range(0..CHAIN_PAIRS.len())];
        let _ = writeln!(
            out,
            "[[requests]]\nsource = \"{source}\"\nasset = \"BTC\"\namount = 777\ntarget = \"{target}\"\nat_tick = {}\nforged = true",
            rng.gen_range(0..=last_tick),
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct SafetyReports {
    /// Withdrawal mapping and uniqueness.
    pub safety: SuiteReport,
    /// Honest status agreement at every session boundary.
    pub agreement: SuiteReport,
    /// Sessions that finalized a request, over all scenarios.
    pub finalized_sessions: usize,
}

/// Runs `count` random scenarios derived from `seed`.
pub fn safety_and_agreement(count: u64, seed: u64) -> SafetyReports {
    let results: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| {
            let scenario_seed = mix(seed, i);
            let text = random_scenario(scenario_seed);
            let report = ScenarioConfig::parse(&text)
                .map_err(|e| e.to_string())
                .and_then(|cfg| run_scenario(&cfg, false).map_err(|e| e.to_string()));
            (scenario_seed, report)
        })
        .collect();
    let mut safety = SuiteReport::new("bridge safety");
    let mut agreement = SuiteReport::new("honest status agreement");
    let mut finalized_sessions = 0;
    for (scenario_seed, report) in results {
        match report {
            Err(e) => {
                safety.fail(format!("scenario {scenario_seed}: did not run: {e}"));
                agreement.fail(format!("scenario {scenario_seed}: did not run"));
            }
            Ok(r) => {
                finalized_sessions += r
                    .outcomes
                    .iter()
                    .filter(|o| matches!(o.kind, bridgeless_core::sim::OutcomeKind::Finalized(_)))
                    .count();
                let (disagree, unsafe_): (Vec<_>, Vec<_>) = r
                    .violations
                    .iter()
                    .partition(|v| v.kind == ViolationKind::StatusDisagreement);
                safety.case(unsafe_.first().map(|v| format!("scenario {scenario_seed}: {v}")));
                agreement.case(disagree.first().map(|v| format!("scenario {scenario_seed}: {v}")));
            }
        }
    }
    SafetyReports {
        safety,
        agreement,
        finalized_sessions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_parse() {
        for s in 0..50 {
            let text = random_scenario(s);
            let cfg = ScenarioConfig::parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            cfg.resolve().unwrap_or_else(|e| panic!("{e}\n{text}"));
        }
    }

    #[test]
    fn small_batch_is_clean() {
        let r = safety_and_agreement(12, 3);
        assert!(r.safety.passed(), "{}", r.safety);
        assert!(r.agreement.passed(), "{}", r.agreement);
    }
}
