//! Property suites shared by `bridgeless selftest` and the acceptance tests.
//!
//! Every suite is deterministic in its seed and returns a [`SuiteReport`]
//! listing each failed case.

use std::fmt;

mod clients;
mod conservation;
mod rb;
mod revert;
mod safety;
mod tss;

pub use clients::utxo_determinism_suite;
pub use conservation::{conservation_suite, forger_demo, replay_ablation, replay_suite};
pub use rb::rb_equivocation_suite;
pub use revert::revert_suite;
pub use safety::{random_scenario, safety_and_agreement, SafetyReports};
pub use tss::tss_suite;

use crate::world::{BTC, EVM, ZANO};

/// The 3x2 ordered (source, target) chain combinations.
pub const CHAIN_PAIRS: [(&str, &str); 6] = [(EVM, BTC), (EVM, ZANO), (BTC, EVM), (BTC, ZANO), (ZANO, EVM), (ZANO, BTC)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            cases: 0,
            failures: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.cases > 0
    }

    /// Counts one case, failing it with `failure` if present.
    pub fn case(&mut self, failure: Option<String>) {
        self.cases += 1;
        if let Some(f) = failure {
            self.failures.push(f);
        }
    }

    pub fn fail(&mut self, failure: impl Into<String>) {
        self.case(Some(failure.into()));
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "PASS {} ({} cases)", self.name, self.cases)
        } else {
            write!(f, "FAIL {} ({}/{} cases failed)", self.name, self.failures.len(), self.cases)?;
            for line in self.failures.iter().take(5) {
                write!(f, "\n  {line}")?;
            }
            Ok(())
        }
    }
}

/// Seeds and sizes for one selftest pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelftestPlan {
    pub scenarios: u64,
    pub tss_rounds: u64,
    pub utxo_states: u64,
    pub seed: u64,
}

impl Default for SelftestPlan {
    fn default() -> Self {
        Self {
            scenarios: 1_000,
            tss_rounds: 16,
            utxo_states: 100,
            seed: 2024,
        }
    }
}

/// Every observer and property suite, in a fixed order.
pub fn selftest(plan: SelftestPlan) -> Vec<SuiteReport> {
    let reports = safety_and_agreement(plan.scenarios, plan.seed);
    vec![
        reports.safety,
        reports.agreement,
        rb_equivocation_suite(),
        tss_suite(plan.tss_rounds, plan.seed),
        utxo_determinism_suite(plan.utxo_states, plan.seed),
        revert_suite(plan.seed),
        conservation_suite(),
        replay_suite(),
        replay_ablation(),
        forger_demo(),
    ]
}
