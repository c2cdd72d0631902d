//! Scenario runner, global safety observer, property suites and liveness
//! experiments for the bridge simulator.

pub mod formula;
pub mod liveness;
pub mod observer;
pub mod runner;
pub mod scenario;
pub mod suites;
pub mod world;
