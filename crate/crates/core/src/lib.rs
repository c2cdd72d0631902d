//! Deterministic simulation of a threshold-signature cross-chain bridge:
//! data model, synchronous network with reliable broadcast, an oracle
//! threshold signer, simulated ledgers, chain clients and validator nodes.

pub mod clients;
pub mod codec;
pub mod ledger;
pub mod model;
pub mod sim;
pub mod simnet;
pub mod tss;
pub mod validator;
