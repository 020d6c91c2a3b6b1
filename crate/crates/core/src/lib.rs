//! Yearly transaction-network analysis of an account-based view of a
//! UTXO ledger: ingest, per-transaction flow attribution, yearly snapshots,
//! network statistics, wealth ledgers and a synthetic chain generator.

pub mod config;
pub mod flow;
pub mod ingest;
pub mod metrics;
pub mod money;
pub mod phase;
pub mod pipeline;
pub mod rng;
pub mod snapshot;
pub mod synth;
pub mod wealth;
