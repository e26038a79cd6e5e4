//! Multi-server private information retrieval with coded side information.
//!
//! A user holding one linear combination of `M` messages retrieves a further
//! message from `N` replicated servers without revealing its index. The crate
//! provides the retrieval protocols, an exact privacy auditor, a rate meter
//! and a seeded simulation harness.

pub mod audit;
pub mod coins;
pub mod combin;
pub mod error;
pub mod field;
pub mod harness;
pub mod instance;
mod linsys;
pub mod partition;
pub mod pircsi;
pub mod ratio;
pub mod sunjafar;

pub use audit::{
    capacity, capacity_model_i, capacity_model_ii, witness_sweep, witness_search, measure_rate,
    posterior_audit, AuditMode, AuditOptions, AuditReport, AuditStatus, WitnessEntry,
};
pub use error::{Error, Result};
pub use field::{FieldElement, PrimeOrder, SymbolVector};
pub use harness::{run, sweep, BenchRow, GridSpec, RunOutput, RunSummary, Transcript};
pub use instance::{Database, Instance, Model, Params, ProtocolPath};
pub use partition::{solve_mrp_distribution, solve_rp_distribution, PartitionPlan, Profile, SelectionDistribution};
pub use pircsi::{Protocol, RetrievalSession, ServerQuery, ServerView};
pub use ratio::Rational;
