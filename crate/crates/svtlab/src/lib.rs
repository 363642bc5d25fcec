//! Sparse Vector Technique (SVT) laboratory.
//!
//! This crate implements the family of SVT variants that circulate in the
//! differential-privacy literature — the correct ones and, deliberately, the
//! broken ones — together with the exponential mechanism, a numerical audit
//! engine that measures the true privacy loss of each variant on neighboring
//! inputs, and a benchmark harness for private top-c selection.
//!
//! The crate is organized in four modules:
//!
//! * [`mechanisms`] — Laplace distribution machinery and the exponential
//!   mechanism (single selection and top-c).
//! * [`svt`] — the SVT variants, budget allocation, interactive sessions,
//!   and the retraversal strategy.
//! * [`audit`] — exact (quadrature) and estimated (Monte Carlo) output-vector
//!   probabilities on neighboring pairs, counterexample catalog, and bound
//!   verification.
//! * [`bench`] — datasets (transaction ingestion, Zipf generator), FNR/SER
//!   metrics, and the seeded trial runner.
//!
//! All randomness flows through explicitly seeded ChaCha streams, so every
//! result in the crate is reproducible bit-for-bit. Heavy inner loops (Monte
//! Carlo batches, benchmark trials) run on rayon when the default `parallel`
//! feature is enabled and fall back to sequential execution when it is not;
//! outputs are identical either way.

pub mod audit;
pub mod bench;
mod exec;
pub mod mechanisms;
pub mod rng;
pub mod svt;

pub use mechanisms::{LaplaceDist, MechanismError, QuerySet, SelectionResult};
pub use svt::{
    Answer, BudgetSplit, OutcomeVector, SvtConfig, SvtError, SvtSession, Thresholds, Variant,
};
