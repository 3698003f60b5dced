//! Test-driven code generation: a staged generation loop (prompt only,
//! prompt plus public tests, then analyze/advise/regenerate rounds), a
//! sandboxed verifier for candidate programs, and benchmark reporting under
//! public and private test criteria.

pub mod agents;
pub mod controller;
pub mod difficulty;
pub mod harness;
pub mod llm;
pub mod problem;
pub mod verifier;

pub use controller::{run_problem, Category, HaltReason, LoopConfig, RunOutcome, RunTranscript};
pub use problem::{load_dataset, Dataset, Problem, ProblemMode, TestCase};
pub use verifier::{VerificationReport, Verifier};
