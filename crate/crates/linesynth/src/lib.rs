//! Search-based synthesis of programs from line-aligned pseudocode.
//!
//! Each pseudocode line comes with a ranked list of candidate code
//! translations and their log probabilities. The engine walks combinations
//! of per-line candidates in best-first order under a fixed budget of
//! compile trials, accepts the first combination that compiles and passes
//! the public tests, and — when a trial fails to compile — feeds the
//! compiler diagnostic back into the search by down-weighting suspect
//! candidates or blacklisting whole failing prefixes.
//!
//! Module map:
//!
//! - [`types`]: the problem/candidate/selection data model;
//! - [`assemble`]: turning a selection into compilable source, and the
//!   physical-to-logical line mapping;
//! - [`judge`]: the compile-and-test boundary — a real compiler harness
//!   and a deterministic mock for experiments;
//! - [`localize`]: strategies for blaming a line (or prefix) for a
//!   compile failure;
//! - [`search`]: the budgeted best-first engine and its trace format;
//! - [`eval`]: success curves, per-problem trial deltas, and line-level
//!   accuracy metrics;
//! - [`dataset`]: problem-set loading and canonical serialization;
//! - [`bench`]: synthetic mock-compiler benchmark generation.

pub mod assemble;
pub mod bench;
pub mod dataset;
pub mod eval;
pub mod judge;
pub mod localize;
pub mod search;
pub mod types;

pub use judge::{CompileCheck, CompilerConfig, Judge, JudgeError, MockJudge, MockSpec, RealJudge};
pub use localize::{localizer_by_name, Localizer, Verdict};
pub use search::{best_first_search, SearchConfig, SearchResult, SearchStatus};
pub use types::{Candidate, CandidateList, ProblemInstance, Selection, TrialOutcome};
