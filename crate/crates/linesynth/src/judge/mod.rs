//! Judging of selections: the trait the search engine drives, plus the
//! real-compiler and mock implementations.

pub mod mock;
pub mod real;

use thiserror::Error;

use crate::assemble::AssembledSource;
use crate::types::{ProblemInstance, Selection, TrialOutcome};

pub use mock::{MockJudge, MockSpec};
pub use real::{CompilerConfig, RealJudge};

/// Infrastructure failures (sandbox/setup problems), distinct from program
/// failures; these abort a search run rather than being search events.
#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge infrastructure failure: {0}")]
    Infra(String),
    #[error("assembly failed: {0}")]
    Assemble(#[from] crate::assemble::AssembleError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Compile-only verdict with the first diagnostic mapped to a logical line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileCheck {
    Ok,
    Err {
        /// None for linker errors, internal compiler errors, and diagnostics
        /// on lines that do not map back to a pseudocode line.
        logical_line: Option<usize>,
        message: String,
    },
}

/// One judge behind search trials. Implementations must be deterministic
/// for identical inputs; every compile issued increments `compile_calls`.
pub trait Judge {
    /// Assemble the exact source bytes this judge would compile for the
    /// selection.
    fn assemble(&self, instance: &ProblemInstance, selection: &Selection)
        -> Result<AssembledSource, JudgeError>;

    /// Compile the full program; one compile call.
    fn compile_selection(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<CompileCheck, JudgeError>;

    /// One full trial: compile, and on success run the public tests in
    /// order. One compile call.
    fn run_trial(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<TrialOutcome, JudgeError>;

    /// Compile the closing-brace-completed prefix of the first `prefix_len`
    /// logical lines; returns true if it compiles. One compile call.
    fn probe_prefix(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
        prefix_len: usize,
    ) -> Result<bool, JudgeError>;

    /// Full validation: compiles and passes public AND hidden tests. Used
    /// only by evaluation, never inside budgeted search.
    fn validate_full(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<bool, JudgeError>;

    /// Total compile calls issued so far, across all methods.
    fn compile_calls(&self) -> u64;
}
