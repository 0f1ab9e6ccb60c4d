//! Problem/candidate/selection data model and probability arithmetic.
//!
//! All probability arithmetic is carried out in natural-log space; programs
//! can run to hundreds of lines and linear-space products underflow.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line indices must be contiguous 1..L: expected {expected}, got {got}")]
    NonContiguousLines { expected: usize, got: usize },
    #[error("line 1 must have indent 0, got {0}")]
    BadFirstIndent(usize),
    #[error("indent jumps by more than 1 between lines {prev} and {next}")]
    IndentJump { prev: usize, next: usize },
    #[error("line {line}: candidate list is empty")]
    EmptyCandidateList { line: usize },
    #[error("line {line}: candidates not sorted by non-increasing log_prob")]
    UnsortedCandidates { line: usize },
    #[error("line {line} rank {rank}: log_prob {value} is not finite or positive")]
    BadLogProb { line: usize, rank: usize, value: f64 },
    #[error("line {line}: candidate ranks must be 1..n, got {got} at position {pos}")]
    BadRank { line: usize, pos: usize, got: usize },
    #[error("problem has {lines} lines but {lists} candidate lists")]
    ListCountMismatch { lines: usize, lists: usize },
    #[error("problem has no public test case")]
    NoPublicTest,
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("selection has {got} ranks for {expected} lines")]
    SelectionLengthMismatch { expected: usize, got: usize },
    #[error("selection rank {rank} out of range for line {line} ({available} candidates)")]
    RankOutOfRange {
        line: usize,
        rank: usize,
        available: usize,
    },
}

/// One natural-language pseudocode line. `text` is empty for fixed
/// structural lines (closing braces, scaffolding) that carry no annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudocodeLine {
    /// 1-based position in the program.
    pub index: usize,
    pub text: String,
    /// Nesting level; line 1 is always at indent 0.
    pub indent: usize,
}

/// One candidate translation of a pseudocode line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: String,
    /// Natural log of the model probability; finite and <= 0.
    pub log_prob: f64,
    /// 1-based position in its list.
    pub rank: usize,
}

/// Ranked candidate translations for one line, sorted by non-increasing
/// log_prob (ties keep file order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub line_index: usize,
    pub candidates: Vec<Candidate>,
}

impl CandidateList {
    /// Single-candidate list with probability 1, used for fixed structural
    /// lines so the search space ignores them.
    pub fn fixed(line_index: usize, code: impl Into<String>) -> Self {
        CandidateList {
            line_index,
            candidates: vec![Candidate {
                code: code.into(),
                log_prob: 0.0,
                rank: 1,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Look up a candidate by 1-based rank.
    pub fn get(&self, rank: usize) -> Option<&Candidate> {
        self.candidates.get(rank.checked_sub(1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Public,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(with = "bytes_as_string")]
    pub input: Vec<u8>,
    #[serde(with = "bytes_as_string")]
    pub expected_output: Vec<u8>,
    pub visibility: Visibility,
}

mod bytes_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

/// A synthesis problem: pseudocode lines, per-line candidate lists, test
/// cases, and a trial budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub lines: Vec<PseudocodeLine>,
    pub candidate_lists: Vec<CandidateList>,
    pub tests: Vec<TestCase>,
    /// Maximum number of compiler calls allowed in one search run.
    pub budget: usize,
}

impl ProblemInstance {
    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn public_tests(&self) -> impl Iterator<Item = &TestCase> {
        self.tests
            .iter()
            .filter(|t| t.visibility == Visibility::Public)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.lines.len() != self.candidate_lists.len() {
            return Err(ModelError::ListCountMismatch {
                lines: self.lines.len(),
                lists: self.candidate_lists.len(),
            });
        }
        for (pos, line) in self.lines.iter().enumerate() {
            if line.index != pos + 1 {
                return Err(ModelError::NonContiguousLines {
                    expected: pos + 1,
                    got: line.index,
                });
            }
        }
        if let Some(first) = self.lines.first() {
            if first.indent != 0 {
                return Err(ModelError::BadFirstIndent(first.indent));
            }
        }
        for pair in self.lines.windows(2) {
            if pair[1].indent > pair[0].indent + 1 {
                return Err(ModelError::IndentJump {
                    prev: pair[0].index,
                    next: pair[1].index,
                });
            }
        }
        for list in &self.candidate_lists {
            if list.is_empty() {
                return Err(ModelError::EmptyCandidateList {
                    line: list.line_index,
                });
            }
            for (pos, cand) in list.candidates.iter().enumerate() {
                if !cand.log_prob.is_finite() || cand.log_prob > 0.0 {
                    return Err(ModelError::BadLogProb {
                        line: list.line_index,
                        rank: cand.rank,
                        value: cand.log_prob,
                    });
                }
                if cand.rank != pos + 1 {
                    return Err(ModelError::BadRank {
                        line: list.line_index,
                        pos: pos + 1,
                        got: cand.rank,
                    });
                }
            }
            for pair in list.candidates.windows(2) {
                if pair[1].log_prob > pair[0].log_prob {
                    return Err(ModelError::UnsortedCandidates {
                        line: list.line_index,
                    });
                }
            }
        }
        if !self.tests.iter().any(|t| t.visibility == Visibility::Public) {
            return Err(ModelError::NoPublicTest);
        }
        if self.budget == 0 {
            return Err(ModelError::ZeroBudget);
        }
        Ok(())
    }

    /// The instance with hidden tests stripped; search runs receive only
    /// public tests by construction.
    pub fn public_view(&self) -> ProblemInstance {
        let mut inst = self.clone();
        inst.tests.retain(|t| t.visibility == Visibility::Public);
        inst
    }
}

/// One candidate rank per line; the unit of search. Equality and hash are
/// by the full rank vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selection {
    /// 1-based candidate ranks, one per logical line.
    pub ranks: Vec<usize>,
}

impl Selection {
    /// The all-rank-1 selection: the top-one translation.
    pub fn top_one(line_count: usize) -> Self {
        Selection {
            ranks: vec![1; line_count],
        }
    }

    pub fn validate(&self, lists: &[CandidateList]) -> Result<(), ModelError> {
        if self.ranks.len() != lists.len() {
            return Err(ModelError::SelectionLengthMismatch {
                expected: lists.len(),
                got: self.ranks.len(),
            });
        }
        for (i, (&rank, list)) in self.ranks.iter().zip(lists).enumerate() {
            if rank < 1 || rank > list.len() {
                return Err(ModelError::RankOutOfRange {
                    line: i + 1,
                    rank,
                    available: list.len(),
                });
            }
        }
        Ok(())
    }

    /// Rank at a 1-based line index.
    pub fn rank_at(&self, line: usize) -> usize {
        self.ranks[line - 1]
    }

    /// Successor with the rank at `line` (1-based) incremented, or `None`
    /// if that line has no lower-probability candidate left.
    pub fn bump(&self, line: usize, lists: &[CandidateList]) -> Option<Selection> {
        let current = self.ranks[line - 1];
        if current >= lists[line - 1].len() {
            return None;
        }
        let mut ranks = self.ranks.clone();
        ranks[line - 1] = current + 1;
        Some(Selection { ranks })
    }
}

/// Verdict of one synthesis trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialOutcome {
    CompileError {
        /// First error mapped back to a logical line, when the mapping
        /// succeeded (linker errors and the like stay unmapped).
        reported_logical_line: Option<usize>,
        message: String,
    },
    RuntimeError,
    WrongOutput {
        /// 0-based index of the first failing public test.
        first_failing_test: usize,
    },
    Timeout,
    Accepted,
}

/// Per-(line, rank) down-weight counts. Each application multiplies the
/// candidate's probability by the configured alpha < 1; repeated verdicts
/// on the same candidate stack multiplicatively.
#[derive(Debug, Clone)]
pub struct DownWeightTable {
    log_alpha: f64,
    counts: HashMap<(usize, usize), u32>,
}

impl DownWeightTable {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
        DownWeightTable {
            log_alpha: alpha.ln(),
            counts: HashMap::new(),
        }
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    /// Apply one more down-weight to the candidate at (line, rank), 1-based.
    pub fn bump(&mut self, line: usize, rank: usize) {
        *self.counts.entry((line, rank)).or_insert(0) += 1;
    }

    pub fn count(&self, line: usize, rank: usize) -> u32 {
        self.counts.get(&(line, rank)).copied().unwrap_or(0)
    }

    /// Total log-space penalty for the candidate at (line, rank).
    pub fn penalty(&self, line: usize, rank: usize) -> f64 {
        f64::from(self.count(line, rank)) * self.log_alpha
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Sum of the selected candidates' log probabilities, i.e. the log of the
/// product of their probabilities.
///
/// An out-of-range rank is a programming bug, not a search event, and
/// panics.
pub fn selection_log_prob(selection: &Selection, lists: &[CandidateList]) -> f64 {
    assert_eq!(selection.ranks.len(), lists.len(), "selection/list length mismatch");
    selection
        .ranks
        .iter()
        .zip(lists)
        .map(|(&rank, list)| {
            list.get(rank)
                .unwrap_or_else(|| panic!("rank {rank} out of range for line {}", list.line_index))
                .log_prob
        })
        .sum()
}

/// `selection_log_prob` plus the accumulated down-weight penalties of the
/// candidates the selection actually uses.
pub fn effective_log_prob(
    selection: &Selection,
    lists: &[CandidateList],
    weights: &DownWeightTable,
) -> f64 {
    let base = selection_log_prob(selection, lists);
    let penalty: f64 = selection
        .ranks
        .iter()
        .enumerate()
        .map(|(i, &rank)| weights.penalty(i + 1, rank))
        .sum();
    base + penalty
}
