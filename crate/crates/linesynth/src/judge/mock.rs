//! Deterministic, seedable simulated judge for tests and desk-scale
//! experiments.
//!
//! A `MockSpec` labels every (line, rank) candidate as correct,
//! compile-offending (optionally only in certain contexts), or semantically
//! wrong, and configures how far the reported error line drifts from the
//! true offending line.
//!
//! # Fixture schema (TOML, version 1)
//!
//! ```toml
//! version = 1
//! seed = 42
//!
//! # Optional; defaults reproduce the observed reported-vs-actual line
//! # mismatch rate of 21.7%.
//! [[offsets]]
//! delta = 0
//! weight = 0.783
//! [[offsets]]
//! delta = 1
//! weight = 0.15
//! [[offsets]]
//! delta = 2
//! weight = 0.067
//!
//! [[lines]]
//! indent = 0
//! candidates = [
//!   { log_prob = -0.1, label = "correct" },
//!   { log_prob = -0.9, label = "compile_bad" },
//!   # offending only when line 1 uses rank 2:
//!   { log_prob = -1.5, label = "compile_bad", context = [[1, 2]] },
//!   { log_prob = -2.0, label = "semantic_bad" },
//! ]
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{self, AssembledSource};
use crate::types::{
    CandidateList, Candidate, ProblemInstance, PseudocodeLine, Selection, TestCase, TrialOutcome,
    Visibility,
};

use super::{CompileCheck, Judge, JudgeError};

#[derive(Debug, Error)]
pub enum MockSpecError {
    #[error("fixture parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported fixture version {0}")]
    Version(u32),
    #[error("line {0} has no candidates")]
    EmptyLine(usize),
    #[error("line {0} has no correct candidate; a gold selection must exist")]
    NoGold(usize),
    #[error("line {line} rank {rank}: context references unknown (line {ctx_line}, rank {ctx_rank})")]
    BadContext {
        line: usize,
        rank: usize,
        ctx_line: usize,
        ctx_rank: usize,
    },
    #[error("offset weights must be non-negative and sum to a positive value")]
    BadOffsets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    CompileBad,
    SemanticBad,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockCandidate {
    pub log_prob: f64,
    pub label: Label,
    /// For CompileBad: (line, rank) pairs that must all be selected for the
    /// candidate to actually offend. Empty means context-free.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockLine {
    #[serde(default)]
    pub indent: usize,
    pub candidates: Vec<MockCandidate>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OffsetWeight {
    pub delta: usize,
    pub weight: f64,
}

fn default_version() -> u32 {
    1
}

/// Default split: 0.783 / 0.15 / 0.067 so the three most frequent offsets
/// cover everything and reported != true happens 21.7% of the time.
pub fn default_offsets() -> Vec<OffsetWeight> {
    vec![
        OffsetWeight {
            delta: 0,
            weight: 0.783,
        },
        OffsetWeight {
            delta: 1,
            weight: 0.15,
        },
        OffsetWeight {
            delta: 2,
            weight: 0.067,
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<OffsetWeight>,
    pub lines: Vec<MockLine>,
}

impl MockSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, MockSpecError> {
        let spec: MockSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("mock spec serializes")
    }

    pub fn validate(&self) -> Result<(), MockSpecError> {
        if self.version != 1 {
            return Err(MockSpecError::Version(self.version));
        }
        for (i, line) in self.lines.iter().enumerate() {
            if line.candidates.is_empty() {
                return Err(MockSpecError::EmptyLine(i + 1));
            }
            if !line.candidates.iter().any(|c| c.label == Label::Correct) {
                return Err(MockSpecError::NoGold(i + 1));
            }
            for (j, cand) in line.candidates.iter().enumerate() {
                for &(cl, cr) in &cand.context {
                    let ok = cl >= 1
                        && cl <= self.lines.len()
                        && cr >= 1
                        && cr <= self.lines[cl - 1].candidates.len();
                    if !ok {
                        return Err(MockSpecError::BadContext {
                            line: i + 1,
                            rank: j + 1,
                            ctx_line: cl,
                            ctx_rank: cr,
                        });
                    }
                }
            }
        }
        let total: f64 = self.offsets.iter().map(|o| o.weight).sum();
        if self.offsets.iter().any(|o| o.weight < 0.0) || total <= 0.0 {
            return Err(MockSpecError::BadOffsets);
        }
        Ok(())
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn label(&self, line: usize, rank: usize) -> Label {
        self.lines[line - 1].candidates[rank - 1].label
    }

    /// The designated gold selection: the best-ranked correct candidate of
    /// each line.
    pub fn gold_selection(&self) -> Selection {
        Selection {
            ranks: self
                .lines
                .iter()
                .map(|l| {
                    l.candidates
                        .iter()
                        .position(|c| c.label == Label::Correct)
                        .expect("validated spec has gold")
                        + 1
                })
                .collect(),
        }
    }

    /// Materialize a synthetic problem instance matching this spec. Code
    /// and pseudocode text are placeholders; search only consumes the
    /// probabilities and structure.
    pub fn instance(&self, id: impl Into<String>, budget: usize) -> ProblemInstance {
        ProblemInstance {
            id: id.into(),
            lines: self
                .lines
                .iter()
                .enumerate()
                .map(|(i, l)| PseudocodeLine {
                    index: i + 1,
                    text: format!("pseudocode line {}", i + 1),
                    indent: l.indent,
                })
                .collect(),
            candidate_lists: self
                .lines
                .iter()
                .enumerate()
                .map(|(i, l)| CandidateList {
                    line_index: i + 1,
                    candidates: l
                        .candidates
                        .iter()
                        .enumerate()
                        .map(|(j, c)| Candidate {
                            code: format!("stmt_{}_{};", i + 1, j + 1),
                            log_prob: c.log_prob,
                            rank: j + 1,
                        })
                        .collect(),
                })
                .collect(),
            tests: vec![TestCase {
                input: b"mock".to_vec(),
                expected_output: b"mock".to_vec(),
                visibility: Visibility::Public,
            }],
            budget,
        }
    }
}

const ERROR_CLASSES: [&str; 4] = [
    "was not declared in this scope",
    "redeclaration of variable",
    "invalid conversion between types",
    "expected ';' before stray token",
];

/// Simulated judge driven by a `MockSpec`. Deterministic: identical
/// (spec, selection) pairs yield identical outcomes including reported
/// offsets.
pub struct MockJudge {
    spec: MockSpec,
    compile_calls: AtomicU64,
}

impl MockJudge {
    pub fn new(spec: MockSpec) -> Self {
        MockJudge {
            spec,
            compile_calls: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &MockSpec {
        &self.spec
    }

    /// Earliest line whose selected candidate offends within the first
    /// `prefix_len` lines. A context-dependent offender counts only when
    /// every context (line, rank) is selected inside the prefix.
    fn offending_line(&self, selection: &Selection, prefix_len: usize) -> Option<usize> {
        (1..=prefix_len).find(|&i| {
            let cand = &self.spec.lines[i - 1].candidates[selection.rank_at(i) - 1];
            cand.label == Label::CompileBad
                && cand
                    .context
                    .iter()
                    .all(|&(cl, cr)| cl <= prefix_len && selection.rank_at(cl) == cr)
        })
    }

    /// Line-offset draw for one (spec, selection) pair. Seeded by the spec
    /// seed and the rank vector so repeated judging of the same selection
    /// reports the same line.
    pub fn sample_offset(&self, selection: &Selection) -> usize {
        let mut h: u64 = 0xcbf29ce484222325;
        for &r in &selection.ranks {
            h ^= r as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ h);
        let total: f64 = self.spec.offsets.iter().map(|o| o.weight).sum();
        let mut draw = rng.gen::<f64>() * total;
        for o in &self.spec.offsets {
            draw -= o.weight;
            if draw <= 0.0 {
                return o.delta;
            }
        }
        self.spec.offsets.last().map(|o| o.delta).unwrap_or(0)
    }

    fn synthetic_message(&self, line: usize, rank: usize) -> String {
        let class = ERROR_CLASSES[(line * 31 + rank * 7) % ERROR_CLASSES.len()];
        format!("'v{line}_{rank}' {class}")
    }

    fn mock_compile(&self, selection: &Selection, prefix_len: usize) -> CompileCheck {
        self.compile_calls.fetch_add(1, Ordering::Relaxed);
        match self.offending_line(selection, prefix_len) {
            None => CompileCheck::Ok,
            Some(true_line) => {
                let delta = self.sample_offset(selection);
                let reported = (true_line + delta).min(self.spec.line_count());
                CompileCheck::Err {
                    logical_line: Some(reported),
                    message: self.synthetic_message(true_line, selection.rank_at(true_line)),
                }
            }
        }
    }

    fn semantically_ok(&self, selection: &Selection) -> bool {
        (1..=self.spec.line_count())
            .all(|i| self.spec.label(i, selection.rank_at(i)) != Label::SemanticBad)
    }
}

impl Judge for MockJudge {
    fn assemble(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<AssembledSource, JudgeError> {
        Ok(assemble::assemble(instance, selection, "")?)
    }

    fn compile_selection(
        &self,
        _instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<CompileCheck, JudgeError> {
        Ok(self.mock_compile(selection, self.spec.line_count()))
    }

    fn run_trial(
        &self,
        _instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<TrialOutcome, JudgeError> {
        match self.mock_compile(selection, self.spec.line_count()) {
            CompileCheck::Err {
                logical_line,
                message,
            } => Ok(TrialOutcome::CompileError {
                reported_logical_line: logical_line,
                message,
            }),
            CompileCheck::Ok => {
                if self.semantically_ok(selection) {
                    Ok(TrialOutcome::Accepted)
                } else {
                    Ok(TrialOutcome::WrongOutput {
                        first_failing_test: 0,
                    })
                }
            }
        }
    }

    fn probe_prefix(
        &self,
        _instance: &ProblemInstance,
        selection: &Selection,
        prefix_len: usize,
    ) -> Result<bool, JudgeError> {
        Ok(matches!(
            self.mock_compile(selection, prefix_len),
            CompileCheck::Ok
        ))
    }

    fn validate_full(
        &self,
        _instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<bool, JudgeError> {
        Ok(self.offending_line(selection, self.spec.line_count()).is_none()
            && self.semantically_ok(selection))
    }

    fn compile_calls(&self) -> u64 {
        self.compile_calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lines: Vec<Vec<(f64, Label, Vec<(usize, usize)>)>>) -> MockSpec {
        let spec = MockSpec {
            version: 1,
            seed: 11,
            offsets: default_offsets(),
            lines: lines
                .into_iter()
                .map(|cands| MockLine {
                    indent: 0,
                    candidates: cands
                        .into_iter()
                        .map(|(lp, label, context)| MockCandidate {
                            log_prob: lp,
                            label,
                            context,
                        })
                        .collect(),
                })
                .collect(),
        };
        spec.validate().unwrap();
        spec
    }

    #[test]
    fn gold_selection_is_accepted() {
        let s = spec(vec![
            vec![(-0.1, Label::Correct, vec![]), (-0.5, Label::CompileBad, vec![])],
            vec![(-0.2, Label::SemanticBad, vec![]), (-0.3, Label::Correct, vec![])],
        ]);
        let judge = MockJudge::new(s.clone());
        let inst = s.instance("m", 10);
        let gold = s.gold_selection();
        assert_eq!(gold.ranks, vec![1, 2]);
        assert_eq!(
            judge.run_trial(&inst, &gold).unwrap(),
            TrialOutcome::Accepted
        );
    }

    #[test]
    fn zero_offset_reports_true_line() {
        let mut s = spec(vec![
            vec![(-0.1, Label::Correct, vec![])],
            vec![(-0.1, Label::Correct, vec![])],
            vec![(-0.1, Label::CompileBad, vec![]), (-0.2, Label::Correct, vec![])],
        ]);
        s.offsets = vec![OffsetWeight {
            delta: 0,
            weight: 1.0,
        }];
        let judge = MockJudge::new(s.clone());
        let inst = s.instance("m", 10);
        let sel = Selection::top_one(3);
        match judge.run_trial(&inst, &sel).unwrap() {
            TrialOutcome::CompileError {
                reported_logical_line,
                ..
            } => assert_eq!(reported_logical_line, Some(3)),
            other => panic!("expected compile error, got {other:?}"),
        }
    }

    #[test]
    fn semantic_bad_yields_wrong_output() {
        let s = spec(vec![vec![
            (-0.1, Label::SemanticBad, vec![]),
            (-0.2, Label::Correct, vec![]),
        ]]);
        let judge = MockJudge::new(s.clone());
        let inst = s.instance("m", 10);
        assert_eq!(
            judge.run_trial(&inst, &Selection::top_one(1)).unwrap(),
            TrialOutcome::WrongOutput {
                first_failing_test: 0
            }
        );
    }

    #[test]
    fn context_dependent_offender_needs_its_context() {
        // (2, 1) offends only when line 1 selects rank 1.
        let s = spec(vec![
            vec![(-0.1, Label::Correct, vec![]), (-0.2, Label::Correct, vec![])],
            vec![
                (-0.1, Label::CompileBad, vec![(1, 1)]),
                (-0.3, Label::Correct, vec![]),
            ],
        ]);
        let judge = MockJudge::new(s.clone());
        let inst = s.instance("m", 10);
        assert!(matches!(
            judge.run_trial(&inst, &Selection { ranks: vec![1, 1] }).unwrap(),
            TrialOutcome::CompileError { .. }
        ));
        // Different rank on line 1: condition false, compiles and accepts.
        assert_eq!(
            judge.run_trial(&inst, &Selection { ranks: vec![2, 1] }).unwrap(),
            TrialOutcome::Accepted
        );
    }

    #[test]
    fn determinism_across_repeated_judging() {
        let s = spec(vec![
            vec![(-0.1, Label::CompileBad, vec![]), (-0.2, Label::Correct, vec![])],
            vec![(-0.1, Label::Correct, vec![])],
            vec![(-0.1, Label::Correct, vec![])],
        ]);
        let judge = MockJudge::new(s.clone());
        let inst = s.instance("m", 10);
        let sel = Selection::top_one(3);
        let a = judge.run_trial(&inst, &sel).unwrap();
        let b = judge.run_trial(&inst, &sel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixture_round_trips_through_toml() {
        let s = spec(vec![
            vec![(-0.1, Label::Correct, vec![]), (-0.5, Label::CompileBad, vec![(1, 1)])],
            vec![(-0.2, Label::Correct, vec![])],
        ]);
        let text = s.to_toml_string();
        let back = MockSpec::from_toml_str(&text).unwrap();
        assert_eq!(back.lines.len(), 2);
        assert_eq!(back.label(1, 2), Label::CompileBad);
        assert_eq!(back.lines[0].candidates[1].context, vec![(1, 1)]);
    }
}
