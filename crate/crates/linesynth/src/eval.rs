//! Metric computation: success-at-budget curves, trial-delta reports,
//! line-level functional correctness, and oracle statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{Judge, JudgeError};
use crate::search::{SearchResult, SearchStatus};
use crate::types::{ProblemInstance, Selection};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run for problem {problem} used budget {got}, below requested B={requested}")]
    BudgetTooSmall {
        problem: String,
        got: usize,
        requested: usize,
    },
    #[error("baseline and method cover different problem sets (e.g. {example})")]
    MismatchedProblems { example: String },
    #[error("gold program for {0} does not pass its tests")]
    GoldFails(String),
    #[error("judge: {0}")]
    Judge(#[from] JudgeError),
}

/// Replayable digest of one search run, keyed by (problem, method, budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub problem: String,
    pub method: String,
    pub budget: usize,
    /// 1-based trial index of the accepting trial, when the run succeeded.
    pub accepted_trial: Option<usize>,
    pub trials_used: usize,
}

impl RunDigest {
    pub fn from_result(problem: &str, method: &str, budget: usize, result: &SearchResult) -> Self {
        RunDigest {
            problem: problem.to_string(),
            method: method.to_string(),
            budget,
            accepted_trial: if result.status == SearchStatus::Accepted {
                result.trace.accepted_trial().or(Some(result.trials_used))
            } else {
                None
            },
            trials_used: result.trials_used,
        }
    }
}

/// Fraction of problems whose accepting trial index is <= `budget`.
/// Requires every run to have been executed with at least that budget.
pub fn success_rate_at_budget(digests: &[RunDigest], budget: usize) -> Result<f64, EvalError> {
    for d in digests {
        if d.budget < budget {
            return Err(EvalError::BudgetTooSmall {
                problem: d.problem.clone(),
                got: d.budget,
                requested: budget,
            });
        }
    }
    if digests.is_empty() {
        return Ok(0.0);
    }
    let hits = digests
        .iter()
        .filter(|d| d.accepted_trial.map(|t| t <= budget).unwrap_or(false))
        .count();
    Ok(hits as f64 / digests.len() as f64)
}

/// The empirical success curve over a set of budgets; non-decreasing by
/// construction (it is the CDF of accepting-trial indices).
pub fn success_curve(
    digests: &[RunDigest],
    budgets: &[usize],
) -> Result<Vec<(usize, f64)>, EvalError> {
    budgets
        .iter()
        .map(|&b| Ok((b, success_rate_at_budget(digests, b)?)))
        .collect()
}

/// Summary statistics over one outcome category of a trial-delta
/// comparison.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub count: usize,
    pub fraction: f64,
    /// Mean of (method - baseline) trial counts.
    pub mean_abs: f64,
    pub median_abs: f64,
    /// Geometric mean of method/baseline ratios.
    pub geomean_rel: f64,
    pub median_rel: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn delta_stats(pairs: &[(usize, usize)], total: usize) -> DeltaStats {
    if pairs.is_empty() {
        return DeltaStats::default();
    }
    let mut abs: Vec<f64> = pairs
        .iter()
        .map(|&(b, m)| m as f64 - b as f64)
        .collect();
    let mut rel: Vec<f64> = pairs.iter().map(|&(b, m)| m as f64 / b as f64).collect();
    let mean_abs = abs.iter().sum::<f64>() / abs.len() as f64;
    let geomean_rel = (rel.iter().map(|r| r.ln()).sum::<f64>() / rel.len() as f64).exp();
    abs.sort_by(f64::total_cmp);
    rel.sort_by(f64::total_cmp);
    DeltaStats {
        count: pairs.len(),
        fraction: pairs.len() as f64 / total as f64,
        mean_abs,
        median_abs: median(&abs),
        geomean_rel,
        median_rel: median(&rel),
    }
}

/// How a localization method changed trial counts relative to a baseline,
/// over the same problem set at the same budget. The six categories
/// partition the problems; "unchanged" is reported explicitly rather than
/// silently merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDeltaReport {
    pub total: usize,
    pub improves: DeltaStats,
    pub worsens: DeltaStats,
    pub unchanged: usize,
    pub fail_to_success: usize,
    pub success_to_fail: usize,
    pub both_fail: usize,
    /// Problems in each category, for drill-down.
    pub improves_problems: Vec<String>,
    pub worsens_problems: Vec<String>,
}

impl TrialDeltaReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let pct = |n: usize| 100.0 * n as f64 / self.total.max(1) as f64;
        out.push_str(&format!("problems compared: {}\n", self.total));
        out.push_str(&format!(
            "improves number of trials   {:5.1} %  mean {:+8.1}  median {:+8.1}  geo.mean x{:.2}  median x{:.2}\n",
            100.0 * self.improves.fraction,
            self.improves.mean_abs,
            self.improves.median_abs,
            self.improves.geomean_rel,
            self.improves.median_rel,
        ));
        out.push_str(&format!(
            "failed to synthesize -> succeeds  {:5.1} %\n",
            pct(self.fail_to_success)
        ));
        out.push_str(&format!(
            "worsens number of trials    {:5.1} %  mean {:+8.1}  median {:+8.1}  geo.mean x{:.2}  median x{:.2}\n",
            100.0 * self.worsens.fraction,
            self.worsens.mean_abs,
            self.worsens.median_abs,
            self.worsens.geomean_rel,
            self.worsens.median_rel,
        ));
        out.push_str(&format!(
            "succeeded -> fails to synthesize  {:5.1} %\n",
            pct(self.success_to_fail)
        ));
        out.push_str(&format!(
            "unchanged {:5.1} %   both fail {:5.1} %\n",
            pct(self.unchanged),
            pct(self.both_fail)
        ));
        out
    }
}

/// Compare trial counts of a method against a baseline over the same
/// problems. Absolute and relative difference statistics are computed over
/// problems where both runs succeeded.
pub fn trial_delta_report(
    baseline: &[RunDigest],
    method: &[RunDigest],
) -> Result<TrialDeltaReport, EvalError> {
    let base: BTreeMap<&str, &RunDigest> =
        baseline.iter().map(|d| (d.problem.as_str(), d)).collect();
    let meth: BTreeMap<&str, &RunDigest> =
        method.iter().map(|d| (d.problem.as_str(), d)).collect();
    if base.len() != meth.len() || base.keys().ne(meth.keys()) {
        let example = base
            .keys()
            .find(|k| !meth.contains_key(*k))
            .or_else(|| meth.keys().find(|k| !base.contains_key(*k)))
            .copied()
            .unwrap_or("?")
            .to_string();
        return Err(EvalError::MismatchedProblems { example });
    }

    let total = base.len();
    let mut improves = Vec::new();
    let mut worsens = Vec::new();
    let mut improves_problems = Vec::new();
    let mut worsens_problems = Vec::new();
    let mut unchanged = 0;
    let mut fail_to_success = 0;
    let mut success_to_fail = 0;
    let mut both_fail = 0;
    for (problem, b) in &base {
        let m = meth[problem];
        match (b.accepted_trial, m.accepted_trial) {
            (Some(bt), Some(mt)) => {
                if mt < bt {
                    improves.push((bt, mt));
                    improves_problems.push(problem.to_string());
                } else if mt > bt {
                    worsens.push((bt, mt));
                    worsens_problems.push(problem.to_string());
                } else {
                    unchanged += 1;
                }
            }
            (None, Some(_)) => fail_to_success += 1,
            (Some(_), None) => success_to_fail += 1,
            (None, None) => both_fail += 1,
        }
    }
    Ok(TrialDeltaReport {
        total,
        improves: delta_stats(&improves, total),
        worsens: delta_stats(&worsens, total),
        unchanged,
        fail_to_success,
        success_to_fail,
        both_fail,
        improves_problems,
        worsens_problems,
    })
}

/// Per-line, per-rank functional correctness of candidates against a gold
/// program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCorrectnessMatrix {
    pub problem: String,
    /// cells[i][j] is true when candidate rank j+1 of line i+1, substituted
    /// into the gold program, compiles and passes public and hidden tests.
    pub cells: Vec<Vec<bool>>,
}

/// Substitute each candidate into the gold program and verify it against
/// all tests. The gold program must itself pass all tests. Run with a
/// compile-cache-enabled judge; this is an evaluation mode, not search.
pub fn line_level_accuracy(
    instance: &ProblemInstance,
    gold: &Selection,
    judge: &dyn Judge,
    max_rank: usize,
) -> Result<LineCorrectnessMatrix, EvalError> {
    if !judge.validate_full(instance, gold)? {
        return Err(EvalError::GoldFails(instance.id.clone()));
    }
    let mut cells = Vec::with_capacity(instance.line_count());
    for line in 1..=instance.line_count() {
        let list = &instance.candidate_lists[line - 1];
        let gold_code = &list.get(gold.rank_at(line)).expect("valid gold").code;
        let mut row = Vec::new();
        for cand in list.candidates.iter().take(max_rank) {
            // Textual equality with the gold line is trivially correct.
            let correct = if &cand.code == gold_code {
                true
            } else {
                let mut mutated = gold.clone();
                mutated.ranks[line - 1] = cand.rank;
                judge.validate_full(instance, &mutated)?
            };
            row.push(correct);
        }
        cells.push(row);
    }
    Ok(LineCorrectnessMatrix {
        problem: instance.id.clone(),
        cells,
    })
}

/// Fraction of lines with at least one correct candidate within each rank
/// cutoff.
pub fn accuracy_at_ranks(
    matrices: &[LineCorrectnessMatrix],
    cutoffs: &[usize],
) -> Vec<(usize, f64)> {
    let total_lines: usize = matrices.iter().map(|m| m.cells.len()).sum();
    cutoffs
        .iter()
        .map(|&k| {
            let hits: usize = matrices
                .iter()
                .flat_map(|m| &m.cells)
                .filter(|row| row.iter().take(k).any(|&c| c))
                .count();
            (k, hits as f64 / total_lines.max(1) as f64)
        })
        .collect()
}

/// Program-level counts over line-correctness matrices: per program, the
/// number of lines whose top candidate is incorrect and the number of
/// lines with no correct candidate at all; plus aggregate histograms and
/// the oracle success rate (programs where every line has some correct
/// candidate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleStats {
    /// (top-candidate-incorrect count, zero-correct count) per program.
    pub per_program: Vec<(String, usize, usize)>,
    /// histogram_top[k] = number of programs with k lines whose top
    /// candidate is incorrect.
    pub histogram_top_incorrect: BTreeMap<usize, usize>,
    pub histogram_none_correct: BTreeMap<usize, usize>,
    pub oracle_success_rate: f64,
}

pub fn oracle_stats(matrices: &[LineCorrectnessMatrix]) -> OracleStats {
    let mut per_program = Vec::new();
    let mut histogram_top_incorrect: BTreeMap<usize, usize> = BTreeMap::new();
    let mut histogram_none_correct: BTreeMap<usize, usize> = BTreeMap::new();
    let mut solvable = 0usize;
    for m in matrices {
        let top_incorrect = m
            .cells
            .iter()
            .filter(|row| !row.first().copied().unwrap_or(false))
            .count();
        let none_correct = m
            .cells
            .iter()
            .filter(|row| !row.iter().any(|&c| c))
            .count();
        *histogram_top_incorrect.entry(top_incorrect).or_insert(0) += 1;
        *histogram_none_correct.entry(none_correct).or_insert(0) += 1;
        if none_correct == 0 {
            solvable += 1;
        }
        per_program.push((m.problem.clone(), top_incorrect, none_correct));
    }
    OracleStats {
        per_program,
        histogram_top_incorrect,
        histogram_none_correct,
        oracle_success_rate: solvable as f64 / matrices.len().max(1) as f64,
    }
}
