//! Budget-limited best-first search over candidate combinations with
//! localization hooks.
//!
//! The frontier holds selections ordered by effective log probability.
//! Each popped selection costs one trial to judge; compile failures are
//! handed to the localizer, whose verdict either down-weights a candidate
//! (followed by a heap rebuild) or blacklists a rank-vector prefix.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assemble::AssembledSource;
use crate::judge::{Judge, JudgeError};
use crate::localize::{Localizer, Verdict};
use crate::types::{
    effective_log_prob, selection_log_prob, CandidateList, DownWeightTable, ProblemInstance,
    Selection, TrialOutcome,
};

pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Down-weight factor, in (0, 1).
    pub alpha: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Trie over rank-vector prefixes pruned from search. A stored prefix
/// prunes all its extensions; inserting a prefix of an existing entry
/// collapses the subtree (shorter wins).
#[derive(Debug, Default)]
pub struct PrefixBlacklist {
    root: TrieNode,
    len: usize,
}

#[derive(Debug, Default)]
struct TrieNode {
    terminal: bool,
    children: HashMap<usize, TrieNode>,
}

impl PrefixBlacklist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of stored prefixes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, prefix: &[usize]) {
        assert!(!prefix.is_empty(), "cannot blacklist the empty prefix");
        let mut node = &mut self.root;
        for &rank in prefix {
            if node.terminal {
                return; // a stored shorter prefix already covers this one
            }
            node = node.children.entry(rank).or_default();
        }
        if !node.terminal {
            // Drop any longer stored prefixes this one subsumes.
            let dropped = count_terminals(node);
            node.terminal = true;
            node.children.clear();
            self.len = self.len - dropped + 1;
        }
    }

    /// True when `ranks` extends (or equals) any stored prefix.
    pub fn is_pruned(&self, ranks: &[usize]) -> bool {
        let mut node = &self.root;
        for rank in ranks {
            if node.terminal {
                return true;
            }
            match node.children.get(rank) {
                Some(child) => node = child,
                None => return false,
            }
        }
        node.terminal
    }

    /// All stored prefixes, for traces and tests.
    pub fn prefixes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![(&self.root, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if node.terminal {
                out.push(path.clone());
            }
            for (&rank, child) in &node.children {
                let mut next = path.clone();
                next.push(rank);
                stack.push((child, next));
            }
        }
        out
    }
}

fn count_terminals(node: &TrieNode) -> usize {
    node.terminal as usize
        + node
            .children
            .values()
            .map(count_terminals)
            .sum::<usize>()
}

struct HeapEntry {
    priority: f64,
    selection: Selection,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on priority; ties broken by lexicographically smaller
        // rank vector first, for deterministic, reproducible traces.
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.selection.ranks.cmp(&self.selection.ranks))
    }
}

/// Max-heap of selections keyed by effective log probability, with a
/// membership set so no selection is ever enqueued twice.
pub struct Frontier {
    heap: BinaryHeap<HeapEntry>,
    enqueued: HashSet<Selection>,
}

impl Frontier {
    pub fn new() -> Self {
        Frontier {
            heap: BinaryHeap::new(),
            enqueued: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, selection: &Selection) -> bool {
        self.enqueued.contains(selection)
    }

    /// Insert unless already enqueued. Returns whether it was inserted.
    pub fn push(&mut self, selection: Selection, priority: f64) -> bool {
        if !self.enqueued.insert(selection.clone()) {
            return false;
        }
        self.heap.push(HeapEntry {
            priority,
            selection,
        });
        true
    }

    pub fn pop(&mut self) -> Option<(f64, Selection)> {
        let entry = self.heap.pop()?;
        self.enqueued.remove(&entry.selection);
        Some((entry.priority, entry.selection))
    }

    /// Re-prioritize every entry under the current down-weight table,
    /// dropping explored and blacklisted entries. Called after a
    /// down-weight is applied, since that changes heap indices.
    pub fn rebuild(
        &mut self,
        lists: &[CandidateList],
        weights: &DownWeightTable,
        explored: &HashSet<Selection>,
        blacklist: &PrefixBlacklist,
    ) {
        let entries = std::mem::take(&mut self.heap);
        self.enqueued.clear();
        for entry in entries {
            let sel = entry.selection;
            if explored.contains(&sel) || blacklist.is_pruned(&sel.ranks) {
                continue;
            }
            let priority = effective_log_prob(&sel, lists, weights);
            self.enqueued.insert(sel.clone());
            self.heap.push(HeapEntry {
                priority,
                selection: sel,
            });
        }
    }
}

impl Default for Frontier {
    fn default() -> Self {
        Self::new()
    }
}

/// Push every single-rank-increment successor of `selection` that is not
/// explored, already enqueued, or prefix-blacklisted.
pub fn push_successors(
    frontier: &mut Frontier,
    explored: &HashSet<Selection>,
    blacklist: &PrefixBlacklist,
    selection: &Selection,
    lists: &[CandidateList],
    weights: &DownWeightTable,
) {
    for line in 1..=lists.len() {
        if let Some(succ) = selection.bump(line, lists) {
            if explored.contains(&succ) || blacklist.is_pruned(&succ.ranks) {
                continue;
            }
            let priority = effective_log_prob(&succ, lists, weights);
            frontier.push(succ, priority);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchStatus {
    Accepted,
    BudgetExhausted,
    SpaceExhausted,
    /// Judge infrastructure failure; outside the synthesis taxonomy.
    Aborted { reason: String },
}

/// One line-delimited trace record: a full trial, a localization probe, or
/// a skipped pop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Judged {
        priority: f64,
        outcome: TrialOutcome,
        #[serde(skip_serializing_if = "Option::is_none")]
        verdict: Option<Verdict>,
    },
    Probed {
        prefix_len: usize,
        compiled: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based compile index; probes and full trials share the counter.
    pub trial: usize,
    pub ranks: Vec<usize>,
    pub budget_remaining: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Ordered record of a run's trials, verdicts, and budget spend; the basis
/// for metrics and replay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub records: Vec<TraceRecord>,
}

impl SearchTrace {
    /// Serialize as line-delimited JSON.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SearchTrace { records })
    }

    /// Rank vectors of full-program trials, in judging order.
    pub fn judged_selections(&self) -> Vec<Vec<usize>> {
        self.records
            .iter()
            .filter(|r| matches!(r.event, TraceEvent::Judged { .. }))
            .map(|r| r.ranks.clone())
            .collect()
    }

    /// 1-based trial index of the accepting trial, if any.
    pub fn accepted_trial(&self) -> Option<usize> {
        self.records.iter().find_map(|r| match &r.event {
            TraceEvent::Judged {
                outcome: TrialOutcome::Accepted,
                ..
            } => Some(r.trial),
            _ => None,
        })
    }
}

#[derive(Debug)]
pub struct SearchResult {
    pub status: SearchStatus,
    /// The accepted program; on exhaustion, the best-probability compiling
    /// program seen, falling back to the top-one translation.
    pub program: Option<AssembledSource>,
    pub trials_used: usize,
    pub trace: SearchTrace,
}

impl SearchResult {
    pub fn accepted(&self) -> bool {
        self.status == SearchStatus::Accepted
    }
}

/// Run budget-limited best-first search over `instance` with the given
/// judge and localizer. Strictly sequential and deterministic given a
/// deterministic judge.
pub fn best_first_search(
    instance: &ProblemInstance,
    judge: &dyn Judge,
    localizer: &mut dyn Localizer,
    config: &SearchConfig,
) -> SearchResult {
    instance.validate().expect("valid problem instance");
    let budget = instance.budget;
    let lists = &instance.candidate_lists;
    let mut weights = DownWeightTable::new(config.alpha);
    let mut explored: HashSet<Selection> = HashSet::new();
    let mut blacklist = PrefixBlacklist::new();
    let mut frontier = Frontier::new();
    let mut trace = SearchTrace::default();
    let mut trials_used = 0usize;
    // Best compiling selection seen, by base log prob, for the exhaustion
    // fallback.
    let mut best_compiled: Option<(f64, Selection)> = None;

    let seed = Selection::top_one(instance.line_count());
    let seed_priority = effective_log_prob(&seed, lists, &weights);
    frontier.push(seed, seed_priority);

    let exhausted = |status: SearchStatus,
                     trials_used: usize,
                     trace: SearchTrace,
                     best: Option<(f64, Selection)>| {
        let fallback = best
            .map(|(_, sel)| sel)
            .unwrap_or_else(|| Selection::top_one(instance.line_count()));
        let program = judge.assemble(instance, &fallback).ok();
        SearchResult {
            status,
            program,
            trials_used,
            trace,
        }
    };

    loop {
        let Some((priority, selection)) = frontier.pop() else {
            return exhausted(
                SearchStatus::SpaceExhausted,
                trials_used,
                trace,
                best_compiled,
            );
        };
        if explored.contains(&selection) || blacklist.is_pruned(&selection.ranks) {
            explored.insert(selection);
            continue;
        }
        if trials_used >= budget {
            return exhausted(
                SearchStatus::BudgetExhausted,
                trials_used,
                trace,
                best_compiled,
            );
        }
        explored.insert(selection.clone());
        trials_used += 1;
        let outcome = match judge.run_trial(instance, &selection) {
            Ok(outcome) => outcome,
            Err(JudgeError::Infra(reason)) => {
                trace.records.push(TraceRecord {
                    trial: trials_used,
                    ranks: selection.ranks.clone(),
                    budget_remaining: budget - trials_used,
                    event: TraceEvent::Judged {
                        priority,
                        outcome: TrialOutcome::RuntimeError,
                        verdict: None,
                    },
                });
                return SearchResult {
                    status: SearchStatus::Aborted { reason },
                    program: None,
                    trials_used,
                    trace,
                };
            }
            Err(err) => {
                return SearchResult {
                    status: SearchStatus::Aborted {
                        reason: err.to_string(),
                    },
                    program: None,
                    trials_used,
                    trace,
                };
            }
        };

        match outcome {
            TrialOutcome::Accepted => {
                trace.records.push(TraceRecord {
                    trial: trials_used,
                    ranks: selection.ranks.clone(),
                    budget_remaining: budget - trials_used,
                    event: TraceEvent::Judged {
                        priority,
                        outcome: TrialOutcome::Accepted,
                        verdict: None,
                    },
                });
                let program = judge.assemble(instance, &selection).ok();
                return SearchResult {
                    status: SearchStatus::Accepted,
                    program,
                    trials_used,
                    trace,
                };
            }
            TrialOutcome::CompileError {
                reported_logical_line,
                message,
            } => {
                let allowance = budget - trials_used;
                let localization = match localizer.localize(
                    instance,
                    &selection,
                    reported_logical_line,
                    &message,
                    allowance,
                    judge,
                ) {
                    Ok(loc) => loc,
                    Err(err) => {
                        return SearchResult {
                            status: SearchStatus::Aborted {
                                reason: err.to_string(),
                            },
                            program: None,
                            trials_used,
                            trace,
                        };
                    }
                };
                let trial_index = trials_used;
                trace.records.push(TraceRecord {
                    trial: trial_index,
                    ranks: selection.ranks.clone(),
                    budget_remaining: budget - trials_used,
                    event: TraceEvent::Judged {
                        priority,
                        outcome: TrialOutcome::CompileError {
                            reported_logical_line,
                            message,
                        },
                        verdict: Some(localization.verdict),
                    },
                });
                for &(prefix_len, compiled) in &localization.probes {
                    trials_used += 1;
                    trace.records.push(TraceRecord {
                        trial: trials_used,
                        ranks: selection.ranks[..prefix_len].to_vec(),
                        budget_remaining: budget - trials_used,
                        event: TraceEvent::Probed {
                            prefix_len,
                            compiled,
                        },
                    });
                }
                match localization.verdict {
                    Verdict::DownWeight { line } => {
                        weights.bump(line, selection.rank_at(line));
                        frontier.rebuild(lists, &weights, &explored, &blacklist);
                    }
                    Verdict::BlacklistPrefix { prefix_len } => {
                        blacklist.insert(&selection.ranks[..prefix_len]);
                    }
                    Verdict::Abstain => {}
                }
                push_successors(
                    &mut frontier,
                    &explored,
                    &blacklist,
                    &selection,
                    lists,
                    &weights,
                );
            }
            other => {
                // Compiled but failed tests: remember it for the fallback.
                let base = selection_log_prob(&selection, lists);
                if best_compiled
                    .as_ref()
                    .map(|(b, _)| base > *b)
                    .unwrap_or(true)
                {
                    best_compiled = Some((base, selection.clone()));
                }
                trace.records.push(TraceRecord {
                    trial: trials_used,
                    ranks: selection.ranks.clone(),
                    budget_remaining: budget - trials_used,
                    event: TraceEvent::Judged {
                        priority,
                        outcome: other,
                        verdict: None,
                    },
                });
                push_successors(
                    &mut frontier,
                    &explored,
                    &blacklist,
                    &selection,
                    lists,
                    &weights,
                );
            }
        }
    }
}
