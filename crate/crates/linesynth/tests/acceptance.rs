//! End-to-end acceptance suite. Each test prints one `criterion N ... PASS`
//! (or FAIL) line; run with `cargo test --test acceptance -- --nocapture`
//! to see them.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use linesynth::eval::{line_level_accuracy, trial_delta_report, RunDigest};
use linesynth::judge::mock::{Label, MockCandidate, MockJudge, MockLine, MockSpec, OffsetWeight};
use linesynth::judge::{CompileCheck, CompilerConfig, Judge, JudgeError, RealJudge};
use linesynth::localize::{
    ClassifierBackend, ClassifierError, ClassifierLocalizer, ClassifyRequest, ClassifyResponse,
    Localization, Localizer, NoLocalizer, PrefixPruningLocalizer, Verdict,
};
use linesynth::search::{best_first_search, SearchConfig, TraceEvent};
use linesynth::types::{
    selection_log_prob, Candidate, CandidateList, ProblemInstance, PseudocodeLine, Selection,
    TestCase, Visibility,
};

fn criterion(number: u32, name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    let result = catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("criterion {number} ({name}): PASS"),
        Err(_) => println!("criterion {number} ({name}): FAIL"),
    }
    if let Err(payload) = result {
        std::panic::resume_unwind(payload);
    }
}

// ---------------------------------------------------------------------------
// Mock-spec construction helpers.

/// Random grid with exact binary log probs (multiples of 1/8, so sums are
/// exact and ties are honest), every candidate compiling, and one correct
/// candidate per line at a random rank.
fn random_semantic_grid(rng: &mut ChaCha8Rng) -> MockSpec {
    let lines = rng.gen_range(1..=4);
    let spec_lines = (0..lines)
        .map(|_| {
            let beam = rng.gen_range(1..=5);
            let gold = rng.gen_range(1..=beam);
            let mut probs: Vec<f64> =
                (0..beam).map(|_| -0.125 * rng.gen_range(0..=16) as f64).collect();
            probs.sort_by(|a, b| b.partial_cmp(a).unwrap());
            MockLine {
                indent: 0,
                candidates: probs
                    .into_iter()
                    .enumerate()
                    .map(|(i, log_prob)| MockCandidate {
                        log_prob,
                        label: if i + 1 == gold {
                            Label::Correct
                        } else {
                            Label::SemanticBad
                        },
                        context: Vec::new(),
                    })
                    .collect(),
            }
        })
        .collect();
    MockSpec {
        version: 1,
        seed: rng.gen_range(0..1 << 32),
        offsets: vec![OffsetWeight {
            delta: 0,
            weight: 1.0,
        }],
        lines: spec_lines,
    }
}

/// Like the grid above, but some non-gold candidates break the compile
/// (context-free), exercising localization paths.
fn random_compile_grid(rng: &mut ChaCha8Rng) -> MockSpec {
    let mut spec = random_semantic_grid(rng);
    for line in &mut spec.lines {
        for cand in &mut line.candidates {
            if cand.label == Label::SemanticBad && rng.gen_bool(0.5) {
                cand.label = Label::CompileBad;
            }
        }
    }
    spec
}

fn total_selections(spec: &MockSpec) -> usize {
    spec.lines.iter().map(|l| l.candidates.len()).product()
}

/// All rank vectors in best-first order: log prob descending, ties broken
/// by lexicographically smaller rank vector.
fn exhaustive_order(instance: &ProblemInstance) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = vec![vec![]];
    for list in &instance.candidate_lists {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (1..=list.len()).map(move |r| {
                    let mut next = prefix.clone();
                    next.push(r);
                    next
                })
            })
            .collect();
    }
    all.sort_by(|a, b| {
        let pa = selection_log_prob(&Selection { ranks: a.clone() }, &instance.candidate_lists);
        let pb = selection_log_prob(&Selection { ranks: b.clone() }, &instance.candidate_lists);
        pb.partial_cmp(&pa).unwrap().then_with(|| a.cmp(b))
    });
    all
}

// ---------------------------------------------------------------------------
// Criteria 1 + 2: enumeration order and priority monotonicity.

fn criterion1_runs() -> Vec<(MockSpec, linesynth::search::SearchResult)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..200)
        .map(|i| {
            let spec = random_semantic_grid(&mut rng);
            let judge = MockJudge::new(spec.clone());
            let instance = spec.instance(format!("grid-{i}"), total_selections(&spec));
            let result = best_first_search(
                &instance,
                &judge,
                &mut NoLocalizer,
                &SearchConfig::default(),
            );
            (spec, result)
        })
        .collect()
}

#[test]
fn acceptance_1_enumeration_matches_exhaustive_oracle() {
    criterion(1, "enumeration-oracle equivalence", || {
        for (i, (spec, result)) in criterion1_runs().into_iter().enumerate() {
            let instance = spec.instance(format!("grid-{i}"), total_selections(&spec));
            let mut oracle = exhaustive_order(&instance);
            let gold = spec.gold_selection().ranks;
            let position = oracle.iter().position(|r| r == &gold).unwrap();
            oracle.truncate(position + 1);
            assert_eq!(
                result.trace.judged_selections(),
                oracle,
                "grid {i} diverged from exhaustive enumeration"
            );
        }
    });
}

#[test]
fn acceptance_2_popped_priorities_non_increasing() {
    criterion(2, "popped-priority monotonicity", || {
        for (i, (_, result)) in criterion1_runs().into_iter().enumerate() {
            let priorities: Vec<f64> = result
                .trace
                .records
                .iter()
                .filter_map(|r| match r.event {
                    TraceEvent::Judged { priority, .. } => Some(priority),
                    _ => None,
                })
                .collect();
            for pair in priorities.windows(2) {
                assert!(
                    pair[1] <= pair[0],
                    "grid {i}: priority rose from {} to {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 3: every compile is charged, and never beyond budget.

#[test]
fn acceptance_3_budget_equals_compile_calls() {
    criterion(3, "budget exactness with prefix pruning", || {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for i in 0..100 {
            let spec = random_compile_grid(&mut rng);
            let budget = rng.gen_range(1..=40);
            let judge = MockJudge::new(spec.clone());
            let instance = spec.instance(format!("fuzz-{i}"), budget);
            let mut localizer = PrefixPruningLocalizer::new();
            let result = best_first_search(
                &instance,
                &judge,
                &mut localizer,
                &SearchConfig::default(),
            );
            assert!(result.trials_used <= budget, "fuzz-{i} overspent");
            assert_eq!(
                judge.compile_calls(),
                result.trials_used as u64,
                "fuzz-{i}: compiles issued != trials charged"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 4: down-weight rebuilds never cause re-judging.

struct ForcedDownWeight {
    next_line: usize,
}

impl Localizer for ForcedDownWeight {
    fn localize(
        &mut self,
        instance: &ProblemInstance,
        _selection: &Selection,
        _reported_line: Option<usize>,
        _message: &str,
        _probe_allowance: usize,
        _judge: &dyn Judge,
    ) -> Result<Localization, JudgeError> {
        let line = self.next_line % instance.line_count() + 1;
        self.next_line += 1;
        Ok(Localization {
            verdict: Verdict::DownWeight { line },
            probes: Vec::new(),
        })
    }

    fn name(&self) -> &'static str {
        "forced-down-weight"
    }
}

#[test]
fn acceptance_4_no_selection_judged_twice() {
    criterion(4, "no re-judging across rebuilds", || {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for i in 0..100 {
            let spec = random_compile_grid(&mut rng);
            let judge = MockJudge::new(spec.clone());
            let instance = spec.instance(format!("rejudge-{i}"), total_selections(&spec) + 10);
            let mut localizer = ForcedDownWeight { next_line: 0 };
            let result = best_first_search(
                &instance,
                &judge,
                &mut localizer,
                &SearchConfig::default(),
            );
            let judged = result.trace.judged_selections();
            let unique: HashSet<&Vec<usize>> = judged.iter().collect();
            assert_eq!(unique.len(), judged.len(), "rejudge-{i} judged twice");
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 5: pruning soundness for context-free offenders.

#[test]
fn acceptance_5_gold_never_blacklisted() {
    criterion(5, "prefix-pruning soundness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for i in 0..100 {
            let spec = random_compile_grid(&mut rng);
            let gold = spec.gold_selection();
            let judge = MockJudge::new(spec.clone());
            // Budget comfortably above the whole space: the gold position
            // is always within budget, so the run must accept.
            let instance =
                spec.instance(format!("sound-{i}"), 2 * total_selections(&spec) + 10);
            let mut localizer = PrefixPruningLocalizer::new();
            let result = best_first_search(
                &instance,
                &judge,
                &mut localizer,
                &SearchConfig::default(),
            );
            for record in &result.trace.records {
                if let TraceEvent::Judged {
                    verdict: Some(Verdict::BlacklistPrefix { prefix_len }),
                    ..
                } = record.event
                {
                    let prefix = &record.ranks[..prefix_len];
                    assert!(
                        !gold.ranks.starts_with(prefix),
                        "sound-{i}: gold extends blacklisted prefix {prefix:?}"
                    );
                }
            }
            assert!(result.accepted(), "sound-{i}: gold reachable but not found");
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 6: offset-noise calibration.

#[test]
fn acceptance_6_offset_mismatch_rate() {
    criterion(6, "reported-line mismatch rate 21.7% +/- 1%", || {
        // Ten lines, the offender in the middle so clamping never kicks in.
        let mut base = MockSpec {
            version: 1,
            seed: 0,
            offsets: linesynth::judge::mock::default_offsets(),
            lines: (0..10)
                .map(|i| MockLine {
                    indent: 0,
                    candidates: vec![
                        MockCandidate {
                            log_prob: 0.0,
                            label: if i == 4 { Label::CompileBad } else { Label::Correct },
                            context: Vec::new(),
                        },
                        MockCandidate {
                            log_prob: -1.0,
                            label: Label::Correct,
                            context: Vec::new(),
                        },
                    ],
                })
                .collect(),
        };
        let selection = Selection::top_one(10);
        let draws = 10_000;
        let mut mismatches = 0usize;
        for seed in 0..draws {
            base.seed = seed;
            let judge = MockJudge::new(base.clone());
            let instance = base.instance("offsets", 1);
            match judge.compile_selection(&instance, &selection).unwrap() {
                CompileCheck::Err {
                    logical_line: Some(reported),
                    ..
                } => {
                    if reported != 5 {
                        mismatches += 1;
                    }
                }
                other => panic!("expected a mapped compile error, got {other:?}"),
            }
        }
        let rate = mismatches as f64 / draws as f64;
        assert!(
            (rate - 0.217).abs() <= 0.01,
            "mismatch rate {rate:.4} outside 21.7% +/- 1%"
        );
    });
}

// ---------------------------------------------------------------------------
// Criterion 7: qualitative comparison table at desk scale.

#[test]
fn acceptance_7_benchmark_comparison_shape() {
    criterion(7, "pruning-vs-none comparison shape", || {
        let cfg = linesynth::bench::BenchConfig {
            problems: 50,
            seed: 7,
            ..linesynth::bench::BenchConfig::default()
        };
        let specs = linesynth::bench::generate(&cfg);
        let base = linesynth::bench::run_method(&specs, "none", cfg.budget, 0.1, 0.95);
        let pruned = linesynth::bench::run_method(&specs, "prefix", cfg.budget, 0.1, 0.95);
        let report = trial_delta_report(&base, &pruned).unwrap();

        assert!(!report.worsens_problems.is_empty(), "no worsened problems");
        assert!(!report.improves_problems.is_empty(), "no improved problems");
        let dominated = |ids: &[String], tag: &str| {
            ids.iter().filter(|id| id.starts_with(tag)).count() * 2 > ids.len()
        };
        assert!(
            dominated(&report.worsens_problems, "shallow"),
            "worsens not dominated by easy problems: {:?}",
            report.worsens_problems
        );
        assert!(
            dominated(&report.improves_problems, "deep"),
            "improves not dominated by hard problems: {:?}",
            report.improves_problems
        );

        // Median relative trials on the hard subset improves by >= 20%.
        let mut ratios: Vec<f64> = base
            .iter()
            .zip(&pruned)
            .filter(|(b, _)| b.problem.starts_with("deep"))
            .filter_map(|(b, p)| match (b.accepted_trial, p.accepted_trial) {
                (Some(bt), Some(pt)) => Some(pt as f64 / bt as f64),
                _ => None,
            })
            .collect();
        assert!(!ratios.is_empty(), "no hard problems solved by both");
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        assert!(
            median <= 0.8,
            "hard-subset median relative trials {median:.2} > 0.8"
        );
    });
}

// ---------------------------------------------------------------------------
// Criterion 8: regression fixtures for the two failure-mode anecdotes.

struct ConfidentReportedLine;

impl ClassifierBackend for ConfidentReportedLine {
    fn classify(&mut self, request: &ClassifyRequest) -> Result<ClassifyResponse, ClassifierError> {
        Ok(ClassifyResponse {
            line: request.error_line,
            confidence: 0.99,
        })
    }
}

#[test]
fn acceptance_8_failure_mode_fixtures() {
    criterion(8, "regression fixtures for localization failure modes", || {
        // Two high-probability context-free offenders on one line: every
        // selection through them fails, and a single blacklisted length-1
        // prefix removes each wholesale.
        let repeat_offender = MockSpec {
            version: 1,
            seed: 1,
            offsets: vec![OffsetWeight { delta: 0, weight: 1.0 }],
            lines: vec![
                MockLine {
                    indent: 0,
                    candidates: vec![
                        MockCandidate { log_prob: -0.05, label: Label::CompileBad, context: vec![] },
                        MockCandidate { log_prob: -0.10, label: Label::CompileBad, context: vec![] },
                        MockCandidate { log_prob: -2.00, label: Label::Correct, context: vec![] },
                    ],
                },
                MockLine {
                    indent: 0,
                    candidates: (0..4)
                        .map(|i| MockCandidate {
                            log_prob: -0.4 * i as f64,
                            label: if i == 0 { Label::Correct } else { Label::SemanticBad },
                            context: vec![],
                        })
                        .collect(),
                },
            ],
        };
        let budget = 60;
        let judge = MockJudge::new(repeat_offender.clone());
        let instance = repeat_offender.instance("repeat_offender", budget);
        let none = best_first_search(&instance, &judge, &mut NoLocalizer, &SearchConfig::default());
        let judge = MockJudge::new(repeat_offender.clone());
        let mut pruning = PrefixPruningLocalizer::new();
        let pruned = best_first_search(&instance, &judge, &mut pruning, &SearchConfig::default());
        assert!(none.accepted() && pruned.accepted(), "repeat_offender runs must accept");
        assert!(
            pruned.trials_used < none.trials_used,
            "pruning used {} trials, none used {}",
            pruned.trials_used,
            none.trials_used
        );

        // Off-by-one reporting plus a classifier that confidently blames
        // the reported line: it keeps punishing an innocent line's gold
        // candidate and exhausts the budget that plain enumeration does
        // not need.
        let misled = MockSpec {
            version: 1,
            seed: 2,
            // Reported line is always one past the true offender.
            offsets: vec![OffsetWeight { delta: 1, weight: 1.0 }],
            lines: vec![
                MockLine {
                    indent: 0,
                    candidates: vec![MockCandidate {
                        log_prob: 0.0,
                        label: Label::Correct,
                        context: vec![],
                    }],
                },
                MockLine {
                    indent: 0,
                    candidates: vec![
                        MockCandidate { log_prob: -0.1, label: Label::CompileBad, context: vec![] },
                        MockCandidate { log_prob: -0.7, label: Label::Correct, context: vec![] },
                    ],
                },
                MockLine {
                    indent: 0,
                    candidates: (0..6)
                        .map(|i| MockCandidate {
                            log_prob: -0.4 * i as f64,
                            label: if i == 0 { Label::Correct } else { Label::SemanticBad },
                            context: vec![],
                        })
                        .collect(),
                },
            ],
        };
        let budget = 6;
        let judge = MockJudge::new(misled.clone());
        let instance = misled.instance("misled", budget);
        let none = best_first_search(&instance, &judge, &mut NoLocalizer, &SearchConfig::default());
        assert!(none.accepted(), "misled: enumeration should succeed in budget");

        let judge = MockJudge::new(misled.clone());
        let mut classifier =
            ClassifierLocalizer::new(Box::new(ConfidentReportedLine), 0.95);
        let classified =
            best_first_search(&instance, &judge, &mut classifier, &SearchConfig::default());
        assert!(
            !classified.accepted(),
            "misled: confident wrong classifier should fail within budget"
        );
    });
}

// ---------------------------------------------------------------------------
// Criteria 9 + 10: real-compiler fixtures.

fn instance_from_rows(
    id: &str,
    rows: &[(&str, usize, Vec<(&str, f64)>)],
    tests: Vec<TestCase>,
    budget: usize,
) -> ProblemInstance {
    let lines = rows
        .iter()
        .enumerate()
        .map(|(i, (text, indent, _))| PseudocodeLine {
            index: i + 1,
            text: text.to_string(),
            indent: *indent,
        })
        .collect();
    let candidate_lists = rows
        .iter()
        .enumerate()
        .map(|(i, (_, _, cands))| CandidateList {
            line_index: i + 1,
            candidates: cands
                .iter()
                .enumerate()
                .map(|(j, (code, log_prob))| Candidate {
                    code: code.to_string(),
                    log_prob: *log_prob,
                    rank: j + 1,
                })
                .collect(),
        })
        .collect();
    let instance = ProblemInstance {
        id: id.to_string(),
        lines,
        candidate_lists,
        tests,
        budget,
    };
    instance.validate().expect("fixture is well-formed");
    instance
}

fn public_test(input: &str, output: &str) -> TestCase {
    TestCase {
        input: input.as_bytes().to_vec(),
        expected_output: output.as_bytes().to_vec(),
        visibility: Visibility::Public,
    }
}

/// Selection sort, line-by-line, as a fixture with hand-written candidate
/// lists. `decoy_line`, when set, moves that line's working candidate to
/// rank 2 behind a broken rank 1.
fn sort_fixture(decoy_line: Option<usize>, budget: usize) -> ProblemInstance {
    let gold: [(&str, usize, &str); 12] = [
        ("in function main", 0, "int main() {"),
        ("let n be integer", 1, "int n;"),
        ("read n", 1, "cin >> n;"),
        ("let A be vector of integers", 1, "vector<int> A;"),
        ("set size of A = n", 1, "A.resize(n);"),
        ("read n elements into A", 1, "for(int i = 0; i < A.size(); i++) cin >> A[i];"),
        ("for all elements in A", 1, "for(int i = 0; i < A.size(); i++) {"),
        ("set min_i to i", 2, "int min_i = i;"),
        ("for j = i + 1 to size of A exclusive", 2, "for(int j = i+1; j < A.size(); j++) {"),
        ("set min_i to j if A[min_i] > A[j]", 3, "if(A[min_i] > A[j]) { min_i = j; }"),
        ("swap A[i], A[min_i]", 2, "swap(A[i], A[min_i]);"),
        ("print all elements of A", 1, "for(int i=0; i<A.size(); i++) cout<<A[i]<<\" \";"),
    ];
    let rows: Vec<(&str, usize, Vec<(&str, f64)>)> = gold
        .iter()
        .enumerate()
        .map(|(i, (text, indent, code))| {
            let cands = if decoy_line == Some(i + 1) {
                vec![("cin >> n", -0.2), (*code, -0.5)]
            } else {
                vec![(*code, 0.0)]
            };
            (*text, *indent, cands)
        })
        .collect();
    instance_from_rows(
        "selection-sort",
        &rows,
        vec![public_test("5 3 2 4 1 5", "1 2 3 4 5")],
        budget,
    )
}

fn real_judge_or_skip() -> Option<RealJudge> {
    let cfg = CompilerConfig::default();
    if RealJudge::compiler_available(&cfg) {
        Some(RealJudge::new(cfg))
    } else {
        None
    }
}

#[test]
fn acceptance_9_real_compiler_smoke() {
    criterion(9, "real-compiler selection-sort fixture", || {
        let Some(judge) = real_judge_or_skip() else {
            println!("criterion 9: no compiler available, skipping");
            return;
        };
        let instance = sort_fixture(None, 10);
        let result =
            best_first_search(&instance, &judge, &mut NoLocalizer, &SearchConfig::default());
        let digest = RunDigest::from_result("selection-sort", "none", 10, &result);
        assert_eq!(digest.accepted_trial, Some(1), "gold-at-rank-1 run");

        let judge = real_judge_or_skip().unwrap();
        let instance = sort_fixture(Some(3), 10);
        let result =
            best_first_search(&instance, &judge, &mut NoLocalizer, &SearchConfig::default());
        let digest = RunDigest::from_result("selection-sort", "none", 10, &result);
        let trial = digest.accepted_trial.expect("variant run accepts");
        assert!(trial <= 3, "variant accepted at trial {trial} > 3");
    });
}

#[test]
fn acceptance_10_line_level_equivalence() {
    criterion(10, "line-level functional equivalence", || {
        let Some(judge) = real_judge_or_skip() else {
            println!("criterion 10: no compiler available, skipping");
            return;
        };
        let rows: Vec<(&str, usize, Vec<(&str, f64)>)> = vec![
            ("in function main", 0, vec![("int main() {", 0.0)]),
            ("read integer x", 1, vec![("int x; cin >> x;", 0.0)]),
            ("let b = whether x is positive", 1, vec![("bool b = x > 0;", 0.0)]),
            (
                "print 1 if b else 0",
                1,
                vec![
                    ("if (b == true) cout << 1 << endl; else cout << 0 << endl;", -0.1),
                    ("if (b) cout << 1 << endl; else cout << 0 << endl;", -0.4),
                ],
            ),
            ("return 0", 1, vec![("return 0;", 0.0)]),
        ];
        let mut tests = vec![public_test("5", "1")];
        tests.push(TestCase {
            input: b"-3".to_vec(),
            expected_output: b"0".to_vec(),
            visibility: Visibility::Hidden,
        });
        let instance = instance_from_rows("equiv", &rows, tests, 10);
        let gold = Selection::top_one(5);
        let matrix = line_level_accuracy(&instance, &gold, &judge, 2).unwrap();
        assert!(
            matrix.cells[3][1],
            "textually different but equivalent candidate not marked correct"
        );
    });
}
