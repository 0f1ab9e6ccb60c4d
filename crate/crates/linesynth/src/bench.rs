//! Synthetic benchmark generation for the `simulate` command.
//!
//! Generates deterministic mock-compiler problem sets that exercise the
//! regimes where localization strategies differ:
//!
//! - "shallow" problems: the lone compile-breaking candidate sits on the
//!   last line, so a failing prefix is only ever established at full
//!   length and probing is pure overhead;
//! - "deep" problems: the first line's top-ranked candidates all break the
//!   compile, so plain enumeration keeps re-trying them in combination
//!   while a blacklisted length-1 prefix removes each in one stroke.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::RunDigest;
use crate::judge::mock::{Label, MockCandidate, MockJudge, MockLine, MockSpec, OffsetWeight};
use crate::localize::localizer_by_name;
use crate::search::{best_first_search, SearchConfig};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub problems: usize,
    pub seed: u64,
    pub lines: usize,
    pub beam: usize,
    pub budget: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            problems: 50,
            seed: 0,
            lines: 10,
            beam: 5,
            budget: 200,
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-0.01..0.01)
}

/// A line whose candidates are all semantically plausible: gold at rank 1,
/// alternatives trailing by ~`gap` per rank.
fn plain_line(rng: &mut ChaCha8Rng, beam: usize, gap: f64) -> MockLine {
    let candidates = (0..beam)
        .map(|i| MockCandidate {
            log_prob: -(i as f64) * gap + jitter(rng),
            label: if i == 0 {
                Label::Correct
            } else {
                Label::SemanticBad
            },
            context: Vec::new(),
        })
        .collect();
    let mut line = MockLine {
        indent: 0,
        candidates,
    };
    clamp_nonpositive(&mut line);
    line
}

fn clamp_nonpositive(line: &mut MockLine) {
    for c in &mut line.candidates {
        c.log_prob = c.log_prob.min(0.0);
    }
}

/// Shallow scenario: only the final line can break the compile, and only
/// at rank 1. The first failing prefix has full length, so pruning spends
/// probes to learn what the failed trial already proved.
pub fn shallow_spec(rng: &mut ChaCha8Rng, cfg: &BenchConfig) -> MockSpec {
    let mut lines: Vec<MockLine> = (0..cfg.lines - 1)
        .map(|_| plain_line(rng, cfg.beam, 0.4))
        .collect();
    let mut last = MockLine {
        indent: 0,
        candidates: vec![
            MockCandidate {
                log_prob: jitter(rng),
                label: Label::CompileBad,
                context: Vec::new(),
            },
            MockCandidate {
                log_prob: -0.3 + jitter(rng),
                label: Label::Correct,
                context: Vec::new(),
            },
        ],
    };
    clamp_nonpositive(&mut last);
    lines.push(last);
    for line in &mut lines {
        clamp_nonpositive(line);
    }
    MockSpec {
        version: 1,
        seed: rng.gen_range(0..u32::MAX as u64),
        // Exact reporting keeps the scenarios about probe economics, not
        // localization accuracy.
        offsets: vec![OffsetWeight {
            delta: 0,
            weight: 1.0,
        }],
        lines,
    }
}

/// Deep scenario: the first line's top ranks all break the compile and the
/// working candidate is far down, while later lines offer closely-ranked
/// alternatives that enumeration happily recombines.
pub fn deep_spec(rng: &mut ChaCha8Rng, cfg: &BenchConfig) -> MockSpec {
    let bad = 3.min(cfg.beam - 1);
    let mut first = MockLine {
        indent: 0,
        candidates: (0..cfg.beam)
            .map(|i| {
                if i < bad {
                    MockCandidate {
                        log_prob: -0.05 * (i as f64 + 1.0) + jitter(rng),
                        label: Label::CompileBad,
                        context: Vec::new(),
                    }
                } else {
                    MockCandidate {
                        log_prob: -2.0 - 1.0 * (i - bad) as f64 + jitter(rng),
                        label: if i == bad {
                            Label::Correct
                        } else {
                            Label::SemanticBad
                        },
                        context: Vec::new(),
                    }
                }
            })
            .collect(),
    };
    clamp_nonpositive(&mut first);
    let mut lines = vec![first];
    for _ in 1..cfg.lines {
        lines.push(plain_line(rng, cfg.beam, 1.0));
    }
    MockSpec {
        version: 1,
        seed: rng.gen_range(0..u32::MAX as u64),
        offsets: vec![OffsetWeight {
            delta: 0,
            weight: 1.0,
        }],
        lines,
    }
}

/// Alternating shallow/deep problems, deterministic in `cfg.seed`.
pub fn generate(cfg: &BenchConfig) -> Vec<(String, MockSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.problems)
        .map(|i| {
            if i % 2 == 0 {
                (format!("deep-{i:03}"), deep_spec(&mut rng, cfg))
            } else {
                (format!("shallow-{i:03}"), shallow_spec(&mut rng, cfg))
            }
        })
        .collect()
}

/// Run one strategy over a generated set, producing per-problem digests.
pub fn run_method(
    specs: &[(String, MockSpec)],
    method: &str,
    budget: usize,
    alpha: f64,
    threshold: f64,
) -> Vec<RunDigest> {
    let config = SearchConfig { alpha };
    specs
        .iter()
        .map(|(id, spec)| {
            let judge = MockJudge::new(spec.clone());
            let instance = spec.instance(id.clone(), budget);
            let mut localizer =
                localizer_by_name(method, threshold, None).expect("known method name");
            let result = best_first_search(&instance, &judge, localizer.as_mut(), &config);
            RunDigest::from_result(id, method, budget, &result)
        })
        .collect()
}
