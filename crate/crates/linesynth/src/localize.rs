//! Error localization: strategies that turn a compile failure into a
//! search verdict, the external-classifier adapter and its wire protocol,
//! and the training-data generator for classifiers.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{CompileCheck, Judge, JudgeError};
use crate::types::{ProblemInstance, Selection};

/// What the search engine should do about a compile failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// Multiply the probability of line `line`'s current candidate by
    /// alpha and rebuild the heap.
    DownWeight { line: usize },
    /// Blacklist the first `prefix_len` ranks of the failing selection.
    BlacklistPrefix { prefix_len: usize },
    Abstain,
}

/// A verdict plus the compile probes it consumed, for budget accounting
/// and tracing.
#[derive(Debug, Clone)]
pub struct Localization {
    pub verdict: Verdict,
    /// (prefix length, compiled) per probe actually issued, in order.
    pub probes: Vec<(usize, bool)>,
}

impl Localization {
    fn verdict(verdict: Verdict) -> Self {
        Localization {
            verdict,
            probes: Vec::new(),
        }
    }

    pub fn probes_used(&self) -> usize {
        self.probes.len()
    }
}

/// A localization strategy. Localizers never mutate search state directly;
/// only the returned verdict does, applied by the engine. Strategies other
/// than prefix probing use zero probes.
pub trait Localizer {
    fn localize(
        &mut self,
        instance: &ProblemInstance,
        selection: &Selection,
        reported_line: Option<usize>,
        message: &str,
        probe_allowance: usize,
        judge: &dyn Judge,
    ) -> Result<Localization, JudgeError>;

    fn name(&self) -> &'static str;
}

/// No localization: always abstain.
pub struct NoLocalizer;

impl Localizer for NoLocalizer {
    fn localize(
        &mut self,
        _instance: &ProblemInstance,
        _selection: &Selection,
        _reported_line: Option<usize>,
        _message: &str,
        _probe_allowance: usize,
        _judge: &dyn Judge,
    ) -> Result<Localization, JudgeError> {
        Ok(Localization::verdict(Verdict::Abstain))
    }

    fn name(&self) -> &'static str {
        "none"
    }
}

/// Baseline: down-weight the reported error line as-is; abstain when the
/// error did not map to a logical line.
pub struct ReportedLineLocalizer;

impl Localizer for ReportedLineLocalizer {
    fn localize(
        &mut self,
        _instance: &ProblemInstance,
        _selection: &Selection,
        reported_line: Option<usize>,
        _message: &str,
        _probe_allowance: usize,
        _judge: &dyn Judge,
    ) -> Result<Localization, JudgeError> {
        Ok(Localization::verdict(match reported_line {
            Some(line) => Verdict::DownWeight { line },
            None => Verdict::Abstain,
        }))
    }

    fn name(&self) -> &'static str {
        "reported"
    }
}

/// Prefix-based pruning: probe the completed prefixes of lengths
/// `reported - 2`, `reported - 1`, `reported` (clamped to >= 1,
/// deduplicated), shortest first so the returned prefix is minimal among
/// probed lengths. Each probe compiles once and charges one trial.
/// Blacklists at the first failing prefix; abstains if every probed prefix
/// compiles or the allowance runs out.
pub struct PrefixPruningLocalizer {
    /// Probe results memoized per rank-vector prefix; the same prefix is
    /// never compiled twice in a run.
    memo: HashMap<Vec<usize>, bool>,
}

impl PrefixPruningLocalizer {
    pub fn new() -> Self {
        PrefixPruningLocalizer {
            memo: HashMap::new(),
        }
    }
}

impl Default for PrefixPruningLocalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Localizer for PrefixPruningLocalizer {
    fn localize(
        &mut self,
        instance: &ProblemInstance,
        selection: &Selection,
        reported_line: Option<usize>,
        _message: &str,
        probe_allowance: usize,
        judge: &dyn Judge,
    ) -> Result<Localization, JudgeError> {
        let Some(reported) = reported_line else {
            return Ok(Localization::verdict(Verdict::Abstain));
        };
        let line_count = instance.line_count();
        let reported = reported.min(line_count);
        let mut lengths: Vec<usize> = [2usize, 1, 0]
            .iter()
            .map(|&d| reported.saturating_sub(d).max(1))
            .collect();
        lengths.sort_unstable();
        lengths.dedup();

        let mut probes = Vec::new();
        for len in lengths {
            let key = selection.ranks[..len].to_vec();
            let compiled = match self.memo.get(&key) {
                Some(&hit) => hit,
                None if len == line_count => {
                    // The full program was the failing trial that brought us
                    // here; its completion is byte-identical, no probe needed.
                    self.memo.insert(key, false);
                    false
                }
                None => {
                    if probes.len() >= probe_allowance {
                        return Ok(Localization {
                            verdict: Verdict::Abstain,
                            probes,
                        });
                    }
                    let compiled = match judge.probe_prefix(instance, selection, len) {
                        Ok(c) => c,
                        Err(err) => {
                            // Infrastructure trouble: abstain with the probes
                            // already charged.
                            let _ = err;
                            return Ok(Localization {
                                verdict: Verdict::Abstain,
                                probes,
                            });
                        }
                    };
                    probes.push((len, compiled));
                    self.memo.insert(key, compiled);
                    compiled
                }
            };
            if !compiled {
                return Ok(Localization {
                    verdict: Verdict::BlacklistPrefix { prefix_len: len },
                    probes,
                });
            }
        }
        Ok(Localization {
            verdict: Verdict::Abstain,
            probes,
        })
    }

    fn name(&self) -> &'static str {
        "prefix"
    }
}

// ---------------------------------------------------------------------------
// External classifier adapter
// ---------------------------------------------------------------------------

/// One request over the classifier wire protocol: a single JSON object per
/// line on the classifier's stdin, answered by a single JSON object per
/// line on its stdout. One request in flight at a time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    /// Protocol version; currently 1.
    pub v: u32,
    pub pseudocode: Vec<String>,
    pub code: Vec<String>,
    /// 1-based reported error line.
    pub error_line: usize,
    pub error_message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResponse {
    /// 1-based predicted offending line.
    pub line: usize,
    /// In [0, 1].
    pub confidence: f64,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("classifier io: {0}")]
    Io(#[from] std::io::Error),
    #[error("classifier protocol violation: {0}")]
    Protocol(String),
}

/// Anything that can answer classification requests: an attached external
/// process, the built-in heuristic, or a test stub.
pub trait ClassifierBackend {
    fn classify(&mut self, request: &ClassifyRequest) -> Result<ClassifyResponse, ClassifierError>;
}

/// Adapter speaking the line-delimited JSON protocol over an attached child
/// process's standard streams.
pub struct ProcessClassifier {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessClassifier {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, ClassifierError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessClassifier {
            child,
            stdin,
            stdout,
        })
    }
}

impl ClassifierBackend for ProcessClassifier {
    fn classify(&mut self, request: &ClassifyRequest) -> Result<ClassifyResponse, ClassifierError> {
        let mut line = serde_json::to_string(request)
            .map_err(|e| ClassifierError::Protocol(e.to_string()))?;
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()?;
        let mut response = String::new();
        let n = self.stdout.read_line(&mut response)?;
        if n == 0 {
            return Err(ClassifierError::Protocol("classifier closed stdout".into()));
        }
        let parsed: ClassifyResponse = serde_json::from_str(response.trim())
            .map_err(|e| ClassifierError::Protocol(format!("bad response: {e}")))?;
        if !(0.0..=1.0).contains(&parsed.confidence) {
            return Err(ClassifierError::Protocol(format!(
                "confidence {} out of [0, 1]",
                parsed.confidence
            )));
        }
        Ok(parsed)
    }
}

impl Drop for ProcessClassifier {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Built-in heuristic baseline: when the error message quotes an
/// identifier that first occurs on a line before the reported one, blame
/// that earlier line (for instance an undeclared variable whose
/// declaration line was mistranslated); otherwise blame the reported line.
pub struct HeuristicClassifier;

fn quoted_identifier(message: &str) -> Option<&str> {
    let start = message.find(['\'', '\u{2018}'])? + 1;
    let rest = &message[start..];
    let end = rest.find(['\'', '\u{2019}'])?;
    let ident = &rest[..end];
    if ident.is_empty() || !ident.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    Some(ident)
}

fn mentions_identifier(text: &str, ident: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|tok| tok == ident)
}

impl ClassifierBackend for HeuristicClassifier {
    fn classify(&mut self, request: &ClassifyRequest) -> Result<ClassifyResponse, ClassifierError> {
        if let Some(ident) = quoted_identifier(&request.error_message) {
            let first_mention = request
                .pseudocode
                .iter()
                .zip(&request.code)
                .position(|(pseu, code)| {
                    mentions_identifier(pseu, ident) || mentions_identifier(code, ident)
                })
                .map(|p| p + 1);
            if let Some(line) = first_mention {
                if line < request.error_line {
                    return Ok(ClassifyResponse {
                        line,
                        confidence: 0.96,
                    });
                }
            }
        }
        Ok(ClassifyResponse {
            line: request.error_line,
            confidence: 0.5,
        })
    }
}

/// Wraps a classifier backend as a localizer: down-weight the predicted
/// line iff its confidence exceeds the threshold, abstain otherwise. A
/// protocol violation or process death marks the adapter unhealthy and all
/// subsequent calls short-circuit to abstain.
pub struct ClassifierLocalizer {
    backend: Box<dyn ClassifierBackend>,
    threshold: f64,
    healthy: bool,
}

/// Confidence threshold below which the classifier abstains.
pub const DEFAULT_CLASSIFIER_THRESHOLD: f64 = 0.95;

impl ClassifierLocalizer {
    pub fn new(backend: Box<dyn ClassifierBackend>, threshold: f64) -> Self {
        ClassifierLocalizer {
            backend,
            threshold,
            healthy: true,
        }
    }

    pub fn is_healthy(&self) -> bool {
        self.healthy
    }
}

impl Localizer for ClassifierLocalizer {
    fn localize(
        &mut self,
        instance: &ProblemInstance,
        selection: &Selection,
        reported_line: Option<usize>,
        message: &str,
        _probe_allowance: usize,
        _judge: &dyn Judge,
    ) -> Result<Localization, JudgeError> {
        if !self.healthy {
            return Ok(Localization::verdict(Verdict::Abstain));
        }
        let Some(error_line) = reported_line else {
            return Ok(Localization::verdict(Verdict::Abstain));
        };
        let request = ClassifyRequest {
            v: 1,
            pseudocode: instance.lines.iter().map(|l| l.text.clone()).collect(),
            code: selection
                .ranks
                .iter()
                .zip(&instance.candidate_lists)
                .map(|(&r, list)| list.get(r).expect("valid selection").code.clone())
                .collect(),
            error_line,
            error_message: message.to_string(),
        };
        match self.backend.classify(&request) {
            Ok(response) => {
                let valid = response.line >= 1 && response.line <= instance.line_count();
                if valid && response.confidence > self.threshold {
                    Ok(Localization::verdict(Verdict::DownWeight {
                        line: response.line,
                    }))
                } else {
                    Ok(Localization::verdict(Verdict::Abstain))
                }
            }
            Err(_) => {
                self.healthy = false;
                Ok(Localization::verdict(Verdict::Abstain))
            }
        }
    }

    fn name(&self) -> &'static str {
        "classifier"
    }
}

// ---------------------------------------------------------------------------
// Training data generation
// ---------------------------------------------------------------------------

/// One classifier training record, emitted as line-delimited JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub problem: String,
    /// The line whose candidate was substituted: the true offending line.
    pub label: usize,
    /// Rank of the substituted candidate.
    pub rank: usize,
    /// Compiler-reported logical line, when mapped.
    pub error_line: Option<usize>,
    pub error_message: String,
    pub pseudocode: Vec<String>,
    pub code: Vec<String>,
}

/// Single-line substitution over a gold program: for each line and each
/// candidate at that line, compile the mutated program and emit a record
/// for every compile failure, labeled with the substituted line.
///
/// Returns `None` (with no compiles issued beyond the check) when the gold
/// program itself fails to compile; callers should warn and skip.
pub fn training_records_for(
    instance: &ProblemInstance,
    gold: &Selection,
    judge: &dyn Judge,
) -> Result<Option<Vec<TrainingRecord>>, JudgeError> {
    if judge.compile_selection(instance, gold)? != CompileCheck::Ok {
        return Ok(None);
    }
    let gold_code: Vec<&str> = gold
        .ranks
        .iter()
        .zip(&instance.candidate_lists)
        .map(|(&r, list)| list.get(r).expect("valid gold").code.as_str())
        .collect();
    let mut records = Vec::new();
    for line in 1..=instance.line_count() {
        for cand in &instance.candidate_lists[line - 1].candidates {
            // Identical text compiles identically to gold: skip.
            if cand.code == gold_code[line - 1] {
                continue;
            }
            let mut mutated = gold.clone();
            mutated.ranks[line - 1] = cand.rank;
            if let CompileCheck::Err {
                logical_line,
                message,
            } = judge.compile_selection(instance, &mutated)?
            {
                records.push(TrainingRecord {
                    problem: instance.id.clone(),
                    label: line,
                    rank: cand.rank,
                    error_line: logical_line,
                    error_message: message,
                    pseudocode: instance.lines.iter().map(|l| l.text.clone()).collect(),
                    code: mutated
                        .ranks
                        .iter()
                        .zip(&instance.candidate_lists)
                        .map(|(&r, list)| list.get(r).unwrap().code.clone())
                        .collect(),
                });
            }
        }
    }
    Ok(Some(records))
}

/// Strategy names accepted on the command line.
pub const LOCALIZER_NAMES: [&str; 4] = ["none", "reported", "prefix", "classifier"];

/// Build a localizer by strategy name. `classifier` uses the built-in
/// error-message heuristic unless a `command` is given, in which case the
/// external process speaks the line-delimited JSON protocol above.
pub fn localizer_by_name(
    name: &str,
    threshold: f64,
    command: Option<(&str, &[String])>,
) -> Result<Box<dyn Localizer>, ClassifierError> {
    match name {
        "none" => Ok(Box::new(NoLocalizer)),
        "reported" => Ok(Box::new(ReportedLineLocalizer)),
        "prefix" => Ok(Box::new(PrefixPruningLocalizer::new())),
        "classifier" => {
            let backend: Box<dyn ClassifierBackend> = match command {
                Some((program, args)) => Box::new(ProcessClassifier::spawn(program, args)?),
                None => Box::new(HeuristicClassifier),
            };
            Ok(Box::new(ClassifierLocalizer::new(backend, threshold)))
        }
        other => Err(ClassifierError::Protocol(format!(
            "unknown localizer {other:?}; expected one of {LOCALIZER_NAMES:?}"
        ))),
    }
}
