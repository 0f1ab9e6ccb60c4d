//! Real-compiler judge: spawns the configured compiler in a per-call
//! scratch directory, parses the first diagnostic, runs the binary on test
//! cases under time and output limits, and normalizes outputs.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;

use crate::assemble::{self, AssembledSource};
use crate::types::{ProblemInstance, Selection, TestCase, TrialOutcome};

use super::{CompileCheck, Judge, JudgeError};

/// Compiler command, flags, limits, and the assembly preamble. Nothing
/// here is intrinsic to the search, so it is all configuration.
#[derive(Debug, Clone)]
pub struct CompilerConfig {
    pub compiler: String,
    pub flags: Vec<String>,
    pub compile_timeout: Duration,
    pub run_timeout: Duration,
    /// Cap on captured program output, per stream.
    pub output_cap: usize,
    /// Header block emitted before the program body.
    pub preamble: String,
    /// Compile cache keyed by source bytes. OFF during budgeted search
    /// (it would distort trial accounting), ON in evaluation modes such as
    /// line-level accuracy.
    pub cache: bool,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig {
            compiler: "g++".into(),
            flags: vec!["-std=c++17".into(), "-O1".into()],
            compile_timeout: Duration::from_secs(30),
            run_timeout: Duration::from_secs(2),
            output_cap: 1 << 20,
            preamble: "#include <bits/stdc++.h>\nusing namespace std;".into(),
            cache: false,
        }
    }
}

/// A compiled binary, kept alive by its scratch directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    _dir: Arc<tempfile::TempDir>,
    binary: PathBuf,
}

/// Result of one compiler invocation. `Error` carries the first diagnostic
/// of severity error.
#[derive(Debug, Clone)]
pub enum CompileResult {
    Success(Artifact),
    Error {
        physical_line: Option<usize>,
        column: Option<usize>,
        message: String,
        raw_stderr: String,
    },
}

/// Result of running a binary on one test case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunResult {
    Passed,
    WrongOutput { actual: Vec<u8> },
    RuntimeError { exit_status: Option<i32> },
    Timeout,
}

/// Extract the first `<file>:<line>:<col>: error: <message>` record from
/// compiler stderr. Returns `None` when no error-severity record exists
/// (warnings only, linker failures).
pub fn parse_first_error(stderr: &str) -> Option<(usize, usize, String)> {
    // Compiled lazily once; gcc and clang both use this shape.
    let re = Regex::new(r"(?m)^[^:\n]+:(\d+):(\d+):\s*(?:fatal )?error:\s*(.*)$").unwrap();
    let caps = re.captures(stderr)?;
    Some((
        caps[1].parse().ok()?,
        caps[2].parse().ok()?,
        caps[3].trim().to_string(),
    ))
}

/// Canonicalize program output: CRLF to LF, trailing whitespace stripped
/// from each line, trailing blank lines dropped. Interior whitespace is
/// preserved.
pub fn normalize_output(text: &[u8]) -> String {
    let text = String::from_utf8_lossy(text).replace("\r\n", "\n");
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.trim_end()).collect();
    while lines.last() == Some(&"") {
        lines.pop();
    }
    lines.join("\n")
}

struct ProcOutput {
    stdout: Vec<u8>,
    exit_status: Option<i32>,
    timed_out: bool,
}

/// Run a child process with piped stdin, a wall-clock timeout, and an
/// output cap. Output beyond the cap is read and discarded so the child is
/// never blocked on a full pipe.
fn run_limited(
    mut cmd: Command,
    input: &[u8],
    timeout: Duration,
    cap: usize,
) -> std::io::Result<ProcOutput> {
    cmd.stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    let mut child = cmd.spawn()?;
    let mut stdin = child.stdin.take().unwrap();
    let input = input.to_vec();
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&input);
        // drop closes the pipe
    });
    let mut stdout_pipe = child.stdout.take().unwrap();
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match stdout_pipe.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if buf.len() < cap {
                        let take = n.min(cap - buf.len());
                        buf.extend_from_slice(&chunk[..take]);
                    }
                }
            }
        }
        buf
    });

    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            timed_out = true;
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let _ = writer.join();
    let stdout = reader.join().unwrap_or_default();
    Ok(ProcOutput {
        stdout,
        exit_status: status.and_then(|s| s.code()),
        timed_out,
    })
}

pub struct RealJudge {
    cfg: CompilerConfig,
    compile_calls: AtomicU64,
    cache: Mutex<HashMap<String, CompileResult>>,
}

impl RealJudge {
    pub fn new(cfg: CompilerConfig) -> Self {
        RealJudge {
            cfg,
            compile_calls: AtomicU64::new(0),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &CompilerConfig {
        &self.cfg
    }

    /// True when the configured compiler responds to --version.
    pub fn compiler_available(cfg: &CompilerConfig) -> bool {
        Command::new(&cfg.compiler)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }

    /// Compile assembled source in a fresh scratch directory. Bypasses the
    /// cache when `charge` is set so budgeted trials are always real
    /// compiler calls.
    pub fn compile_source(&self, src: &AssembledSource) -> Result<CompileResult, JudgeError> {
        if self.cfg.cache {
            if let Some(hit) = self.cache.lock().unwrap().get(&src.text) {
                return Ok(hit.clone());
            }
        }
        self.compile_calls.fetch_add(1, Ordering::Relaxed);
        let dir = tempfile::tempdir()?;
        let source_path = dir.path().join("main.cpp");
        let binary = dir.path().join("prog");
        std::fs::write(&source_path, &src.text)?;
        let mut cmd = Command::new(&self.cfg.compiler);
        cmd.args(&self.cfg.flags)
            .arg(&source_path)
            .arg("-o")
            .arg(&binary)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        let out = cmd
            .output()
            .map_err(|e| JudgeError::Infra(format!("cannot spawn {}: {e}", self.cfg.compiler)))?;
        let stderr = String::from_utf8_lossy(&out.stderr).to_string();
        let result = if out.status.success() {
            CompileResult::Success(Artifact {
                _dir: Arc::new(dir),
                binary,
            })
        } else {
            match parse_first_error(&stderr) {
                Some((line, col, message)) => CompileResult::Error {
                    physical_line: Some(line),
                    column: Some(col),
                    message,
                    raw_stderr: stderr,
                },
                // Linker error or ICE: no line to blame, localizers abstain.
                None => CompileResult::Error {
                    physical_line: None,
                    column: None,
                    message: stderr.lines().next().unwrap_or("compilation failed").to_string(),
                    raw_stderr: stderr,
                },
            }
        };
        if self.cfg.cache {
            self.cache
                .lock()
                .unwrap()
                .insert(src.text.clone(), result.clone());
        }
        Ok(result)
    }

    /// Run one test; Passed iff normalized actual equals normalized
    /// expected.
    pub fn run_test(&self, artifact: &Artifact, test: &TestCase) -> Result<RunResult, JudgeError> {
        let out = run_limited(
            Command::new(&artifact.binary),
            &test.input,
            self.cfg.run_timeout,
            self.cfg.output_cap,
        )
        .map_err(|e| JudgeError::Infra(format!("cannot run compiled binary: {e}")))?;
        if out.timed_out {
            return Ok(RunResult::Timeout);
        }
        match out.exit_status {
            Some(0) => {
                if normalize_output(&out.stdout) == normalize_output(&test.expected_output) {
                    Ok(RunResult::Passed)
                } else {
                    Ok(RunResult::WrongOutput { actual: out.stdout })
                }
            }
            status => Ok(RunResult::RuntimeError {
                exit_status: status,
            }),
        }
    }

    /// Run tests in order; Accepted iff all pass, otherwise the first
    /// failure classified.
    pub fn run_tests(
        &self,
        artifact: &Artifact,
        tests: &[&TestCase],
    ) -> Result<TrialOutcome, JudgeError> {
        for (i, test) in tests.iter().enumerate() {
            match self.run_test(artifact, test)? {
                RunResult::Passed => {}
                RunResult::WrongOutput { .. } => {
                    return Ok(TrialOutcome::WrongOutput {
                        first_failing_test: i,
                    })
                }
                RunResult::RuntimeError { .. } => return Ok(TrialOutcome::RuntimeError),
                RunResult::Timeout => return Ok(TrialOutcome::Timeout),
            }
        }
        Ok(TrialOutcome::Accepted)
    }

    fn compile_mapped(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<(CompileCheck, Option<Artifact>), JudgeError> {
        let src = self.assemble(instance, selection)?;
        match self.compile_source(&src)? {
            CompileResult::Success(artifact) => Ok((CompileCheck::Ok, Some(artifact))),
            CompileResult::Error {
                physical_line,
                message,
                ..
            } => {
                let logical = physical_line.and_then(|p| src.map_physical_to_logical(p));
                Ok((
                    CompileCheck::Err {
                        logical_line: logical,
                        message,
                    },
                    None,
                ))
            }
        }
    }
}

impl Judge for RealJudge {
    fn assemble(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<AssembledSource, JudgeError> {
        Ok(assemble::assemble(instance, selection, &self.cfg.preamble)?)
    }

    fn compile_selection(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<CompileCheck, JudgeError> {
        Ok(self.compile_mapped(instance, selection)?.0)
    }

    fn run_trial(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<TrialOutcome, JudgeError> {
        match self.compile_mapped(instance, selection)? {
            (CompileCheck::Ok, Some(artifact)) => {
                let tests: Vec<&TestCase> = instance.public_tests().collect();
                self.run_tests(&artifact, &tests)
            }
            (
                CompileCheck::Err {
                    logical_line,
                    message,
                },
                _,
            ) => Ok(TrialOutcome::CompileError {
                reported_logical_line: logical_line,
                message,
            }),
            _ => unreachable!(),
        }
    }

    fn probe_prefix(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
        prefix_len: usize,
    ) -> Result<bool, JudgeError> {
        let src = assemble::complete_prefix(instance, selection, prefix_len, &self.cfg.preamble)?;
        Ok(matches!(self.compile_source(&src)?, CompileResult::Success(_)))
    }

    fn validate_full(
        &self,
        instance: &ProblemInstance,
        selection: &Selection,
    ) -> Result<bool, JudgeError> {
        match self.compile_mapped(instance, selection)? {
            (CompileCheck::Ok, Some(artifact)) => {
                // Public and hidden tests both count for validation.
                let tests: Vec<&TestCase> = instance.tests.iter().collect();
                Ok(self.run_tests(&artifact, &tests)? == TrialOutcome::Accepted)
            }
            _ => Ok(false),
        }
    }

    fn compile_calls(&self) -> u64 {
        self.compile_calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_error_record() {
        let stderr = "main.cpp:7:5: error: 'n' was not declared in this scope\n\
                      main.cpp:9:1: error: expected ';'\n";
        assert_eq!(
            parse_first_error(stderr),
            Some((7, 5, "'n' was not declared in this scope".into()))
        );
    }

    #[test]
    fn warnings_only_is_none() {
        let stderr = "main.cpp:3:5: warning: unused variable 'x' [-Wunused-variable]\n";
        assert_eq!(parse_first_error(stderr), None);
    }

    #[test]
    fn first_of_two_errors_wins() {
        let stderr = "m.cpp:3:1: error: aaa\nm.cpp:9:2: error: bbb\n";
        assert_eq!(parse_first_error(stderr).unwrap().0, 3);
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_output(b"1 2 3 4 5 \n"), normalize_output(b"1 2 3 4 5"));
        assert_eq!(normalize_output(b"a\r\nb"), normalize_output(b"a\nb"));
        assert_ne!(normalize_output(b"1\n2"), normalize_output(b"12"));
        assert_eq!(normalize_output(b"x\n\n\n"), "x");
    }
}
