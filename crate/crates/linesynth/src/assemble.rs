//! Selection-to-source assembly.
//!
//! Turns a selection into compilable text: preamble, one emitted line per
//! selected candidate (indented two spaces per level), and closing braces
//! derived from the indent structure. Keeps a bidirectional map between
//! physical source lines and logical pseudocode lines so compiler-reported
//! line numbers can be interpreted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ModelError, ProblemInstance, Selection};

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("invalid problem: {0}")]
    Model(#[from] ModelError),
    #[error("prefix length {got} out of range 1..={max}")]
    PrefixOutOfRange { got: usize, max: usize },
}

/// Where one physical source line came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LineOrigin {
    Preamble,
    /// Emitted from the candidate selected for this 1-based logical line.
    Candidate { logical: usize },
    /// Closing brace inserted by the assembler.
    InsertedBrace,
}

/// Assembled source text plus the physical-to-logical line map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledSource {
    pub text: String,
    /// One origin per physical line, in order (physical lines are 1-based).
    pub origins: Vec<LineOrigin>,
}

impl AssembledSource {
    /// Logical line behind a 1-based physical line. Preamble and inserted
    /// braces map to the nearest preceding candidate line, if any; physical
    /// lines beyond the file are unmapped.
    pub fn map_physical_to_logical(&self, physical_line: usize) -> Option<usize> {
        if physical_line == 0 || physical_line > self.origins.len() {
            return None;
        }
        self.origins[..physical_line]
            .iter()
            .rev()
            .find_map(|origin| match origin {
                LineOrigin::Candidate { logical } => Some(*logical),
                _ => None,
            })
    }

    pub fn physical_line_count(&self) -> usize {
        self.origins.len()
    }
}

/// Net brace balance of `code`: opening minus closing braces, counting only
/// braces outside string literals, character literals, and comments. An
/// unterminated literal extends to the end of its line.
pub fn count_open_braces(code: &str) -> i64 {
    brace_scan(code).0
}

/// The number of unmatched closing braces at the front of `code`, i.e. how
/// far the running balance dips below zero. "} else {" reports 1.
fn leading_closers(code: &str) -> i64 {
    -brace_scan(code).1.min(0)
}

/// Returns (net balance, minimum running balance).
fn brace_scan(code: &str) -> (i64, i64) {
    #[derive(PartialEq)]
    enum State {
        Normal,
        Str,
        Chr,
        LineComment,
        BlockComment,
    }
    let mut state = State::Normal;
    let mut balance = 0i64;
    let mut min_balance = 0i64;
    let mut chars = code.chars().peekable();
    while let Some(c) = chars.next() {
        match state {
            State::Normal => match c {
                '{' => balance += 1,
                '}' => {
                    balance -= 1;
                    min_balance = min_balance.min(balance);
                }
                '"' => state = State::Str,
                '\'' => state = State::Chr,
                '/' => match chars.peek() {
                    Some('/') => {
                        chars.next();
                        state = State::LineComment;
                    }
                    Some('*') => {
                        chars.next();
                        state = State::BlockComment;
                    }
                    _ => {}
                },
                _ => {}
            },
            State::Str => match c {
                '\\' => {
                    chars.next();
                }
                '"' => state = State::Normal,
                '\n' => state = State::Normal,
                _ => {}
            },
            State::Chr => match c {
                '\\' => {
                    chars.next();
                }
                '\'' => state = State::Normal,
                '\n' => state = State::Normal,
                _ => {}
            },
            State::LineComment => {
                if c == '\n' {
                    state = State::Normal;
                }
            }
            State::BlockComment => {
                if c == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    state = State::Normal;
                }
            }
        }
    }
    (balance, min_balance)
}

struct Emitter {
    text: String,
    origins: Vec<LineOrigin>,
}

impl Emitter {
    fn new() -> Self {
        Emitter {
            text: String::new(),
            origins: Vec::new(),
        }
    }

    fn push_line(&mut self, indent: usize, content: &str, origin: LineOrigin) {
        for _ in 0..indent {
            self.text.push_str("  ");
        }
        self.text.push_str(content);
        self.text.push('\n');
        self.origins.push(origin);
    }

    fn finish(self) -> AssembledSource {
        AssembledSource {
            text: self.text,
            origins: self.origins,
        }
    }
}

fn emit_preamble(emitter: &mut Emitter, preamble: &str) {
    if preamble.is_empty() {
        return;
    }
    for line in preamble.trim_end_matches('\n').split('\n') {
        emitter.push_line(0, line, LineOrigin::Preamble);
    }
}

/// Emit logical lines 1..=prefix_len with indent-derived interior closing
/// braces. Explicit closers at the front of the next line (a "}" row kept
/// as a fixed structural line, or "} else {") substitute for inserted
/// braces so blocks are not closed twice.
fn emit_body(
    emitter: &mut Emitter,
    instance: &ProblemInstance,
    selection: &Selection,
    prefix_len: usize,
) {
    for i in 1..=prefix_len {
        let line = &instance.lines[i - 1];
        let code = &instance.candidate_lists[i - 1]
            .get(selection.rank_at(i))
            .expect("validated selection")
            .code;
        emitter.push_line(line.indent, code, LineOrigin::Candidate { logical: i });
        if i < prefix_len {
            let next = &instance.lines[i];
            if next.indent < line.indent {
                let next_code = &instance.candidate_lists[i]
                    .get(selection.rank_at(i + 1))
                    .expect("validated selection")
                    .code;
                let mut to_close =
                    (line.indent - next.indent) as i64 - leading_closers(next_code);
                let mut depth = line.indent;
                while to_close > 0 {
                    depth -= 1;
                    emitter.push_line(depth, "}", LineOrigin::InsertedBrace);
                    to_close -= 1;
                }
            }
        }
    }
}

/// Assemble the full program: preamble, all selected lines, and closing
/// braces for every indent level still open at end-of-program.
pub fn assemble(
    instance: &ProblemInstance,
    selection: &Selection,
    preamble: &str,
) -> Result<AssembledSource, AssembleError> {
    instance.validate()?;
    selection.validate(&instance.candidate_lists)?;
    let mut emitter = Emitter::new();
    emit_preamble(&mut emitter, preamble);
    let line_count = instance.line_count();
    emit_body(&mut emitter, instance, selection, line_count);
    if let Some(last) = instance.lines.last() {
        for depth in (0..last.indent).rev() {
            emitter.push_line(depth, "}", LineOrigin::InsertedBrace);
        }
    }
    Ok(emitter.finish())
}

/// Assemble only logical lines 1..=prefix_len, then append exactly as many
/// closing braces as there are unmatched opening braces in the emitted text
/// (counted literal-aware), yielding a structurally complete translation
/// unit for probe compilation.
pub fn complete_prefix(
    instance: &ProblemInstance,
    selection: &Selection,
    prefix_len: usize,
    preamble: &str,
) -> Result<AssembledSource, AssembleError> {
    instance.validate()?;
    selection.validate(&instance.candidate_lists)?;
    let line_count = instance.line_count();
    if prefix_len == 0 || prefix_len > line_count {
        return Err(AssembleError::PrefixOutOfRange {
            got: prefix_len,
            max: line_count,
        });
    }
    let mut emitter = Emitter::new();
    emit_preamble(&mut emitter, preamble);
    emit_body(&mut emitter, instance, selection, prefix_len);
    let mut open = count_open_braces(&emitter.text);
    let mut depth = open.max(0) as usize;
    while open > 0 {
        depth -= 1;
        emitter.push_line(depth, "}", LineOrigin::InsertedBrace);
        open -= 1;
    }
    Ok(emitter.finish())
}
