//! Problem-set loading and canonical serialization.
//!
//! A problem set is three artifacts:
//!
//! - a pseudocode table, tab-separated with a header row
//!   `text  code  workerid  probid  subid  line  indent`; one row per code
//!   line, grouped by (probid, subid). Rows with empty `text` are fixed
//!   structural lines (closing braces, scaffolding) carrying their code
//!   with probability 1.
//! - a candidate file, line-delimited JSON records
//!   `{"problem": "<probid>-<subid>", "line": 3, "rank": 1,
//!     "code": "...", "log_prob": -0.25}`. The candidate file is the
//!   translator boundary: any model, or the gold lines themselves for
//!   oracle runs, can produce it.
//! - a tests directory, `tests/<problem>/{public,hidden}/<name>.in` with a
//!   matching `.out` per test.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{
    Candidate, CandidateList, ProblemInstance, PseudocodeLine, Selection, TestCase, Visibility,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {err}")]
    Io {
        path: PathBuf,
        #[source]
        err: std::io::Error,
    },
    #[error("{path}: row {row}: {msg}")]
    Schema {
        path: PathBuf,
        row: usize,
        msg: String,
    },
    #[error("{path}: line {row}: {err}")]
    Json {
        path: PathBuf,
        row: usize,
        #[source]
        err: serde_json::Error,
    },
    #[error("duplicate candidate for problem {problem} line {line} rank {rank}")]
    DuplicateCandidate {
        problem: String,
        line: usize,
        rank: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub pseudocode: PathBuf,
    pub candidates: PathBuf,
    pub tests_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Beam size cap; candidates beyond it are dropped with a warning.
    pub max_candidates: usize,
    /// Drop candidates with identical code text, keeping the best rank.
    /// Off by default: ranks are the search coordinates.
    pub dedup_candidates: bool,
    /// When a line has no candidates at all, append the gold code line as
    /// a candidate with this log probability instead of rejecting.
    pub gold_backfill_log_prob: Option<f64>,
    pub budget: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_candidates: 100,
            dedup_candidates: false,
            gold_backfill_log_prob: Some(-20.0),
            budget: 100,
        }
    }
}

/// One loaded problem plus its gold selection, when the gold code line of
/// every line is present among the candidates.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub instance: ProblemInstance,
    pub gold: Option<Selection>,
    /// Gold code per line, from the pseudocode table.
    pub gold_code: Vec<String>,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub problems: Vec<LoadedProblem>,
    /// Problems rejected (e.g. missing tests) and non-fatal irregularities.
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CandidateRecord {
    problem: String,
    line: usize,
    rank: usize,
    code: String,
    log_prob: f64,
}

#[derive(Debug, Clone)]
struct PseudoRow {
    text: String,
    code: String,
    worker: String,
    probid: String,
    subid: String,
    line: usize,
    indent: usize,
}

fn read_pseudocode_rows(path: &Path) -> Result<Vec<PseudoRow>, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(false)
        .from_path(path)
        .map_err(|e| LoadError::Schema {
            path: path.to_path_buf(),
            row: 0,
            msg: e.to_string(),
        })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LoadError::Schema {
            path: path.to_path_buf(),
            row: i + 2,
            msg: e.to_string(),
        })?;
        if record.len() != 7 {
            return Err(LoadError::Schema {
                path: path.to_path_buf(),
                row: i + 2,
                msg: format!("expected 7 columns, got {}", record.len()),
            });
        }
        let parse_usize = |field: usize, name: &str| -> Result<usize, LoadError> {
            record[field].trim().parse().map_err(|_| LoadError::Schema {
                path: path.to_path_buf(),
                row: i + 2,
                msg: format!("bad {name}: {:?}", &record[field]),
            })
        };
        rows.push(PseudoRow {
            text: record[0].to_string(),
            code: record[1].to_string(),
            worker: record[2].to_string(),
            probid: record[3].to_string(),
            subid: record[4].to_string(),
            line: parse_usize(5, "line")?,
            indent: parse_usize(6, "indent")?,
        });
    }
    Ok(rows)
}

fn read_candidates(
    path: &Path,
) -> Result<BTreeMap<String, BTreeMap<usize, Vec<CandidateRecord>>>, LoadError> {
    let text = fs::read_to_string(path).map_err(|err| LoadError::Io {
        path: path.to_path_buf(),
        err,
    })?;
    let mut out: BTreeMap<String, BTreeMap<usize, Vec<CandidateRecord>>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CandidateRecord =
            serde_json::from_str(line).map_err(|err| LoadError::Json {
                path: path.to_path_buf(),
                row: i + 1,
                err,
            })?;
        let per_line = out.entry(record.problem.clone()).or_default();
        let cands = per_line.entry(record.line).or_default();
        if cands.iter().any(|c| c.rank == record.rank) {
            return Err(LoadError::DuplicateCandidate {
                problem: record.problem,
                line: record.line,
                rank: record.rank,
            });
        }
        cands.push(record);
    }
    Ok(out)
}

fn read_tests(dir: &Path, visibility: Visibility) -> Result<Vec<TestCase>, LoadError> {
    let mut tests = Vec::new();
    if !dir.is_dir() {
        return Ok(tests);
    }
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|err| LoadError::Io {
            path: dir.to_path_buf(),
            err,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "in").unwrap_or(false))
        .collect();
    inputs.sort();
    for input_path in inputs {
        let out_path = input_path.with_extension("out");
        let input = fs::read(&input_path).map_err(|err| LoadError::Io {
            path: input_path.clone(),
            err,
        })?;
        let expected_output = fs::read(&out_path).map_err(|err| LoadError::Io {
            path: out_path.clone(),
            err,
        })?;
        tests.push(TestCase {
            input,
            expected_output,
            visibility,
        });
    }
    Ok(tests)
}

/// Load, join, and validate a problem set. Problems with missing tests or
/// unresolvable lines are rejected with a warning rather than failing the
/// whole load; schema violations are hard errors.
pub fn load_problem_set(paths: &DatasetPaths, options: &LoadOptions) -> Result<LoadReport, LoadError> {
    let rows = read_pseudocode_rows(&paths.pseudocode)?;
    let mut candidates = read_candidates(&paths.candidates)?;
    let mut report = LoadReport::default();

    // Group rows by (probid, subid), preserving file order of groups.
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<PseudoRow>> = BTreeMap::new();
    for row in rows {
        let id = format!("{}-{}", row.probid, row.subid);
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(row);
    }

    for id in order {
        let mut rows = groups.remove(&id).unwrap();
        rows.sort_by_key(|r| r.line);
        // Normalize 0-based line numbering to the 1-based model.
        let base = rows.first().map(|r| r.line).unwrap_or(1);
        if base > 1 {
            report
                .warnings
                .push(format!("{id}: line numbering starts at {base}; renumbering"));
        }
        let mut lines = Vec::new();
        let mut gold_code = Vec::new();
        let mut lists = Vec::new();
        let mut problem_cands = candidates.remove(&id).unwrap_or_default();
        let mut bad = None;
        for (pos, row) in rows.iter().enumerate() {
            let index = pos + 1;
            if row.line != base + pos {
                bad = Some(format!("{id}: non-contiguous line numbers at {}", row.line));
                break;
            }
            lines.push(PseudocodeLine {
                index,
                text: row.text.clone(),
                indent: row.indent,
            });
            gold_code.push(row.code.clone());
            let file_line = row.line;
            let supplied = problem_cands.remove(&file_line).unwrap_or_default();
            if row.text.is_empty() {
                // Fixed structural line: one candidate, probability 1.
                if !supplied.is_empty() {
                    report.warnings.push(format!(
                        "{id}: candidates supplied for structural line {file_line}; ignored"
                    ));
                }
                lists.push(CandidateList::fixed(index, row.code.clone()));
                continue;
            }
            let mut supplied = supplied;
            supplied.sort_by_key(|c| c.rank);
            let sorted_by_prob = supplied
                .windows(2)
                .all(|w| w[0].log_prob >= w[1].log_prob);
            if !sorted_by_prob {
                report.warnings.push(format!(
                    "{id}: line {file_line}: candidate ranks not sorted by log_prob; resorting"
                ));
                supplied.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap());
            }
            if supplied.len() > options.max_candidates {
                report.warnings.push(format!(
                    "{id}: line {file_line}: {} candidates, truncating to {}",
                    supplied.len(),
                    options.max_candidates
                ));
                supplied.truncate(options.max_candidates);
            }
            let mut cands: Vec<Candidate> = Vec::new();
            for record in supplied {
                if options.dedup_candidates && cands.iter().any(|c| c.code == record.code) {
                    continue;
                }
                cands.push(Candidate {
                    code: record.code,
                    log_prob: record.log_prob.min(0.0),
                    rank: cands.len() + 1,
                });
            }
            if cands.is_empty() {
                match options.gold_backfill_log_prob {
                    Some(lp) => cands.push(Candidate {
                        code: row.code.clone(),
                        log_prob: lp,
                        rank: 1,
                    }),
                    None => {
                        bad = Some(format!("{id}: line {file_line} has no candidates"));
                        break;
                    }
                }
            }
            lists.push(CandidateList {
                line_index: index,
                candidates: cands,
            });
        }
        if let Some(msg) = bad {
            report.warnings.push(msg);
            continue;
        }
        let _ = rows.first().map(|r| r.worker.clone());

        let tests_root = paths.tests_dir.join(&id);
        let mut tests = read_tests(&tests_root.join("public"), Visibility::Public)?;
        tests.extend(read_tests(&tests_root.join("hidden"), Visibility::Hidden)?);
        if !tests.iter().any(|t| t.visibility == Visibility::Public) {
            report
                .warnings
                .push(format!("{id}: no public tests; problem rejected"));
            continue;
        }

        let instance = ProblemInstance {
            id: id.clone(),
            lines,
            candidate_lists: lists,
            tests,
            budget: options.budget,
        };
        if let Err(err) = instance.validate() {
            report
                .warnings
                .push(format!("{id}: invalid after load ({err}); problem rejected"));
            continue;
        }
        let gold = gold_selection(&instance, &gold_code);
        report.problems.push(LoadedProblem {
            instance,
            gold,
            gold_code,
        });
    }
    Ok(report)
}

/// Rank of the gold code line within each candidate list, when present
/// everywhere.
fn gold_selection(instance: &ProblemInstance, gold_code: &[String]) -> Option<Selection> {
    let ranks = instance
        .candidate_lists
        .iter()
        .zip(gold_code)
        .map(|(list, gold)| {
            list.candidates
                .iter()
                .find(|c| &c.code == gold)
                .map(|c| c.rank)
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Selection { ranks })
}

/// Write a problem set back out in canonical form: rows ordered by
/// (problem, line), candidates by (problem, line, rank). Loading the
/// result and re-serializing is byte-identical.
pub fn save_problem_set(
    problems: &[LoadedProblem],
    pseudocode_path: &Path,
    candidates_path: &Path,
) -> Result<(), LoadError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |err: std::io::Error| LoadError::Io {
            path: path.clone(),
            err,
        }
    };
    let mut sorted: Vec<&LoadedProblem> = problems.iter().collect();
    sorted.sort_by(|a, b| a.instance.id.cmp(&b.instance.id));

    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(pseudocode_path)
        .map_err(|e| LoadError::Schema {
            path: pseudocode_path.to_path_buf(),
            row: 0,
            msg: e.to_string(),
        })?;
    writer
        .write_record(["text", "code", "workerid", "probid", "subid", "line", "indent"])
        .map_err(|e| LoadError::Schema {
            path: pseudocode_path.to_path_buf(),
            row: 0,
            msg: e.to_string(),
        })?;
    for p in &sorted {
        let (probid, subid) = p
            .instance
            .id
            .split_once('-')
            .unwrap_or((p.instance.id.as_str(), "0"));
        for (line, code) in p.instance.lines.iter().zip(&p.gold_code) {
            writer
                .write_record([
                    line.text.as_str(),
                    code.as_str(),
                    "",
                    probid,
                    subid,
                    &line.index.to_string(),
                    &line.indent.to_string(),
                ])
                .map_err(|e| LoadError::Schema {
                    path: pseudocode_path.to_path_buf(),
                    row: line.index,
                    msg: e.to_string(),
                })?;
        }
    }
    writer.flush().map_err(io_err(pseudocode_path))?;

    let mut out = String::new();
    for p in &sorted {
        for list in &p.instance.candidate_lists {
            // Structural single-candidate lines are implied by the table.
            let structural = p.instance.lines[list.line_index - 1].text.is_empty();
            if structural {
                continue;
            }
            for cand in &list.candidates {
                let record = CandidateRecord {
                    problem: p.instance.id.clone(),
                    line: list.line_index,
                    rank: cand.rank,
                    code: cand.code.clone(),
                    log_prob: cand.log_prob,
                };
                out.push_str(&serde_json::to_string(&record).expect("serializes"));
                out.push('\n');
            }
        }
    }
    fs::write(candidates_path, out).map_err(io_err(candidates_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path) -> DatasetPaths {
        let pseudocode = dir.join("pseudocode.tsv");
        let candidates = dir.join("candidates.jsonl");
        let tests_dir = dir.join("tests");
        fs::write(
            &pseudocode,
            "text\tcode\tworkerid\tprobid\tsubid\tline\tindent\n\
             in function main\tint main() {\tw1\tp1\ts1\t1\t0\n\
             print hello\tcout << \"hi\";\tw1\tp1\ts1\t2\t1\n\
             \t}\tw1\tp1\ts1\t3\t0\n",
        )
        .unwrap();
        fs::write(
            &candidates,
            concat!(
                r#"{"problem":"p1-s1","line":1,"rank":1,"code":"int main() {","log_prob":0.0}"#,
                "\n",
                r#"{"problem":"p1-s1","line":2,"rank":1,"code":"cout << \"hi\";","log_prob":-0.1}"#,
                "\n",
                r#"{"problem":"p1-s1","line":2,"rank":2,"code":"puts(\"hi\");","log_prob":-0.9}"#,
                "\n",
            ),
        )
        .unwrap();
        let public = tests_dir.join("p1-s1").join("public");
        fs::create_dir_all(&public).unwrap();
        fs::write(public.join("0.in"), "").unwrap();
        fs::write(public.join("0.out"), "hi").unwrap();
        DatasetPaths {
            pseudocode,
            candidates,
            tests_dir,
        }
    }

    #[test]
    fn loads_and_joins_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        let report = load_problem_set(&paths, &LoadOptions::default()).unwrap();
        assert_eq!(report.problems.len(), 1);
        let p = &report.problems[0];
        assert_eq!(p.instance.line_count(), 3);
        // Structural closing-brace row became a fixed single candidate.
        assert_eq!(p.instance.candidate_lists[2].len(), 1);
        assert_eq!(p.instance.candidate_lists[2].get(1).unwrap().log_prob, 0.0);
        assert_eq!(p.gold.as_ref().unwrap().ranks, vec![1, 1, 1]);
        p.instance.validate().unwrap();
    }

    #[test]
    fn unsorted_ranks_resort_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        fs::write(
            &paths.candidates,
            concat!(
                r#"{"problem":"p1-s1","line":1,"rank":1,"code":"int main() {","log_prob":0.0}"#,
                "\n",
                r#"{"problem":"p1-s1","line":2,"rank":1,"code":"worse();","log_prob":-2.0}"#,
                "\n",
                r#"{"problem":"p1-s1","line":2,"rank":2,"code":"cout << \"hi\";","log_prob":-0.1}"#,
                "\n",
            ),
        )
        .unwrap();
        let report = load_problem_set(&paths, &LoadOptions::default()).unwrap();
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("not sorted by log_prob")));
        let p = &report.problems[0];
        assert_eq!(p.instance.candidate_lists[1].get(1).unwrap().code, "cout << \"hi\";");
        assert_eq!(p.gold.as_ref().unwrap().ranks, vec![1, 1, 1]);
    }

    #[test]
    fn duplicate_rank_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        fs::write(
            &paths.candidates,
            concat!(
                r#"{"problem":"p1-s1","line":2,"rank":1,"code":"a;","log_prob":-0.1}"#,
                "\n",
                r#"{"problem":"p1-s1","line":2,"rank":1,"code":"b;","log_prob":-0.2}"#,
                "\n",
            ),
        )
        .unwrap();
        assert!(matches!(
            load_problem_set(&paths, &LoadOptions::default()),
            Err(LoadError::DuplicateCandidate { .. })
        ));
    }

    #[test]
    fn missing_tests_reject_problem() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        fs::remove_dir_all(paths.tests_dir.join("p1-s1")).unwrap();
        let report = load_problem_set(&paths, &LoadOptions::default()).unwrap();
        assert!(report.problems.is_empty());
        assert!(report.warnings.iter().any(|w| w.contains("no public tests")));
    }

    #[test]
    fn gold_backfill_fills_candidate_free_lines() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        // No candidates at all for line 2.
        fs::write(
            &paths.candidates,
            concat!(
                r#"{"problem":"p1-s1","line":1,"rank":1,"code":"int main() {","log_prob":0.0}"#,
                "\n",
            ),
        )
        .unwrap();
        let report = load_problem_set(&paths, &LoadOptions::default()).unwrap();
        let p = &report.problems[0];
        assert_eq!(p.instance.candidate_lists[1].len(), 1);
        assert_eq!(p.instance.candidate_lists[1].get(1).unwrap().code, "cout << \"hi\";");
        assert_eq!(
            p.instance.candidate_lists[1].get(1).unwrap().log_prob,
            LoadOptions::default().gold_backfill_log_prob.unwrap()
        );
    }

    #[test]
    fn save_then_load_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_fixture(dir.path());
        let report = load_problem_set(&paths, &LoadOptions::default()).unwrap();

        let out1_tsv = dir.path().join("out1.tsv");
        let out1_jsonl = dir.path().join("out1.jsonl");
        save_problem_set(&report.problems, &out1_tsv, &out1_jsonl).unwrap();
        let paths2 = DatasetPaths {
            pseudocode: out1_tsv.clone(),
            candidates: out1_jsonl.clone(),
            tests_dir: paths.tests_dir.clone(),
        };
        let report2 = load_problem_set(&paths2, &LoadOptions::default()).unwrap();
        let out2_tsv = dir.path().join("out2.tsv");
        let out2_jsonl = dir.path().join("out2.jsonl");
        save_problem_set(&report2.problems, &out2_tsv, &out2_jsonl).unwrap();
        assert_eq!(fs::read(&out1_tsv).unwrap(), fs::read(&out2_tsv).unwrap());
        assert_eq!(fs::read(&out1_jsonl).unwrap(), fs::read(&out2_jsonl).unwrap());
    }
}
