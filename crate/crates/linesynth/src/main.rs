use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linesynth::bench::{self, BenchConfig};
use linesynth::dataset::{load_problem_set, DatasetPaths, LoadOptions, LoadedProblem};
use linesynth::eval::{success_curve, trial_delta_report, RunDigest};
use linesynth::judge::mock::MockSpec;
use linesynth::judge::{CompilerConfig, Judge, MockJudge, RealJudge};
use linesynth::localize::{localizer_by_name, training_records_for, DEFAULT_CLASSIFIER_THRESHOLD};
use linesynth::search::{best_first_search, SearchConfig, DEFAULT_ALPHA};

#[derive(Parser)]
#[command(
    name = "linesynth",
    about = "Budgeted best-first synthesis of programs from per-line code candidates",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// Tab-separated pseudocode table (text/code/workerid/probid/subid/line/indent).
    #[arg(long)]
    pseudocode: Option<PathBuf>,
    /// Line-delimited JSON candidate records.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Root of tests/<problem>/{public,hidden}/<n>.{in,out}.
    #[arg(long)]
    tests: Option<PathBuf>,
    /// Restrict to these problem ids (repeatable); default is all.
    #[arg(long = "problem")]
    problems: Vec<String>,
}

impl DatasetArgs {
    fn paths(&self) -> Result<DatasetPaths, Box<dyn std::error::Error>> {
        match (&self.pseudocode, &self.candidates, &self.tests) {
            (Some(p), Some(c), Some(t)) => Ok(DatasetPaths {
                pseudocode: p.clone(),
                candidates: c.clone(),
                tests_dir: t.clone(),
            }),
            _ => Err("--pseudocode, --candidates, and --tests are all required".into()),
        }
    }

    fn present(&self) -> bool {
        self.pseudocode.is_some() || self.candidates.is_some() || self.tests.is_some()
    }
}

#[derive(Args, Clone)]
struct CompilerArgs {
    #[arg(long, default_value = "g++")]
    compiler: String,
    /// Compiler flag (repeatable); replaces the defaults when given.
    #[arg(long = "compiler-flag")]
    flags: Vec<String>,
}

impl CompilerArgs {
    fn config(&self, cache: bool) -> CompilerConfig {
        let mut cfg = CompilerConfig::default();
        cfg.compiler = self.compiler.clone();
        if !self.flags.is_empty() {
            cfg.flags = self.flags.clone();
        }
        cfg.cache = cache;
        cfg
    }
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Compile-trial budget per problem.
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Localization strategy: none | reported | prefix | classifier.
    #[arg(long, default_value = "prefix")]
    localizer: String,
    /// Down-weighting factor applied to blamed candidates.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Classifier confidence threshold for acting on a blame.
    #[arg(long, default_value_t = DEFAULT_CLASSIFIER_THRESHOLD)]
    beta: f64,
    /// External classifier command (program plus arguments); default is the
    /// built-in error-message heuristic.
    #[arg(long, num_args = 1.., value_delimiter = ' ')]
    classifier_cmd: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Search for programs over a problem set using the real compiler, or
    /// over a mock fixture with --fixture.
    Synth {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Mock-compiler fixture (TOML); replaces the dataset and compiler.
        #[arg(long, conflicts_with_all = ["pseudocode", "candidates", "tests"])]
        fixture: Option<PathBuf>,
        #[command(flatten)]
        compiler: CompilerArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Write per-problem run digests (JSON lines) here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one <problem>.trace.jsonl per problem into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Success-rate curve from run digests.
    Eval {
        /// Digest file (JSON lines), repeatable.
        #[arg(long, required = true)]
        digests: Vec<PathBuf>,
        /// Budgets to evaluate, e.g. 1,5,10,25,50,100.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 25, 50, 100])]
        budgets: Vec<usize>,
    },
    /// Per-problem trial-count comparison of a method against a baseline.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        method: PathBuf,
    },
    /// Generate classifier training data by single-line substitution over
    /// gold programs.
    GenLocalizerData {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        compiler: CompilerArgs,
        /// Output file for training records (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run localization strategies over a generated mock-compiler benchmark
    /// and print the comparison.
    Simulate {
        #[arg(long, default_value_t = 50)]
        problems: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        lines: usize,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_CLASSIFIER_THRESHOLD)]
        beta: f64,
        /// Strategies to run; the first is the comparison baseline.
        #[arg(long, value_delimiter = ',', default_values_t = ["none".to_string(), "prefix".to_string()])]
        methods: Vec<String>,
        /// Write <method>.digests.jsonl files here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Synth {
            dataset,
            fixture,
            compiler,
            search,
            out,
            trace_dir,
        } => synth(dataset, fixture, compiler, search, out, trace_dir),
        Command::Eval { digests, budgets } => {
            for path in digests {
                let runs = read_digests(&path)?;
                println!("{}  ({} runs)", path.display(), runs.len());
                for (budget, rate) in success_curve(&runs, &budgets)? {
                    println!("  success@{budget:<4} {:.3}", rate);
                }
            }
            Ok(())
        }
        Command::Report { baseline, method } => {
            let base = read_digests(&baseline)?;
            let meth = read_digests(&method)?;
            let report = trial_delta_report(&base, &meth)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::GenLocalizerData {
            dataset,
            compiler,
            out,
        } => gen_localizer_data(dataset, compiler, out),
        Command::Simulate {
            problems,
            seed,
            lines,
            beam,
            budget,
            alpha,
            beta,
            methods,
            out_dir,
        } => {
            let cfg = BenchConfig {
                problems,
                seed,
                lines,
                beam,
                budget,
            };
            let specs = bench::generate(&cfg);
            let mut all: Vec<(String, Vec<RunDigest>)> = Vec::new();
            for method in &methods {
                let digests = bench::run_method(&specs, method, budget, alpha, beta);
                if let Some(dir) = &out_dir {
                    fs::create_dir_all(dir)?;
                    write_digests(&dir.join(format!("{method}.digests.jsonl")), &digests)?;
                }
                all.push((method.clone(), digests));
            }
            let (base_name, base) = &all[0];
            for (name, digests) in &all[1..] {
                println!("== {name} vs {base_name} ==");
                print!("{}", trial_delta_report(base, digests)?.render_text());
            }
            Ok(())
        }
    }
}

fn load_selected(
    dataset: &DatasetArgs,
    budget: usize,
) -> Result<Vec<LoadedProblem>, Box<dyn std::error::Error>> {
    let paths = dataset.paths()?;
    let options = LoadOptions {
        budget,
        ..LoadOptions::default()
    };
    let report = load_problem_set(&paths, &options)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let mut problems = report.problems;
    if !dataset.problems.is_empty() {
        problems.retain(|p| dataset.problems.contains(&p.instance.id));
    }
    Ok(problems)
}

fn synth(
    dataset: DatasetArgs,
    fixture: Option<PathBuf>,
    compiler: CompilerArgs,
    search: SearchArgs,
    out: Option<PathBuf>,
    trace_dir: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    let config = SearchConfig {
        alpha: search.alpha,
    };
    // (instance, judge) pairs from either input mode.
    let mut runs: Vec<(linesynth::ProblemInstance, Box<dyn Judge>)> = Vec::new();
    match (&fixture, dataset.present()) {
        (Some(path), _) => {
            let spec = MockSpec::from_toml_str(&fs::read_to_string(path)?)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "fixture".into());
            runs.push((
                spec.instance(id, search.budget),
                Box::new(MockJudge::new(spec)),
            ));
        }
        (None, true) => {
            // One judge per problem keeps compile-call counts per run.
            for p in load_selected(&dataset, search.budget)? {
                runs.push((
                    p.instance,
                    Box::new(RealJudge::new(compiler.config(false))),
                ));
            }
        }
        (None, false) => return Err("either a dataset or --fixture is required".into()),
    }

    let mut digests = Vec::new();
    for (instance, judge) in &runs {
        let cmd = search.classifier_cmd.as_deref();
        let mut localizer = localizer_by_name(
            &search.localizer,
            search.beta,
            cmd.map(|c| (c[0].as_str(), &c[1..])),
        )?;
        let result = best_first_search(instance, judge.as_ref(), localizer.as_mut(), &config);
        let digest =
            RunDigest::from_result(&instance.id, &search.localizer, search.budget, &result);
        println!(
            "{}: {} ({} trials)",
            instance.id,
            match digest.accepted_trial {
                Some(t) => format!("accepted at trial {t}"),
                None => format!("{:?}", result.status),
            },
            result.trials_used
        );
        if let Some(dir) = &trace_dir {
            fs::create_dir_all(dir)?;
            fs::write(
                dir.join(format!("{}.trace.jsonl", instance.id)),
                result.trace.to_jsonl(),
            )?;
        }
        digests.push(digest);
    }
    if let Some(path) = &out {
        write_digests(path, &digests)?;
    }
    Ok(())
}

fn gen_localizer_data(
    dataset: DatasetArgs,
    compiler: CompilerArgs,
    out: PathBuf,
) -> Result<(), Box<dyn std::error::Error>> {
    // Caching pays off here: mutated programs repeat across lines.
    let judge = RealJudge::new(compiler.config(true));
    let mut text = String::new();
    let mut emitted = 0usize;
    for p in load_selected(&dataset, 1)? {
        let Some(gold) = &p.gold else {
            eprintln!(
                "warning: {}: gold code missing from candidates; skipped",
                p.instance.id
            );
            continue;
        };
        match training_records_for(&p.instance, gold, &judge)? {
            None => eprintln!(
                "warning: {}: gold program does not compile; skipped",
                p.instance.id
            ),
            Some(records) => {
                emitted += records.len();
                for r in records {
                    text.push_str(&serde_json::to_string(&r)?);
                    text.push('\n');
                }
            }
        }
    }
    fs::write(&out, text)?;
    eprintln!("wrote {emitted} records to {}", out.display());
    Ok(())
}

fn read_digests(path: &PathBuf) -> Result<Vec<RunDigest>, Box<dyn std::error::Error>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<_>, _>>()?)
}

fn write_digests(path: &PathBuf, digests: &[RunDigest]) -> Result<(), Box<dyn std::error::Error>> {
    let mut text = String::new();
    for d in digests {
        text.push_str(&serde_json::to_string(d)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
