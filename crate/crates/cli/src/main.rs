//! `ehrrag`: each pipeline stage as its own command.
//!
//! Exit codes: 0 success, 1 config error, 2 partial failures, 3 fatal.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ehrrag_core::analysis::published::{appendix_score_rows, replay_area_differences};
use ehrrag_core::analysis::{emit_report, read_scores_csv, write_scores_csv, ReportOptions};
use ehrrag_core::corpus::{load_corpus, CORPUS_SCHEMA_V1};
use ehrrag_core::runner::{
    baseline_summary, compact, read_records, score_records, validate_config, ExperimentConfig, RunError, Runtime,
};
use ehrrag_core::runner::RxNavMode;
use ehrrag_core::synth::{generate_corpus, write_synth, SynthConfig};

#[derive(Parser)]
#[command(name = "ehrrag", version, about = "Retrieval vs. recency context selection over clinical records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus file, reporting skipped records.
    Ingest {
        corpus: PathBuf,
        #[arg(long, default_value = CORPUS_SCHEMA_V1)]
        schema: String,
        /// Write the loaded records back out, one per line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted truth and a MAR table.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        encounters: Option<usize>,
    },
    /// Build (or refresh) the retrieval indexes for every encounter and task.
    Index(ConfigArg),
    /// Build gold labels and write them as JSON lines.
    Gold {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Defaults to `<output_dir>/gold.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Query live RxNav and record the answers.
        #[arg(long)]
        rxnav_live: bool,
        /// Where the recorded RxNav fixture goes with --rxnav-live.
        #[arg(long, requires = "rxnav_live")]
        record: Option<PathBuf>,
    },
    /// Run the experiment matrix, skipping finished cells.
    Run(ConfigArg),
    /// Aggregate the results store into scores.csv and baseline.json.
    Score {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Defaults to the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tables, area differences and plots from a results store or a scores file.
    Report {
        #[arg(long, short, conflicts_with = "scores", required_unless_present = "scores")]
        config: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
    },
    /// Replay the bundled published score tables through the area analysis.
    ReplayPublished {
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite the results store with one record per run id.
    Compact(ConfigArg),
}

enum Failure {
    Config(String),
    Fatal(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Fatal(e.to_string())
    }
}

fn fatal(e: impl std::fmt::Display) -> Failure {
    Failure::Fatal(e.to_string())
}

type Outcome = Result<bool, Failure>;

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    validate_config(path).map_err(|e| Failure::Config(e.to_string()))
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fatal)?;
    }
    fs::write(path, body).map_err(|e| fatal(format!("{}: {e}", path.display())))
}

fn ingest(corpus: &Path, schema: &str, out: Option<&Path>) -> Outcome {
    let (c, report) = load_corpus(corpus, schema).map_err(fatal)?;
    for e in &report.entries {
        let level = if e.issue.is_warning() { "warning" } else { "skipped" };
        eprintln!("line {}: {level}: {}", e.line, serde_json::to_string(&e.issue).unwrap_or_default());
    }
    println!("{}", json!({ "records_read": report.records_read, "records_loaded": report.records_loaded, "encounters": c.len() }));
    if let Some(out) = out {
        c.write_jsonl(out).map_err(fatal)?;
    }
    let clean = report.violations().next().is_none();
    Ok(clean)
}

fn synth(out: &Path, config: Option<&Path>, seed: Option<u64>, encounters: Option<usize>) -> Outcome {
    let mut cfg = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = encounters {
        cfg.n_encounters = n;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let generated = generate_corpus(&cfg).map_err(fatal)?;
    let files = write_synth(&generated, out).map_err(fatal)?;
    println!("{}", json!({ "corpus": files.corpus, "truth_dir": files.truth_dir, "mar": files.mar, "encounters": cfg.n_encounters }));
    Ok(true)
}

fn gold(cfg: ExperimentConfig, out: Option<PathBuf>, live: bool, record: Option<PathBuf>) -> Outcome {
    let out = out.unwrap_or_else(|| cfg.output_dir.join("gold.jsonl"));
    let record = record.or_else(|| cfg.gold.rxnav_fixture.clone()).unwrap_or_else(|| cfg.output_dir.join("rxnav_fixture.json"));
    let rt = Runtime::with_rxnav(cfg, if live { RxNavMode::Live } else { RxNavMode::Replay })?;
    let mut body = String::new();
    let mut failures = 0;
    for (enc, task, g) in rt.build_gold() {
        let line = match g {
            Ok(g) => json!({ "encounter_id": enc, "task": task, "gold": g }),
            Err(e) => {
                failures += 1;
                json!({ "encounter_id": enc, "task": task, "error": e.to_string() })
            }
        };
        body.push_str(&line.to_string());
        body.push('\n');
    }
    write_file(&out, &body)?;
    if let Some(rec) = &rt.gold.rxnav_recorder {
        rec.recording().save(&record).map_err(fatal)?;
        eprintln!("recorded RxNav responses to {}", record.display());
    }
    println!("{}", json!({ "gold": out, "failures": failures }));
    Ok(failures == 0)
}

fn run(cfg: ExperimentConfig) -> Outcome {
    let rt = Runtime::new(cfg)?;
    let s = rt.run()?;
    println!("{}", serde_json::to_string(&s).expect("summary serializes"));
    Ok(!s.has_failures())
}

fn score(cfg: ExperimentConfig, out: Option<PathBuf>) -> Outcome {
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let records = read_records(&cfg.results_path(), false).map_err(fatal)?;
    let rows = score_records(&records);
    write_file(&dir.join("scores.csv"), &write_scores_csv(&rows))?;
    let rt = Runtime::new(cfg)?;
    let baseline = baseline_summary(&rt);
    write_file(&dir.join("baseline.json"), &serde_json::to_string_pretty(&baseline).expect("baseline serializes"))?;
    let unscored = records.iter().filter(|r| !r.status.is_scored()).count();
    println!("{}", json!({ "records": records.len(), "unscored": unscored, "rows": rows.len(), "out": dir }));
    Ok(unscored == 0)
}

fn report(config: Option<PathBuf>, scores: Option<PathBuf>, out: &Path, log_x: bool) -> Outcome {
    let rows = match (config, scores) {
        (Some(c), _) => {
            let cfg = load_config(&c)?;
            score_records(&read_records(&cfg.results_path(), false).map_err(fatal)?)
        }
        (None, Some(s)) => {
            let f = fs::File::open(&s).map_err(|e| fatal(format!("{}: {e}", s.display())))?;
            read_scores_csv(f).map_err(|e| fatal(format!("{}: {e}", s.display())))?
        }
        (None, None) => unreachable!("clap requires one"),
    };
    let files = emit_report(&rows, out, ReportOptions { log_x }).map_err(fatal)?;
    println!("{}", json!({ "markdown": files.markdown, "scores": files.scores_csv, "areas": files.areas_csv, "plots": files.plots.len() }));
    Ok(true)
}

fn replay(out: &Path) -> Outcome {
    let files = emit_report(&appendix_score_rows(), out, ReportOptions::default()).map_err(fatal)?;
    let replay = replay_area_differences().map_err(fatal)?;
    let mut csv = String::from("task,model,metric,published,computed,relative_residual\n");
    for r in &replay {
        csv.push_str(&format!("{},{},{},{},{:.4},{:.4}\n", r.task, r.model, r.metric, r.published, r.computed, r.relative_residual));
    }
    write_file(&out.join("replay_residuals.csv"), &csv)?;
    let mut stdout = std::io::stdout().lock();
    for r in &replay {
        let _ = writeln!(
            stdout,
            "{:<12} {:<22} {:<12} published {:>8.2}%  computed {:>8.2}%  residual {:+.1}%",
            r.task,
            r.metric,
            r.model,
            r.published,
            r.computed,
            100.0 * r.relative_residual
        );
    }
    let _ = writeln!(stdout, "tables written to {}", files.markdown.display());
    Ok(true)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Ingest { corpus, schema, out } => ingest(&corpus, &schema, out.as_deref()),
        Command::Synth { out, config, seed, encounters } => synth(&out, config.as_deref(), seed, encounters),
        Command::Index(a) => {
            let rt = Runtime::new(load_config(&a.config)?)?;
            let n = rt.build_indexes()?;
            println!("{}", json!({ "indexes": n, "dir": rt.cfg.index_dir() }));
            Ok(true)
        }
        Command::Gold { cfg, out, rxnav_live, record } => gold(load_config(&cfg.config)?, out, rxnav_live, record),
        Command::Run(a) => run(load_config(&a.config)?),
        Command::Score { cfg, out } => score(load_config(&cfg.config)?, out),
        Command::Report { config, scores, out, log_x } => report(config, scores, &out, log_x),
        Command::ReplayPublished { out } => replay(&out),
        Command::Compact(a) => {
            let cfg = load_config(&a.config)?;
            let (before, after) = compact(&cfg.results_path()).map_err(fatal)?;
            println!("{}", json!({ "before": before, "after": after }));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Fatal(msg)) => {
            eprintln!("fatal: {msg}");
            ExitCode::from(3)
        }
    }
}
