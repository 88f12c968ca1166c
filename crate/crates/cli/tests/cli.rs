use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ehrrag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehrrag")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|_| panic!("stdout: {text}\nstderr: {}", String::from_utf8_lossy(&o.stderr)))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

/// Synthesizes a small corpus under `dir` and writes an oracle experiment
/// config next to it.
fn setup(dir: &Path, extra: &str) -> PathBuf {
    let synth = dir.join("synth");
    let o = ehrrag(&["synth", "--out", synth.to_str().unwrap(), "--encounters", "4", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fx = fixtures();
    let cfg = format!(
        r#"corpus = "synth/corpus.jsonl"
output_dir = "out"
strategies = ["rag:20", "recent:3000", "full:128000"]
{extra}
[[providers]]
id = "oracle"
kind = "oracle"
truth_dir = "synth/truth"

[gold]
ccsr = "{fx}/ccsr_mini.csv"
terminology = "{fx}/terminology.csv"
rxnav_fixture = "{fx}/rxnav_fixture.json"
medication_overrides = "{fx}/medication_overrides.csv"
mar = "synth/mar.csv"
"#,
        fx = fx.display()
    );
    let p = dir.join("exp.toml");
    fs::write(&p, cfg).unwrap();
    p
}

#[test]
fn full_pipeline_through_the_cli() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path(), "");
    let c = cfg.to_str().unwrap();
    let out = d.path().join("out");

    let o = ehrrag(&["ingest", d.path().join("synth/corpus.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o)["records_loaded"], 4);

    let o = ehrrag(&["index", "--config", c]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o)["indexes"], 12);

    let o = ehrrag(&["gold", "--config", c]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("gold.jsonl")).unwrap().lines().count(), 12);

    let o = ehrrag(&["run", "--config", c]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!((s["executed"].as_u64(), s["ok"].as_u64()), (Some(36), Some(36)));

    let o = ehrrag(&["run", "--config", c]);
    assert_eq!(code(&o), 0);
    assert_eq!((stdout(&o)["skipped"].as_u64(), stdout(&o)["provider_calls"].as_u64()), (Some(36), Some(0)));

    let o = ehrrag(&["score", "--config", c]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(scores.lines().any(|l| l.contains("imaging") && l.contains("full:128000") && l.contains("mod_date_f1,100,")), "{scores}");
    let baseline: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("baseline.json")).unwrap()).unwrap();
    assert_eq!(baseline["encounters"], 4);

    let rep = d.path().join("report");
    let o = ehrrag(&["report", "--config", c, "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(rep.join("report.md")).unwrap().contains("imaging"));
    assert!(stdout(&o)["plots"].as_u64().unwrap() > 0);

    let rep2 = d.path().join("report2");
    let o = ehrrag(&["report", "--scores", out.join("scores.csv").to_str().unwrap(), "--out", rep2.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(rep2.join("scores.csv")).unwrap(), fs::read_to_string(rep.join("scores.csv")).unwrap());

    let o = ehrrag(&["compact", "--config", c]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o)["after"], 36);
}

#[test]
fn invalid_config_exits_1_and_names_fields() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.toml");
    fs::write(&p, "corpus = \"missing.jsonl\"\nstrategies = [\"nearest:5\"]\n").unwrap();
    let o = ehrrag(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["corpus", "strategies", "providers"] {
        assert!(err.contains(field), "{field} not named in: {err}");
    }
}

#[test]
fn provider_failures_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let script = d.path().join("script.json");
    fs::write(&script, "{}").unwrap();
    let cfg = setup(d.path(), "tasks = [\"imaging\"]\n");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(&format!("\n[[providers]]\nid = \"mock\"\nkind = \"mock\"\nscript = \"{}\"\n", script.display()));
    fs::write(&cfg, text).unwrap();
    let o = ehrrag(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o)["provider_errors"], 12);
}

#[test]
fn corrupt_results_store_is_fatal() {
    let d = tempfile::tempdir().unwrap();
    let cfg = setup(d.path(), "");
    fs::create_dir_all(d.path().join("out")).unwrap();
    fs::write(d.path().join("out/results.jsonl"), "garbage\n{}\n").unwrap();
    let o = ehrrag(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn ingest_reports_skipped_records_with_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("c.jsonl");
    fs::write(&p, "{not json\n").unwrap();
    let o = ehrrag(&["ingest", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout(&o)["records_loaded"], 0);
    let o = ehrrag(&["ingest", d.path().join("nope.jsonl").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn synth_rejects_bad_settings() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("s.toml");
    fs::write(&p, "duplication_rate = 2.0\nnote_tokens = [500, 100]\n").unwrap();
    let o = ehrrag(&["synth", "--out", d.path().join("x").to_str().unwrap(), "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("duplication_rate") && err.contains("note_tokens"), "{err}");
}

#[test]
fn replaying_published_tables_reports_residuals() {
    let d = tempfile::tempdir().unwrap();
    let o = ehrrag(&["replay-published", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("published   552.30%"), "{text}");
    let residuals = fs::read_to_string(d.path().join("replay_residuals.csv")).unwrap();
    assert_eq!(residuals.lines().count(), 25);
    assert!(d.path().join("report.md").exists());
}
