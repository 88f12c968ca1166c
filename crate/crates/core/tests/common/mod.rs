//! Shared setup for end-to-end tests: a synthetic corpus on disk plus an
//! experiment config wired to the oracle and the bundled gold fixtures.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ehrrag_core::runner::{validate_config, ExperimentConfig};
use ehrrag_core::synth::{generate_corpus, write_synth, SynthConfig, SynthFiles};
use tempfile::TempDir;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub struct SynthWorld {
    pub dir: TempDir,
    pub files: SynthFiles,
}

impl SynthWorld {
    pub fn new(cfg: &SynthConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_corpus(cfg).unwrap();
        let files = write_synth(&out, &dir.path().join("synth")).unwrap();
        Self { dir, files }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    /// Config text for an oracle experiment writing to `output`.
    pub fn config_text(&self, output: &str, strategies: &[&str], extra: &str) -> String {
        let fx = fixtures();
        let list: Vec<String> = strategies.iter().map(|s| format!("\"{s}\"")).collect();
        let mut t = String::new();
        writeln!(t, "corpus = \"{}\"", self.files.corpus.display()).unwrap();
        writeln!(t, "output_dir = \"{}\"", self.path(output).display()).unwrap();
        writeln!(t, "strategies = [{}]", list.join(", ")).unwrap();
        writeln!(t, "concurrency = 4").unwrap();
        t.push_str(extra);
        writeln!(t, "\n[[providers]]\nid = \"oracle\"\nkind = \"oracle\"\ntruth_dir = \"{}\"", self.files.truth_dir.display()).unwrap();
        writeln!(t, "\n[gold]").unwrap();
        writeln!(t, "ccsr = \"{}\"", fx.join("ccsr_mini.csv").display()).unwrap();
        writeln!(t, "terminology = \"{}\"", fx.join("terminology.csv").display()).unwrap();
        writeln!(t, "rxnav_fixture = \"{}\"", fx.join("rxnav_fixture.json").display()).unwrap();
        writeln!(t, "medication_overrides = \"{}\"", fx.join("medication_overrides.csv").display()).unwrap();
        writeln!(t, "mar = \"{}\"", self.files.mar.display()).unwrap();
        t
    }

    pub fn config(&self, name: &str, output: &str, strategies: &[&str], extra: &str) -> ExperimentConfig {
        let p = self.path(name);
        std::fs::write(&p, self.config_text(output, strategies, extra)).unwrap();
        validate_config(&p).unwrap()
    }
}
