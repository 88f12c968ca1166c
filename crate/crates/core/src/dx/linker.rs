//! Free-text diagnosis → ICD-10 codes.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ccsr::canonical_code;

pub trait DiagnosisLinker: Send + Sync {
    fn id(&self) -> &str;
    fn link(&self, text: &str) -> Result<BTreeSet<String>, LinkerError>;
}

#[derive(Debug, thiserror::Error)]
pub enum LinkerError {
    #[error("terminology file: {0}")]
    Io(#[from] std::io::Error),
    #[error("terminology file: {0}")]
    Csv(#[from] csv::Error),
    #[error("terminology row {0}: needs a term and a code")]
    ShortRow(usize),
    #[error("linker protocol: {0}")]
    Protocol(String),
}

static NON_ALNUM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^a-z0-9]+").unwrap());
static PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^)]*\)").unwrap());

/// Lowercase alphanumeric words joined by single spaces.
pub fn normalize_term(s: &str) -> String {
    NON_ALNUM.replace_all(&s.to_lowercase(), " ").trim().to_string()
}

/// Exact match on normalized terms and aliases.
#[derive(Debug, Clone, Default)]
pub struct DictionaryLinker {
    terms: HashMap<String, BTreeSet<String>>,
}

impl DictionaryLinker {
    /// Rows are `term,alias...,icd_code`; rows may have any number of aliases.
    pub fn from_reader(r: impl Read) -> Result<Self, LinkerError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let mut linker = Self::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
            if i == 0 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("term")) {
                continue;
            }
            let (Some((code, names)), true) = (fields.split_last(), fields.len() >= 2) else {
                return Err(LinkerError::ShortRow(i + 1));
            };
            for name in names {
                linker.add(name, code);
            }
        }
        Ok(linker)
    }

    pub fn from_path(path: &Path) -> Result<Self, LinkerError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn add(&mut self, term: &str, code: &str) {
        self.terms.entry(normalize_term(term)).or_default().insert(canonical_code(code));
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl DiagnosisLinker for DictionaryLinker {
    fn id(&self) -> &str {
        "dictionary"
    }

    fn link(&self, text: &str) -> Result<BTreeSet<String>, LinkerError> {
        let key = normalize_term(text);
        if let Some(c) = self.terms.get(&key) {
            return Ok(c.clone());
        }
        // "Septic shock (resolved)" → "septic shock"
        let bare = normalize_term(&PAREN.replace_all(text, " "));
        Ok(self.terms.get(&bare).cloned().unwrap_or_default())
    }
}

#[derive(Serialize)]
struct LinkRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct LinkResponse {
    codes: Vec<String>,
}

struct Pipes {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External linker speaking one JSON object per line over stdin/stdout.
pub struct SubprocessLinker {
    id: String,
    pipes: Mutex<Pipes>,
}

impl SubprocessLinker {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, LinkerError> {
        let mut child = Command::new(program).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| LinkerError::Protocol("no stdin".into()))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| LinkerError::Protocol("no stdout".into()))?);
        Ok(Self { id: format!("subprocess:{program}"), pipes: Mutex::new(Pipes { _child: child, stdin, stdout }) })
    }
}

impl DiagnosisLinker for SubprocessLinker {
    fn id(&self) -> &str {
        &self.id
    }

    fn link(&self, text: &str) -> Result<BTreeSet<String>, LinkerError> {
        let mut p = self.pipes.lock().unwrap();
        let line = serde_json::to_string(&LinkRequest { text }).map_err(|e| LinkerError::Protocol(e.to_string()))?;
        writeln!(p.stdin, "{line}")?;
        p.stdin.flush()?;
        let mut reply = String::new();
        if p.stdout.read_line(&mut reply)? == 0 {
            return Err(LinkerError::Protocol("linker closed its output".into()));
        }
        let r: LinkResponse = serde_json::from_str(reply.trim()).map_err(|e| LinkerError::Protocol(format!("{e}: {reply}")))?;
        Ok(r.codes.iter().map(|c| canonical_code(c)).collect())
    }
}

/// External linker behind `POST {url}` with `{"text"}` → `{"codes"}`.
pub struct HttpLinker {
    url: String,
    agent: ureq::Agent,
}

impl HttpLinker {
    pub fn new(url: &str) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(std::time::Duration::from_secs(60))).build().new_agent();
        Self { url: url.to_string(), agent }
    }
}

impl DiagnosisLinker for HttpLinker {
    fn id(&self) -> &str {
        &self.url
    }

    fn link(&self, text: &str) -> Result<BTreeSet<String>, LinkerError> {
        let r: LinkResponse = self
            .agent
            .post(&self.url)
            .send_json(LinkRequest { text })
            .map_err(|e| LinkerError::Protocol(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| LinkerError::Protocol(e.to_string()))?;
        Ok(r.codes.iter().map(|c| canonical_code(c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TERMS: &str = "term,aliases,icd_code\nchronic kidney disease,ckd,N18.9\nnon-ST elevation myocardial infarction,NSTEMI,nstemi type 1,I21.4\nseptic shock,R65.21\n";

    #[test]
    fn dictionary_examples() {
        let l = DictionaryLinker::from_reader(TERMS.as_bytes()).unwrap();
        assert_eq!(l.link("Chronic kidney disease").unwrap(), BTreeSet::from(["N189".to_string()]));
        assert_eq!(l.link("NSTEMI").unwrap(), BTreeSet::from(["I214".to_string()]));
        assert_eq!(l.link("Septic shock (resolved)").unwrap(), BTreeSet::from(["R6521".to_string()]));
        assert!(l.link("").unwrap().is_empty());
        assert!(l.link("broken leg").unwrap().is_empty());
    }

    #[test]
    fn http_linker_roundtrip() {
        let server = crate::testing::OneShotServer::start(vec![(200, r#"{"codes":["I12.9"]}"#.into())]);
        let l = HttpLinker::new(&format!("{}/link", server.url()));
        assert_eq!(l.link("hypertensive ckd").unwrap(), BTreeSet::from(["I129".to_string()]));
        let sent: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
        assert_eq!(sent, serde_json::json!({"text": "hypertensive ckd"}));
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_linker_roundtrip() {
        let script = r#"while IFS= read -r line; do echo '{"codes":["n17.9"]}'; done"#;
        let l = SubprocessLinker::spawn("sh", &["-c".into(), script.into()]).unwrap();
        assert_eq!(l.link("aki").unwrap(), BTreeSet::from(["N179".to_string()]));
        assert_eq!(l.link("again").unwrap(), BTreeSet::from(["N179".to_string()]));
    }
}
