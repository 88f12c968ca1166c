//! RxNav REST access behind a record/replay transport.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RXNAV_BASE_URL: &str = "https://rxnav.nlm.nih.gov";

#[derive(Debug, thiserror::Error)]
pub enum RxNormError {
    #[error("rxnav request failed: {0}")]
    Http(String),
    #[error("no recorded response for `{0}` (replay mode)")]
    NotRecorded(String),
    #[error("unexpected rxnav payload for `{path}`: {message}")]
    Payload { path: String, message: String },
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

/// Raw GET against RxNav; `path` includes the query string.
pub trait RxNavTransport: Send + Sync {
    fn get(&self, path: &str) -> Result<Value, RxNormError>;
}

/// Recorded RxNav responses keyed by request path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RxNavFixture {
    #[serde(default)]
    pub note: String,
    pub responses: BTreeMap<String, Value>,
}

impl RxNavFixture {
    pub fn load(path: &Path) -> Result<Self, RxNormError> {
        let err = |message: String| RxNormError::Fixture { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RxNormError> {
        let err = |message: String| RxNormError::Fixture { path: path.display().to_string(), message };
        let text = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| err(e.to_string()))
    }
}

enum Mode {
    Live { base_url: String, agent: ureq::Agent },
    Replay,
}

/// Live mode forwards to RxNav and records every body; replay mode only
/// answers from the fixture.
pub struct RecordingRxNav {
    mode: Mode,
    recorded: Mutex<RxNavFixture>,
}

impl RecordingRxNav {
    pub fn live(base_url: &str) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(std::time::Duration::from_secs(30))).build().new_agent();
        Self { mode: Mode::Live { base_url: base_url.trim_end_matches('/').to_string(), agent }, recorded: Mutex::default() }
    }

    pub fn replay(fixture: RxNavFixture) -> Self {
        Self { mode: Mode::Replay, recorded: Mutex::new(fixture) }
    }

    pub fn recording(&self) -> RxNavFixture {
        self.recorded.lock().unwrap().clone()
    }
}

impl<T: RxNavTransport + ?Sized> RxNavTransport for std::sync::Arc<T> {
    fn get(&self, path: &str) -> Result<Value, RxNormError> {
        (**self).get(path)
    }
}

impl RxNavTransport for RecordingRxNav {
    fn get(&self, path: &str) -> Result<Value, RxNormError> {
        if let Some(v) = self.recorded.lock().unwrap().responses.get(path) {
            return Ok(v.clone());
        }
        match &self.mode {
            Mode::Replay => Err(RxNormError::NotRecorded(path.to_string())),
            Mode::Live { base_url, agent } => {
                let url = format!("{base_url}{path}");
                log::debug!("rxnav GET {url}");
                let body: Value = agent
                    .get(&url)
                    .call()
                    .map_err(|e| RxNormError::Http(e.to_string()))?
                    .body_mut()
                    .read_json()
                    .map_err(|e| RxNormError::Http(e.to_string()))?;
                self.recorded.lock().unwrap().responses.insert(path.to_string(), body.clone());
                Ok(body)
            }
        }
    }
}

pub fn approximate_term_path(term: &str) -> String {
    format!("/REST/approximateTerm.json?term={}&maxEntries=1", encode_query(term))
}

pub fn related_ingredients_path(rxcui: &str) -> String {
    format!("/REST/rxcui/{rxcui}/related.json?tty=IN")
}

pub fn properties_path(rxcui: &str) -> String {
    format!("/REST/rxcui/{rxcui}/properties.json")
}

fn encode_query(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// The two RxNav lookups needed for ingredient resolution.
pub struct RxNormClient<T: RxNavTransport> {
    transport: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub rxcui: String,
    pub name: Option<String>,
}

impl<T: RxNavTransport> RxNormClient<T> {
    pub fn new(transport: T) -> Self {
        Self { transport }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Best approximate-match concept, if any.
    pub fn approximate_term(&self, term: &str) -> Result<Option<Candidate>, RxNormError> {
        let path = approximate_term_path(term);
        let body = self.transport.get(&path)?;
        let Some(cands) = body.pointer("/approximateGroup/candidate") else {
            return Ok(None);
        };
        let cands = cands.as_array().ok_or_else(|| RxNormError::Payload { path: path.clone(), message: "candidate is not a list".into() })?;
        let rank = |c: &Value| c.get("rank").and_then(Value::as_str).and_then(|r| r.parse::<u32>().ok()).unwrap_or(u32::MAX);
        let best = cands.iter().filter(|c| c.get("rxcui").and_then(Value::as_str).is_some()).min_by_key(|c| rank(c));
        Ok(best.map(|c| Candidate {
            rxcui: c["rxcui"].as_str().unwrap().to_string(),
            name: c.get("name").and_then(Value::as_str).map(str::to_string),
        }))
    }

    /// Ingredient (tty=IN) names related to `rxcui`, lowercased and sorted.
    /// A concept that is itself an ingredient resolves to its own name.
    pub fn ingredients(&self, rxcui: &str) -> Result<Vec<String>, RxNormError> {
        let body = self.transport.get(&related_ingredients_path(rxcui))?;
        let mut names: Vec<String> = body
            .pointer("/relatedGroup/conceptGroup")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter(|g| g.get("tty").and_then(Value::as_str) == Some("IN"))
            .filter_map(|g| g.get("conceptProperties").and_then(Value::as_array))
            .flatten()
            .filter_map(|p| p.get("name").and_then(Value::as_str))
            .map(|n| n.trim().to_lowercase())
            .collect();
        names.sort();
        names.dedup();
        if names.is_empty() {
            let props = self.transport.get(&properties_path(rxcui))?;
            if props.pointer("/properties/tty").and_then(Value::as_str) == Some("IN") {
                if let Some(n) = props.pointer("/properties/name").and_then(Value::as_str) {
                    names.push(n.trim().to_lowercase());
                }
            }
        }
        Ok(names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn zosyn_fixture() -> RxNavFixture {
        let mut f = RxNavFixture::default();
        f.responses.insert(
            approximate_term_path("zosyn"),
            json!({"approximateGroup": {"inputTerm": "zosyn", "candidate": [
                {"rxcui": "999", "rank": "2", "name": "other"},
                {"rxcui": "203134", "rank": "1", "name": "Zosyn"}]}}),
        );
        f.responses.insert(
            related_ingredients_path("203134"),
            json!({"relatedGroup": {"rxcui": "203134", "termType": ["IN"], "conceptGroup": [
                {"tty": "IN", "conceptProperties": [{"rxcui": "8339", "name": "piperacillin", "tty": "IN"},
                                                    {"rxcui": "37617", "name": "tazobactam", "tty": "IN"}]}]}}),
        );
        f
    }

    #[test]
    fn replay_resolves_brand() {
        let client = RxNormClient::new(RecordingRxNav::replay(zosyn_fixture()));
        let c = client.approximate_term("zosyn").unwrap().unwrap();
        assert_eq!(c.rxcui, "203134");
        assert_eq!(client.ingredients("203134").unwrap(), vec!["piperacillin", "tazobactam"]);
        assert!(matches!(client.approximate_term("nothing"), Err(RxNormError::NotRecorded(_))));
    }

    #[test]
    fn ingredient_concept_resolves_to_itself() {
        let mut f = RxNavFixture::default();
        f.responses.insert(related_ingredients_path("11124"), json!({"relatedGroup": {"rxcui": "11124", "termType": ["IN"], "conceptGroup": [{"tty": "IN"}]}}));
        f.responses.insert(properties_path("11124"), json!({"properties": {"rxcui": "11124", "name": "Vancomycin", "tty": "IN"}}));
        let client = RxNormClient::new(RecordingRxNav::replay(f));
        assert_eq!(client.ingredients("11124").unwrap(), vec!["vancomycin"]);
    }

    #[test]
    fn live_mode_records() {
        let body = r#"{"approximateGroup":{"inputTerm":"vancomycin","candidate":[{"rxcui":"11124","rank":"1","name":"vancomycin"}]}}"#;
        let server = crate::testing::OneShotServer::start(vec![(200, body.to_string())]);
        let client = RxNormClient::new(RecordingRxNav::live(&server.url()));
        assert_eq!(client.approximate_term("vancomycin").unwrap().unwrap().rxcui, "11124");
        // second call served from the recording, not the (now exhausted) server
        assert_eq!(client.approximate_term("vancomycin").unwrap().unwrap().rxcui, "11124");
        let rec = client.transport().recording();
        assert!(rec.responses.contains_key("/REST/approximateTerm.json?term=vancomycin&maxEntries=1"));
        assert!(server.requests()[0].head.starts_with("GET /REST/approximateTerm.json?term=vancomycin"));
    }

    #[test]
    fn query_encoding() {
        assert_eq!(approximate_term_path("pip/tazo 4.5"), "/REST/approximateTerm.json?term=pip%2Ftazo+4.5&maxEntries=1");
    }
}
