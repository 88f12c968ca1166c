use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::Modality;

const DEFAULT_RULES: &str = include_str!("../../rules/imaging_rules.csv");

// Qualifiers removed from every description regardless of modality.
// Laterality (LEFT/RIGHT/BILATERAL) is deliberately absent.
static QUALIFIERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"\b(?:W/O|WO|W/|WITH|WITHOUT)\s*(?:AND\s*(?:W/O|WO|WITHOUT)\s*)?(?:IV\s*|ORAL\s*|IV\s*AND\s*ORAL\s*)?CONTRAST\b",
        r"|\b\d+\s*\+?\s*VIEWS?\b|\b(?:ONE|TWO|THREE|FOUR|SINGLE)\s+VIEWS?\b",
        r"|\b(?:PA|AP)\s*(?:AND|&|/)\s*LAT(?:ERAL)?\b|\bPA\b|\bAP\b",
        r"|\bPORTABLE\b|\bSTAT\b|\bLIMITED\b|\bCOMPLETE\b|\bROUTINE\b|\bSTUDY\b|\bEXAM\b|\bONLY\b",
    ))
    .unwrap()
});

static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("rules file: {0}")]
    Csv(#[from] csv::Error),
    #[error("rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules row {row}: bad regex: {source}")]
    Regex { row: usize, source: regex::Error },
    #[error("rules row {row}: unknown modality `{value}`")]
    Modality { row: usize, value: String },
}

#[derive(Debug, Clone)]
pub struct ModalityRule {
    pub pattern: Regex,
    pub modality: Modality,
    pub strip: Option<Regex>,
    pub subtype: Option<String>,
    pub default_location: Option<String>,
}

#[derive(Debug, serde::Deserialize)]
struct RuleRow {
    pattern: String,
    modality: String,
    #[serde(default)]
    strip_tokens: String,
    #[serde(default)]
    subtype: Option<String>,
    #[serde(default)]
    default_location: Option<String>,
}

/// Ordered modality rules; the first matching rule wins.
#[derive(Debug, Clone)]
pub struct ModalityRules {
    rules: Vec<ModalityRule>,
}

impl Default for ModalityRules {
    fn default() -> Self {
        Self::from_reader(DEFAULT_RULES.as_bytes()).expect("built-in imaging rules parse")
    }
}

impl ModalityRules {
    pub fn from_path(path: &Path) -> Result<Self, RulesError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader(r: impl Read) -> Result<Self, RulesError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
        let mut rules = Vec::new();
        for (i, row) in rdr.deserialize::<RuleRow>().enumerate() {
            let row = row?;
            let n = i + 2;
            let modality = Modality::parse(&row.modality).ok_or(RulesError::Modality { row: n, value: row.modality.clone() })?;
            let pattern = Regex::new(&format!("(?i){}", row.pattern)).map_err(|source| RulesError::Regex { row: n, source })?;
            let strip = if row.strip_tokens.is_empty() {
                None
            } else {
                let alts: Vec<String> = row.strip_tokens.split('|').map(|t| format!(r"(?:^|\s){t}(?:\s|$)")).collect();
                Some(Regex::new(&format!("(?i){}", alts.join("|"))).map_err(|source| RulesError::Regex { row: n, source })?)
            };
            let nonempty = |s: Option<String>| s.map(|v| v.trim().to_lowercase()).filter(|v| !v.is_empty());
            rules.push(ModalityRule { pattern, modality, strip, subtype: nonempty(row.subtype), default_location: nonempty(row.default_location) });
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[ModalityRule] {
        &self.rules
    }

    /// Modality, subtype and lowercase location for a procedure description.
    pub fn classify(&self, description: &str) -> Option<(Modality, Option<String>, String)> {
        let upper = description.to_uppercase();
        let rule = self.rules.iter().find(|r| r.pattern.is_match(&upper))?;
        let mut rest = format!(" {upper} ");
        if let Some(strip) = &rule.strip {
            // Replace repeatedly: adjacent tokens share the separating space.
            loop {
                let next = strip.replace_all(&rest, " ").into_owned();
                if next == rest {
                    break;
                }
                rest = next;
            }
        }
        let rest = QUALIFIERS.replace_all(&rest, " ");
        let rest = SPACES.replace_all(&rest, " ");
        let mut location = rest.trim_matches(|c: char| c.is_whitespace() || ",;:-/&".contains(c)).to_lowercase();
        if location.is_empty() {
            location = rule.default_location.clone().unwrap_or_default();
        }
        Some((rule.modality, rule.subtype.clone(), location))
    }
}
