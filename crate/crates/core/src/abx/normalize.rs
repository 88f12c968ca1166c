//! Medication name → ingredient set, via overrides, a cache, then RxNorm.

use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;
use std::sync::{LazyLock, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::rxnorm::{RxNavTransport, RxNormClient, RxNormError};

pub type IngredientSet = BTreeSet<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationSource {
    Override,
    RxNorm,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalized {
    pub ingredients: IngredientSet,
    pub source: NormalizationSource,
}

impl Normalized {
    pub fn resolved(&self) -> bool {
        self.source != NormalizationSource::Unresolved
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OverrideError {
    #[error("override file: {0}")]
    Io(#[from] std::io::Error),
    #[error("override file: {0}")]
    Csv(#[from] csv::Error),
    #[error("override row {0}: empty ingredient list")]
    Empty(usize),
}

/// Object-safe view of an RxNorm client.
pub trait IngredientLookup: Send + Sync {
    fn lookup(&self, term: &str) -> Result<Option<IngredientSet>, RxNormError>;
}

impl<T: RxNavTransport> IngredientLookup for RxNormClient<T> {
    fn lookup(&self, term: &str) -> Result<Option<IngredientSet>, RxNormError> {
        let Some(c) = self.approximate_term(term)? else {
            return Ok(None);
        };
        let ing = self.ingredients(&c.rxcui)?;
        Ok(Some(ing.into_iter().collect()))
    }
}

static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());
static PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^)]*\)\s*").unwrap());

pub fn name_key(name: &str) -> String {
    SPACES.replace_all(name.trim(), " ").to_lowercase()
}

pub struct MedicationNormalizer {
    overrides: HashMap<String, IngredientSet>,
    cache: RwLock<HashMap<String, Normalized>>,
    rx: Option<Box<dyn IngredientLookup>>,
}

impl MedicationNormalizer {
    pub fn new(rx: Option<Box<dyn IngredientLookup>>) -> Self {
        Self { overrides: HashMap::new(), cache: RwLock::default(), rx }
    }

    /// CSV rows of `raw_name,ingredient[;ingredient...]`.
    pub fn load_overrides(&mut self, r: impl Read) -> Result<usize, OverrideError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
        let mut n = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let raw = name_key(rec.get(0).unwrap_or(""));
            let ing: IngredientSet =
                rec.get(1).unwrap_or("").split(';').map(name_key).filter(|s| !s.is_empty()).collect();
            if raw.is_empty() || ing.is_empty() {
                return Err(OverrideError::Empty(i + 2));
            }
            self.overrides.insert(raw, ing);
            n += 1;
        }
        Ok(n)
    }

    pub fn load_overrides_path(&mut self, path: &Path) -> Result<usize, OverrideError> {
        self.load_overrides(std::fs::File::open(path)?)
    }

    pub fn insert_override(&mut self, raw: &str, ingredients: &[&str]) {
        self.overrides.insert(name_key(raw), ingredients.iter().map(|s| name_key(s)).collect());
    }

    /// Never fails: an unresolved name maps to `{lowercased name}`, flagged.
    pub fn normalize(&self, name: &str) -> Normalized {
        let key = name_key(name);
        if let Some(ing) = self.overrides.get(&key) {
            return Normalized { ingredients: ing.clone(), source: NormalizationSource::Override };
        }
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return hit.clone();
        }
        let out = self.resolve(&key);
        self.cache.write().unwrap().insert(key, out.clone());
        out
    }

    fn resolve(&self, key: &str) -> Normalized {
        let mut attempts = vec![key.to_string()];
        // "zosyn (piperacillin and tazobactam)" → also try "zosyn"
        let bare = name_key(&PAREN.replace_all(key, " "));
        if !bare.is_empty() && bare != key {
            if let Some(ing) = self.overrides.get(&bare) {
                return Normalized { ingredients: ing.clone(), source: NormalizationSource::Override };
            }
            attempts.push(bare);
        }
        if let Some(rx) = &self.rx {
            for term in &attempts {
                match rx.lookup(term) {
                    Ok(Some(ing)) if !ing.is_empty() => return Normalized { ingredients: ing, source: NormalizationSource::RxNorm },
                    Ok(_) => {}
                    Err(e) => log::warn!("rxnorm lookup for `{term}` failed: {e}"),
                }
            }
        }
        log::debug!("unresolved medication `{key}`");
        Normalized { ingredients: IngredientSet::from([key.to_string()]), source: NormalizationSource::Unresolved }
    }

    pub fn cached(&self) -> Vec<(String, Normalized)> {
        let mut v: Vec<_> = self.cache.read().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Table(HashMap<&'static str, Vec<&'static str>>);

    impl IngredientLookup for Table {
        fn lookup(&self, term: &str) -> Result<Option<IngredientSet>, RxNormError> {
            Ok(self.0.get(term).map(|v| v.iter().map(|s| s.to_string()).collect()))
        }
    }

    fn normalizer() -> MedicationNormalizer {
        let t = Table(HashMap::from([
            ("zosyn", vec!["piperacillin", "tazobactam"]),
            ("vancomycin", vec!["vancomycin"]),
        ]));
        let mut n = MedicationNormalizer::new(Some(Box::new(t)));
        n.load_overrides("raw_name,ingredients\nvancomicin,vancomycin\n".as_bytes()).unwrap();
        n
    }

    fn set(v: &[&str]) -> IngredientSet {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn examples() {
        let n = normalizer();
        assert_eq!(n.normalize("Zosyn").ingredients, set(&["piperacillin", "tazobactam"]));
        assert_eq!(n.normalize("Zosyn (piperacillin and tazobactam)").ingredients, set(&["piperacillin", "tazobactam"]));
        assert_eq!(n.normalize("vancomycin").ingredients, set(&["vancomycin"]));
        let typo = n.normalize("Vancomicin");
        assert_eq!((typo.ingredients, typo.source), (set(&["vancomycin"]), NormalizationSource::Override));
        let miss = n.normalize("Mystery Drug");
        assert_eq!((miss.resolved(), miss.ingredients), (false, set(&["mystery drug"])));
    }

    #[test]
    fn cached_after_first_lookup() {
        let n = normalizer();
        n.normalize("ZOSYN");
        assert_eq!(n.cached().len(), 1);
        n.normalize("zosyn");
        assert_eq!(n.cached().len(), 1);
    }
}
