//! ICD-10-CM → CCSR category table in the HCUP CSV layout.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub type CategorySet = BTreeSet<String>;

#[derive(Debug, thiserror::Error)]
pub enum CcsrError {
    #[error("ccsr table: {0}")]
    Io(#[from] std::io::Error),
    #[error("ccsr table: {0}")]
    Csv(#[from] csv::Error),
    #[error("ccsr table has no `{0}` column")]
    MissingColumn(String),
    #[error("ccsr table contains no mappings")]
    EmptyTable,
    #[error("`{0}` is not an ICD-10 code")]
    InvalidCode(String),
}

static ICD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Z][0-9][0-9A-Z]{1,5}$").unwrap());

/// Uppercase, no dots, no quotes or whitespace.
pub fn canonical_code(code: &str) -> String {
    code.chars().filter(|c| !matches!(c, '.' | '\'' | '"') && !c.is_whitespace()).flat_map(char::to_uppercase).collect()
}

pub fn is_valid_code(code: &str) -> bool {
    ICD.is_match(&canonical_code(code))
}

fn clean(field: &str) -> &str {
    field.trim().trim_matches(|c| c == '\'' || c == '"').trim()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum LookupVia {
    Direct,
    /// Intersection over this many mapped descendant codes.
    Fallback { descendants: usize },
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcsrLookup {
    pub categories: CategorySet,
    pub via: LookupVia,
}

#[derive(Debug, Clone, Default)]
pub struct CcsrTable {
    codes: BTreeMap<String, CategorySet>,
    descriptions: BTreeMap<String, String>,
}

impl CcsrTable {
    pub fn load(path: &Path) -> Result<(Self, Vec<MalformedRow>), CcsrError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_reader(r: impl Read) -> Result<(Self, Vec<MalformedRow>), CcsrError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| clean(h).to_uppercase()).collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let code_col = col("ICD-10-CM CODE").ok_or_else(|| CcsrError::MissingColumn("ICD-10-CM CODE".into()))?;
        let cat_cols: Vec<(usize, Option<usize>)> = (1..=10)
            .filter_map(|i| col(&format!("CCSR CATEGORY {i}")).map(|c| (c, col(&format!("CCSR CATEGORY {i} DESCRIPTION")))))
            .collect();
        if cat_cols.is_empty() {
            return Err(CcsrError::MissingColumn("CCSR CATEGORY 1".into()));
        }
        let mut table = CcsrTable::default();
        let mut bad = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = match rec {
                Ok(r) => r,
                Err(e) => {
                    bad.push(MalformedRow { row, reason: e.to_string() });
                    continue;
                }
            };
            let code = canonical_code(rec.get(code_col).unwrap_or(""));
            if !ICD.is_match(&code) {
                bad.push(MalformedRow { row, reason: format!("bad code `{}`", rec.get(code_col).unwrap_or("")) });
                continue;
            }
            let mut cats = CategorySet::new();
            for &(c, d) in &cat_cols {
                let cat = clean(rec.get(c).unwrap_or("")).to_uppercase();
                if cat.is_empty() {
                    continue;
                }
                if let Some(desc) = d.and_then(|d| rec.get(d)).map(clean).filter(|s| !s.is_empty()) {
                    table.descriptions.entry(cat.clone()).or_insert_with(|| desc.to_string());
                }
                cats.insert(cat);
            }
            if cats.is_empty() {
                bad.push(MalformedRow { row, reason: format!("{code} has no category") });
                continue;
            }
            table.codes.entry(code).or_default().extend(cats);
        }
        if table.codes.is_empty() {
            return Err(CcsrError::EmptyTable);
        }
        log::info!("ccsr: {} codes, {} categories, {} malformed rows", table.codes.len(), table.category_count(), bad.len());
        Ok((table, bad))
    }

    pub fn code_count(&self) -> usize {
        self.codes.len()
    }

    pub fn category_count(&self) -> usize {
        self.codes.values().flatten().collect::<BTreeSet<_>>().len()
    }

    pub fn description(&self, category: &str) -> Option<&str> {
        self.descriptions.get(category).map(String::as_str)
    }

    pub fn direct(&self, code: &str) -> Option<&CategorySet> {
        self.codes.get(&canonical_code(code))
    }

    pub fn codes(&self) -> impl Iterator<Item = (&str, &CategorySet)> {
        self.codes.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Mapped codes strictly below `code` in the hierarchy.
    pub fn descendants<'a>(&'a self, code: &'a str) -> impl Iterator<Item = (&'a str, &'a CategorySet)> + 'a {
        self.codes
            .range::<str, _>((std::ops::Bound::Excluded(code), std::ops::Bound::Unbounded))
            .take_while(move |(k, _)| k.starts_with(code))
            .map(|(k, v)| (k.as_str(), v))
    }

    /// Direct mapping, else the intersection of the categories of every
    /// mapped descendant.
    pub fn lookup(&self, code: &str) -> Result<CcsrLookup, CcsrError> {
        let code = canonical_code(code);
        if !ICD.is_match(&code) {
            return Err(CcsrError::InvalidCode(code));
        }
        if let Some(c) = self.codes.get(&code) {
            return Ok(CcsrLookup { categories: c.clone(), via: LookupVia::Direct });
        }
        let mut n = 0;
        let mut acc: Option<CategorySet> = None;
        for (_, cats) in self.descendants(&code) {
            n += 1;
            acc = Some(match acc {
                None => cats.clone(),
                Some(a) => a.intersection(cats).cloned().collect(),
            });
        }
        Ok(match acc {
            Some(c) if !c.is_empty() => CcsrLookup { categories: c, via: LookupVia::Fallback { descendants: n } },
            _ => CcsrLookup { categories: CategorySet::new(), via: LookupVia::Unmapped },
        })
    }
}

pub fn load_ccsr(path: &Path) -> Result<(CcsrTable, Vec<MalformedRow>), CcsrError> {
    CcsrTable::load(path)
}

pub fn icd_to_ccsr(code: &str, table: &CcsrTable) -> Result<CcsrLookup, CcsrError> {
    table.lookup(code)
}
