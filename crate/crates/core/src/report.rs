//! Line-level parse diagnostics shared by the output parsers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineIssue {
    /// 1-based.
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub issues: Vec<LineIssue>,
    /// Lines accepted but carrying a soft problem (e.g. a date outside the stay).
    pub flagged: Vec<LineIssue>,
}

impl ParseReport {
    pub fn issue(&mut self, line: usize, text: &str, reason: impl Into<String>) {
        self.issues.push(LineIssue { line, text: text.to_string(), reason: reason.into() });
    }

    pub fn flag(&mut self, line: usize, text: &str, reason: impl Into<String>) {
        self.flagged.push(LineIssue { line, text: text.to_string(), reason: reason.into() });
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}
