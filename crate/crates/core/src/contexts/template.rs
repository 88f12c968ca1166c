use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::corpus::TaskKind;

pub const INSERT_TEXT: &str = "[INSERT TEXT]";
pub const TIMESTAMP: &str = "[TIMESTAMP]";

const IMAGING: &str = include_str!("../../templates/imaging.txt");
const ANTIBIOTICS: &str = include_str!("../../templates/antibiotics.txt");
const DIAGNOSIS: &str = include_str!("../../templates/diagnosis.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub task: TaskKind,
    text: String,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, task: TaskKind, text: impl Into<String>) -> Result<Self, String> {
        let text = text.into();
        let id = id.into();
        if text.matches(INSERT_TEXT).count() != 1 {
            return Err(format!("template {id}: expected exactly one {INSERT_TEXT}"));
        }
        let stamps = text.matches(TIMESTAMP).count();
        if task == TaskKind::Antibiotics && stamps != 1 {
            return Err(format!("template {id}: expected exactly one {TIMESTAMP}"));
        }
        if let Some(at) = text.find(TIMESTAMP) {
            if at > text.find(INSERT_TEXT).unwrap_or(0) {
                return Err(format!("template {id}: {TIMESTAMP} must precede {INSERT_TEXT}"));
            }
        }
        Ok(Self { id, task, text })
    }

    pub fn default_for(task: TaskKind) -> Self {
        let (id, text) = match task {
            TaskKind::Imaging => ("imaging-v1", IMAGING),
            TaskKind::Antibiotics => ("antibiotics-v1", ANTIBIOTICS),
            TaskKind::Diagnosis => ("diagnosis-v1", DIAGNOSIS),
        };
        Self::new(id, task, text).expect("bundled templates are valid")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn uses_timestamp(&self) -> bool {
        self.text.contains(TIMESTAMP)
    }

    /// Substitutes the placeholders. Replacement is literal and single-pass.
    pub fn render(&self, passages: &str, now: Option<NaiveDateTime>) -> String {
        let (head, tail) = self.text.split_once(INSERT_TEXT).expect("validated");
        let head = match now {
            Some(t) => head.replacen(TIMESTAMP, &format_now(t), 1),
            None => head.to_string(),
        };
        let mut out = String::with_capacity(head.len() + passages.len() + tail.len());
        out.push_str(&head);
        out.push_str(passages);
        out.push_str(tail);
        out
    }

    /// Recovers the substituted passage block from a rendered prompt, or
    /// `None` when `rendered` was not produced by this template.
    pub fn extract_passages<'r>(&self, rendered: &'r str) -> Option<&'r str> {
        let (head, tail) = self.text.split_once(INSERT_TEXT).expect("validated");
        let end = rendered.len().checked_sub(tail.len())?;
        if !rendered.ends_with(tail) {
            return None;
        }
        let mut pieces = head.split(TIMESTAMP);
        let first = pieces.next().unwrap_or("");
        if !rendered.starts_with(first) {
            return None;
        }
        let mut pos = first.len();
        for piece in pieces {
            let found = rendered.get(pos..end)?.find(piece)?;
            pos += found + piece.len();
        }
        rendered.get(pos..end)
    }
}

pub fn format_now(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// One template per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub imaging: PromptTemplate,
    pub antibiotics: PromptTemplate,
    pub diagnosis: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            imaging: PromptTemplate::default_for(TaskKind::Imaging),
            antibiotics: PromptTemplate::default_for(TaskKind::Antibiotics),
            diagnosis: PromptTemplate::default_for(TaskKind::Diagnosis),
        }
    }
}

impl TemplateSet {
    pub fn get(&self, task: TaskKind) -> &PromptTemplate {
        match task {
            TaskKind::Imaging => &self.imaging,
            TaskKind::Antibiotics => &self.antibiotics,
            TaskKind::Diagnosis => &self.diagnosis,
        }
    }

    /// Loads `imaging.txt`, `antibiotics.txt` and `diagnosis.txt` from `dir`,
    /// falling back to the bundled text for any file that is absent.
    pub fn from_dir(dir: &Path) -> Result<Self, String> {
        let load = |task: TaskKind| -> Result<PromptTemplate, String> {
            let path = dir.join(format!("{}.txt", task.as_str()));
            match fs::read_to_string(&path) {
                Ok(text) => PromptTemplate::new(path.display().to_string(), task, text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(PromptTemplate::default_for(task)),
                Err(e) => Err(format!("{}: {e}", path.display())),
            }
        };
        Ok(Self {
            imaging: load(TaskKind::Imaging)?,
            antibiotics: load(TaskKind::Antibiotics)?,
            diagnosis: load(TaskKind::Diagnosis)?,
        })
    }

    /// Identifies which task template produced `rendered`.
    pub fn identify<'r>(&self, rendered: &'r str) -> Option<(TaskKind, &'r str)> {
        TaskKind::ALL
            .into_iter()
            .find_map(|t| self.get(t).extract_passages(rendered).map(|block| (t, block)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn bundled_templates_keep_their_markers() {
        let set = TemplateSet::default();
        assert!(set.imaging.text().starts_with("# Task: Identification of Imaging Procedures"));
        assert!(set.imaging.text().contains("If no imaging procedures exist, output only: \"No imaging procedures identified.\""));
        assert!(set.antibiotics.text().contains("Right now it is [TIMESTAMP].\\n\\nEHR passages:\\n\\n[INSERT TEXT]"));
        assert!(set.diagnosis.text().contains("# EHR passages:\\n[INSERT TEXT]\\n"));
    }

    #[test]
    fn antibiotic_timestamp_substitution() {
        let t = PromptTemplate::default_for(TaskKind::Antibiotics);
        let now = NaiveDate::from_ymd_opt(2019, 9, 15).unwrap().and_hms_opt(14, 51, 0).unwrap();
        let out = t.render("BLOCK", Some(now));
        assert!(out.contains("Right now it is 2019-09-15 14:51:00."));
        assert_eq!(out.matches("Right now it is 2019-09-15 14:51:00.").count(), 2);
        assert_eq!(t.extract_passages(&out), Some("BLOCK"));
    }

    #[test]
    fn identify_routes_by_template() {
        let set = TemplateSet::default();
        let r = set.diagnosis.render("x\ny", None);
        assert_eq!(set.identify(&r), Some((TaskKind::Diagnosis, "x\ny")));
        let r = set.imaging.render("", None);
        assert_eq!(set.identify(&r), Some((TaskKind::Imaging, "")));
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(PromptTemplate::new("t", TaskKind::Imaging, "no placeholder").is_err());
        assert!(PromptTemplate::new("t", TaskKind::Antibiotics, "[INSERT TEXT]").is_err());
        assert!(PromptTemplate::new("t", TaskKind::Imaging, "[INSERT TEXT][INSERT TEXT]").is_err());
    }

    #[test]
    fn from_dir_overrides_single_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("imaging.txt"), "List imaging:\n[INSERT TEXT]\n").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.imaging.text(), "List imaging:\n[INSERT TEXT]\n");
        assert_eq!(set.diagnosis, PromptTemplate::default_for(TaskKind::Diagnosis));
    }
}
