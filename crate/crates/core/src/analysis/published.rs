//! Published appendix tables, shipped as fixtures for replay.

use serde::{Deserialize, Serialize};

use super::{area_differences, build_curves, AnalysisError, ScoreRow, XConvention};

pub const APPENDIX_SCORES_CSV: &str = include_str!("../../fixtures/published_tables/appendix_scores.csv");
pub const AREA_DIFFERENCES_CSV: &str = include_str!("../../fixtures/published_tables/area_differences.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedScore {
    pub table: String,
    pub task: String,
    pub model: String,
    /// `mar` for the structured baseline row.
    pub strategy: String,
    pub metric: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedArea {
    pub task: String,
    pub metric: String,
    pub model: String,
    pub percent: f64,
}

pub fn appendix_scores() -> Vec<PublishedScore> {
    csv::Reader::from_reader(APPENDIX_SCORES_CSV.as_bytes()).deserialize().map(|r| r.expect("appendix fixture parses")).collect()
}

pub fn published_areas() -> Vec<PublishedArea> {
    csv::Reader::from_reader(AREA_DIFFERENCES_CSV.as_bytes()).deserialize().map(|r| r.expect("area fixture parses")).collect()
}

/// Model rows as score rows (the structured baseline is left out).
pub fn appendix_score_rows() -> Vec<ScoreRow> {
    appendix_scores()
        .into_iter()
        .filter_map(|p| {
            let strategy = p.strategy.parse().ok()?;
            Some(ScoreRow {
                task: p.task,
                model: p.model,
                strategy,
                metric: p.metric,
                value: p.value.parse().expect("numeric fixture value"),
                n_encounters: 0,
                run_id: format!("table{}", p.table),
                mean_prompt_tokens: None,
                value_text: Some(p.value),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayComparison {
    pub task: String,
    pub model: String,
    pub metric: String,
    pub published: f64,
    pub computed: f64,
    /// (computed − published) / |published|.
    pub relative_residual: f64,
}

/// Recomputes every published area difference from the appendix values,
/// restricting RAG and recent-notes curves to the 3K–8K comparable range.
pub fn replay_area_differences() -> Result<Vec<ReplayComparison>, AnalysisError> {
    let rows: Vec<ScoreRow> = appendix_score_rows().into_iter().filter(|r| super::nominal_x(r.strategy) <= 8000.0).collect();
    let curves = build_curves(&rows, XConvention::Nominal)?;
    let (computed, errs) = area_differences(&curves);
    if let Some(e) = errs.into_iter().next() {
        return Err(e);
    }
    Ok(published_areas()
        .into_iter()
        .filter_map(|p| {
            let c = computed.iter().find(|c| c.task == p.task && c.model == p.model && c.metric == p.metric)?;
            Some(ReplayComparison {
                relative_residual: (c.percent - p.percent) / p.percent.abs(),
                task: p.task,
                model: p.model,
                metric: p.metric,
                published: p.percent,
                computed: c.percent,
            })
        })
        .collect())
}
