//! Metric-vs-budget curves, normalized area difference, and report output.

pub mod published;
mod report;
mod svg;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use report::{emit_report, read_scores_csv, render_markdown, write_scores_csv, ReportFiles, ReportOptions, SCORES_CSV_HEADER};
pub use svg::{render_svg_plot, PlotSeries};

use crate::contexts::ContextStrategy;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("curve {0} has fewer than two points")]
    InsufficientPoints(String),
    #[error("curve {label} has two points at x = {x}")]
    DuplicateX { label: String, x: f64 },
    #[error("curves {a} and {b} share no x-range")]
    NoOverlap { a: String, b: String },
    #[error("baseline curve {0} has zero area")]
    ZeroBaselineArea(String),
    #[error("row for {0} has no measured token count")]
    MissingTokens(String),
}

/// One aggregated score: a (task, model, strategy, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task: String,
    pub model: String,
    pub strategy: ContextStrategy,
    pub metric: String,
    pub value: f64,
    pub n_encounters: usize,
    pub run_id: String,
    /// Mean rendered prompt tokens across encounters.
    #[serde(default)]
    pub mean_prompt_tokens: Option<f64>,
    /// Source text of `value` when it came from a table, kept for display.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_text: Option<String>,
}

impl ScoreRow {
    pub fn display_value(&self) -> String {
        match &self.value_text {
            Some(t) => t.clone(),
            None if self.metric.contains("jaccard") => format!("{:.4}", self.value),
            None => format!("{:.2}", self.value),
        }
    }
}

/// Nominal x for a RAG run with `n` chunks: 20/40/60 → 3000/5500/8000,
/// extended linearly.
pub fn rag_nominal_tokens(n: usize) -> f64 {
    500.0 + 125.0 * n as f64
}

pub fn nominal_x(strategy: ContextStrategy) -> f64 {
    match strategy {
        ContextStrategy::Rag(n) => rag_nominal_tokens(n),
        ContextStrategy::RecentNotes(b) | ContextStrategy::FullContext(b) => b as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XConvention {
    Nominal,
    MeasuredMeanTokens,
}

impl XConvention {
    pub const ALL: [XConvention; 2] = [XConvention::Nominal, XConvention::MeasuredMeanTokens];

    pub fn as_str(self) -> &'static str {
        match self {
            XConvention::Nominal => "nominal",
            XConvention::MeasuredMeanTokens => "measured",
        }
    }
}

/// RAG versus budgeted note packing (recent and full-context share a curve).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Rag,
    RecentNotes,
}

impl Family {
    pub fn of(s: ContextStrategy) -> Self {
        if s.is_rag() {
            Family::Rag
        } else {
            Family::RecentNotes
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rag => "RAG",
            Family::RecentNotes => "Recent Notes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    pub actual_mean_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CurveLabel {
    pub task: String,
    pub model: String,
    pub metric: String,
    pub family: Family,
    pub convention: XConvention,
}

impl fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}/{}", self.task, self.model, self.metric, self.family.as_str(), self.convention.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: CurveLabel,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Sorts by x and checks the curve invariants.
    pub fn new(label: CurveLabel, mut points: Vec<CurvePoint>) -> Result<Self, AnalysisError> {
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        if points.len() < 2 {
            return Err(AnalysisError::InsufficientPoints(label.to_string()));
        }
        if let Some(w) = points.windows(2).find(|w| w[0].x == w[1].x) {
            return Err(AnalysisError::DuplicateX { label: label.to_string(), x: w[0].x });
        }
        Ok(Self { label, points })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.points[0].x, self.points[self.points.len() - 1].x)
    }

    fn y_at(&self, x: f64) -> f64 {
        let p = &self.points;
        let i = p.partition_point(|q| q.x < x);
        if i < p.len() && p[i].x == x {
            return p[i].y;
        }
        let (a, b) = (p[i - 1], p[i]);
        a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
    }

    /// Trapezoidal area over `[lo, hi]` (inside the curve's x-range).
    pub fn area(&self, lo: f64, hi: f64) -> f64 {
        let mut xs = vec![lo];
        xs.extend(self.points.iter().map(|p| p.x).filter(|&x| x > lo && x < hi));
        xs.push(hi);
        xs.windows(2).map(|w| (w[1] - w[0]) * (self.y_at(w[0]) + self.y_at(w[1])) / 2.0).sum()
    }
}

/// 100 × (AUC_a − AUC_b) / AUC_b over the shared x-range.
pub fn normalized_area_difference(a: &Curve, b: &Curve) -> Result<f64, AnalysisError> {
    let (a0, a1) = a.x_range();
    let (b0, b1) = b.x_range();
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if lo >= hi {
        return Err(AnalysisError::NoOverlap { a: a.label.to_string(), b: b.label.to_string() });
    }
    let base = b.area(lo, hi);
    if base == 0.0 {
        return Err(AnalysisError::ZeroBaselineArea(b.label.to_string()));
    }
    Ok(100.0 * (a.area(lo, hi) - base) / base)
}

type GroupKey = (String, String, String, Family);

fn group_points(rows: &[ScoreRow], conv: XConvention) -> Result<BTreeMap<GroupKey, Vec<CurvePoint>>, AnalysisError> {
    let mut groups: BTreeMap<GroupKey, Vec<CurvePoint>> = BTreeMap::new();
    for r in rows {
        let x = match conv {
            XConvention::Nominal => nominal_x(r.strategy),
            XConvention::MeasuredMeanTokens => {
                r.mean_prompt_tokens.ok_or_else(|| AnalysisError::MissingTokens(format!("{}/{}/{}", r.task, r.model, r.strategy)))?
            }
        };
        groups
            .entry((r.task.clone(), r.model.clone(), r.metric.clone(), Family::of(r.strategy)))
            .or_default()
            .push(CurvePoint { x, y: r.value, actual_mean_tokens: r.mean_prompt_tokens });
    }
    Ok(groups)
}

fn label(k: GroupKey, convention: XConvention) -> CurveLabel {
    CurveLabel { task: k.0, model: k.1, metric: k.2, family: k.3, convention }
}

/// One curve per (task, model, metric, family); fails if any has < 2 points.
pub fn build_curves(rows: &[ScoreRow], conv: XConvention) -> Result<Vec<Curve>, AnalysisError> {
    group_points(rows, conv)?.into_iter().map(|(k, pts)| Curve::new(label(k, conv), pts)).collect()
}

/// Like [`build_curves`] but keeps going, returning what it skipped.
pub fn build_curves_lenient(rows: &[ScoreRow], conv: XConvention) -> (Vec<Curve>, Vec<AnalysisError>) {
    let groups = match group_points(rows, conv) {
        Ok(g) => g,
        Err(e) => return (Vec::new(), vec![e]),
    };
    let mut curves = Vec::new();
    let mut skipped = Vec::new();
    for (k, pts) in groups {
        match Curve::new(label(k, conv), pts) {
            Ok(c) => curves.push(c),
            Err(e) => skipped.push(e),
        }
    }
    (curves, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaDifference {
    pub task: String,
    pub model: String,
    pub metric: String,
    pub convention: XConvention,
    pub percent: f64,
}

/// RAG against recent-notes for every label that has both curves.
pub fn area_differences(curves: &[Curve]) -> (Vec<AreaDifference>, Vec<AnalysisError>) {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    for rag in curves.iter().filter(|c| c.label.family == Family::Rag) {
        let Some(recent) = curves.iter().find(|c| {
            c.label.family == Family::RecentNotes
                && c.label.task == rag.label.task
                && c.label.model == rag.label.model
                && c.label.metric == rag.label.metric
                && c.label.convention == rag.label.convention
        }) else {
            continue;
        };
        match normalized_area_difference(rag, recent) {
            Ok(percent) => out.push(AreaDifference {
                task: rag.label.task.clone(),
                model: rag.label.model.clone(),
                metric: rag.label.metric.clone(),
                convention: rag.label.convention,
                percent,
            }),
            Err(e) => errs.push(e),
        }
    }
    (out, errs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(pts: &[(f64, f64)]) -> Curve {
        let label = CurveLabel { task: "t".into(), model: "m".into(), metric: "f1".into(), family: Family::Rag, convention: XConvention::Nominal };
        Curve::new(label, pts.iter().map(|&(x, y)| CurvePoint { x, y, actual_mean_tokens: None }).collect()).unwrap()
    }

    #[test]
    fn identity_and_constant() {
        let a = curve(&[(3000.0, 10.0), (5500.0, 20.0), (8000.0, 25.0)]);
        assert_eq!(normalized_area_difference(&a, &a).unwrap(), 0.0);
        let two = curve(&[(1.0, 2.0), (5.0, 2.0)]);
        let one = curve(&[(1.0, 1.0), (5.0, 1.0)]);
        assert!((normalized_area_difference(&two, &one).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn shared_domain_interpolates() {
        // b spans [0, 10]; a spans [5, 15]. Shared [5, 10].
        let a = curve(&[(5.0, 1.0), (15.0, 1.0)]);
        let b = curve(&[(0.0, 0.0), (10.0, 10.0)]);
        // area of b on [5,10] = 37.5; area of a = 5
        assert!((normalized_area_difference(&a, &b).unwrap() - 100.0 * (5.0 - 37.5) / 37.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let z = curve(&[(1.0, 0.0), (2.0, 0.0)]);
        assert!(matches!(normalized_area_difference(&z, &z), Err(AnalysisError::ZeroBaselineArea(_))));
        let far = curve(&[(10.0, 1.0), (20.0, 1.0)]);
        assert!(matches!(normalized_area_difference(&far, &z), Err(AnalysisError::NoOverlap { .. })));
        let label = z.label.clone();
        assert!(matches!(Curve::new(label, vec![CurvePoint { x: 1.0, y: 1.0, actual_mean_tokens: None }]), Err(AnalysisError::InsufficientPoints(_))));
    }

    #[test]
    fn nominal_mapping() {
        assert_eq!([20, 40, 60].map(rag_nominal_tokens), [3000.0, 5500.0, 8000.0]);
    }

    fn row(strategy: &str, value: f64) -> ScoreRow {
        ScoreRow {
            task: "imaging".into(),
            model: "m".into(),
            strategy: strategy.parse().unwrap(),
            metric: "f1".into(),
            value,
            n_encounters: 1,
            run_id: String::new(),
            mean_prompt_tokens: None,
            value_text: None,
        }
    }

    #[test]
    fn curves_from_rows() {
        let rows = [row("rag:20", 1.0), row("rag:40", 2.0), row("rag:60", 3.0), row("recent:3000", 1.0)];
        let (curves, skipped) = build_curves_lenient(&rows, XConvention::Nominal);
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].points.len(), 3);
        assert_eq!(skipped.len(), 1);
        assert!(build_curves(&rows, XConvention::Nominal).is_err());
        assert!(matches!(build_curves(&rows, XConvention::MeasuredMeanTokens), Err(AnalysisError::MissingTokens(_))));
    }
}
