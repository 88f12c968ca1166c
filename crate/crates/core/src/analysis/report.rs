use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::svg::{render_svg_plot, PlotSeries};
use super::{area_differences, build_curves_lenient, nominal_x, AreaDifference, Family, ScoreRow, XConvention};
use crate::contexts::ContextStrategy;

pub const SCORES_CSV_HEADER: &str = "task,model,strategy,budget,metric,value,n_encounters,run_id";

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    pub log_x: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportFiles {
    pub scores_csv: PathBuf,
    pub areas_csv: PathBuf,
    pub markdown: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn strategy_order(s: ContextStrategy) -> (u8, usize) {
    match s {
        ContextStrategy::Rag(n) => (0, n),
        ContextStrategy::RecentNotes(b) => (1, b),
        ContextStrategy::FullContext(b) => (1, b),
    }
}

fn size_label(s: ContextStrategy) -> String {
    match s {
        ContextStrategy::Rag(n) => format!("{n} chunks"),
        ContextStrategy::RecentNotes(b) | ContextStrategy::FullContext(b) => {
            let k = b as f64 / 1000.0;
            if b % 1000 == 0 { format!("{k:.0}K") } else { format!("{k}K") }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Models and metrics in first-seen order; rows sorted within.
fn sorted(rows: &[ScoreRow]) -> Vec<&ScoreRow> {
    let mut model_rank: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut metric_rank: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in rows {
        let n = model_rank.len();
        model_rank.entry((&r.task, &r.model)).or_insert(n);
        let n = metric_rank.len();
        metric_rank.entry((&r.task, &r.metric)).or_insert(n);
    }
    let mut v: Vec<&ScoreRow> = rows.iter().collect();
    v.sort_by_key(|r| (r.task.clone(), model_rank[&(r.task.as_str(), r.model.as_str())], strategy_order(r.strategy), metric_rank[&(r.task.as_str(), r.metric.as_str())]));
    v
}

pub fn write_scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from(SCORES_CSV_HEADER);
    s.push('\n');
    for r in sorted(rows) {
        let value = r.value_text.clone().unwrap_or_else(|| format!("{}", r.value));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.task),
            csv_field(&r.model),
            r.strategy,
            nominal_x(r.strategy),
            csv_field(&r.metric),
            value,
            r.n_encounters,
            r.run_id
        );
    }
    s
}

#[derive(Debug, serde::Deserialize)]
struct CsvRow {
    task: String,
    model: String,
    strategy: String,
    metric: String,
    value: String,
    n_encounters: usize,
    run_id: String,
}

/// Reads a file written by [`write_scores_csv`]. Measured token counts are
/// not part of the file, so only the nominal x-convention applies to the
/// result.
pub fn read_scores_csv(r: impl io::Read) -> Result<Vec<ScoreRow>, String> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let strategy = rec.strategy.parse().map_err(|e| format!("line {line}: {e}"))?;
        let value = rec.value.parse().map_err(|_| format!("line {line}: bad value `{}`", rec.value))?;
        out.push(ScoreRow {
            task: rec.task,
            model: rec.model,
            strategy,
            metric: rec.metric,
            value,
            n_encounters: rec.n_encounters,
            run_id: rec.run_id,
            mean_prompt_tokens: None,
            value_text: Some(rec.value),
        });
    }
    Ok(out)
}

fn areas_csv(areas: &[AreaDifference]) -> String {
    let mut s = String::from("task,model,metric,convention,percent\n");
    for a in areas {
        let _ = writeln!(s, "{},{},{},{},{:.4}", csv_field(&a.task), csv_field(&a.model), csv_field(&a.metric), a.convention.as_str(), a.percent);
    }
    s
}

/// Appendix-style tables: one per task, a row per (model, strategy),
/// a column per metric.
pub fn render_markdown(rows: &[ScoreRow], areas: &[AreaDifference]) -> String {
    let rows = sorted(rows);
    let mut by_task: BTreeMap<&str, Vec<&ScoreRow>> = BTreeMap::new();
    for r in &rows {
        by_task.entry(&r.task).or_default().push(r);
    }
    let mut s = String::from("# Scores\n");
    for (task, rs) in &by_task {
        let mut metrics: Vec<&str> = Vec::new();
        for r in rs {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        let _ = writeln!(s, "\n## {task}\n");
        let _ = writeln!(s, "| model | strategy | chunks/tokens | {} |", metrics.join(" | "));
        let _ = writeln!(s, "|---|---|---|{}", "---|".repeat(metrics.len()));
        let mut cells: Vec<((&str, ContextStrategy), BTreeMap<&str, String>)> = Vec::new();
        for r in rs {
            let key = (r.model.as_str(), r.strategy);
            match cells.last_mut() {
                Some((k, m)) if *k == key => {
                    m.insert(&r.metric, r.display_value());
                }
                _ => cells.push((key, BTreeMap::from([(r.metric.as_str(), r.display_value())]))),
            }
        }
        for ((model, strategy), m) in cells {
            let vals: Vec<&str> = metrics.iter().map(|k| m.get(k).map(String::as_str).unwrap_or("")).collect();
            let _ = writeln!(s, "| {model} | {} | {} | {} |", Family::of(strategy).as_str(), size_label(strategy), vals.join(" | "));
        }
    }
    if !areas.is_empty() {
        s.push_str("\n## Normalized area difference (RAG vs Recent Notes)\n\n| task | model | metric | x convention | percent |\n|---|---|---|---|---|\n");
        for a in areas {
            let _ = writeln!(s, "| {} | {} | {} | {} | {:.1}% |", a.task, a.model, a.metric, a.convention.as_str(), a.percent);
        }
    }
    s
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Writes `scores.csv`, `area_differences.csv`, `report.md` and one SVG per
/// (task, metric) under `dest`.
pub fn emit_report(rows: &[ScoreRow], dest: &Path, opts: ReportOptions) -> io::Result<ReportFiles> {
    std::fs::create_dir_all(dest)?;
    let mut areas = Vec::new();
    let mut nominal_curves = Vec::new();
    for conv in XConvention::ALL {
        let (curves, skipped) = build_curves_lenient(rows, conv);
        for e in skipped {
            log::info!("curve skipped: {e}");
        }
        let (a, errs) = area_differences(&curves);
        for e in errs {
            log::warn!("area difference skipped: {e}");
        }
        areas.extend(a);
        if conv == XConvention::Nominal {
            nominal_curves = curves;
        }
    }
    areas.sort_by(|a, b| (&a.task, &a.model, &a.metric, a.convention).cmp(&(&b.task, &b.model, &b.metric, b.convention)));

    let files = ReportFiles {
        scores_csv: dest.join("scores.csv"),
        areas_csv: dest.join("area_differences.csv"),
        markdown: dest.join("report.md"),
        plots: Vec::new(),
    };
    std::fs::write(&files.scores_csv, write_scores_csv(rows))?;
    std::fs::write(&files.areas_csv, areas_csv(&areas))?;
    std::fs::write(&files.markdown, render_markdown(rows, &areas))?;

    let mut plots = Vec::new();
    let mut by_plot: BTreeMap<(String, String), Vec<PlotSeries>> = BTreeMap::new();
    for c in &nominal_curves {
        by_plot.entry((c.label.task.clone(), c.label.metric.clone())).or_default().push(PlotSeries {
            name: format!("{} {}", c.label.model, c.label.family.as_str()),
            points: c.points.iter().map(|p| (p.x, p.y)).collect(),
            dashed: c.label.family == Family::RecentNotes,
        });
    }
    if !by_plot.is_empty() {
        std::fs::create_dir_all(dest.join("plots"))?;
    }
    for ((task, metric), series) in by_plot {
        let path = dest.join("plots").join(format!("{}_{}.svg", slug(&task), slug(&metric)));
        let x_label = if opts.log_x { "EHR tokens (log scale)" } else { "EHR tokens" };
        std::fs::write(&path, render_svg_plot(&format!("{task}: {metric}"), x_label, &metric, &series, opts.log_x))?;
        plots.push(path);
    }
    Ok(ReportFiles { plots, ..files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_set() {
        let dir = tempfile::tempdir().unwrap();
        let f = emit_report(&[], dir.path(), ReportOptions::default()).unwrap();
        assert_eq!(std::fs::read_to_string(&f.scores_csv).unwrap(), format!("{SCORES_CSV_HEADER}\n"));
        assert!(f.plots.is_empty());
        assert!(!dir.path().join("plots").exists());
    }

    #[test]
    fn scores_csv_round_trips() {
        let rows = crate::analysis::published::appendix_score_rows();
        let text = write_scores_csv(&rows);
        let back = read_scores_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), rows.len());
        assert_eq!(write_scores_csv(&back), text);
        assert!(read_scores_csv("task,model\nx".as_bytes()).is_err());
    }

    #[test]
    fn size_labels() {
        assert_eq!(size_label(ContextStrategy::RecentNotes(5500)), "5.5K");
        assert_eq!(size_label(ContextStrategy::FullContext(128000)), "128K");
        assert_eq!(size_label(ContextStrategy::Rag(20)), "20 chunks");
    }
}
