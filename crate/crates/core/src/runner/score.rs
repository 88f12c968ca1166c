//! Aggregation of run records into per-(task, model, strategy) scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::gold::{CellScores, TaskGold};
use super::store::RunRecord;
use super::Runtime;
use crate::abx::{score_abx, summarize_jaccard, AbxEncounterScore, JaccardSummary};
use crate::analysis::ScoreRow;
use crate::contexts::ContextStrategy;
use crate::corpus::TaskKind;
use crate::hashing::sha256_hex;
use crate::metrics::{Counts, Prf};

fn push_prf(out: &mut Vec<(String, f64)>, prefix: &str, p: Prf) {
    out.push((format!("{prefix}_precision"), p.precision));
    out.push((format!("{prefix}_recall"), p.recall));
    out.push((format!("{prefix}_f1"), p.f1));
}

/// Micro-averaged P/R/F1 per metric; antibiotic Jaccard as the mean of
/// per-encounter means (`jaccard`) and over all medication keys
/// (`jaccard_pooled`). Only scored cells count.
pub fn score_records(records: &[RunRecord]) -> Vec<ScoreRow> {
    let mut groups: BTreeMap<(TaskKind, String, ContextStrategy), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.is_scored() && r.scores.is_some()) {
        groups.entry((r.task, r.model.clone(), r.strategy)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((task, model, strategy), recs) in groups {
        let mut metrics: Vec<(String, f64)> = Vec::new();
        match task {
            TaskKind::Imaging => {
                let mut by_level: BTreeMap<&str, Vec<Counts>> = BTreeMap::new();
                for r in &recs {
                    if let Some(CellScores::Imaging { levels }) = &r.scores {
                        for (k, c) in levels {
                            by_level.entry(k.as_str()).or_default().push(*c);
                        }
                    }
                }
                for level in crate::imaging::StrictnessLevel::ALL {
                    if let Some(cs) = by_level.get(level.key()) {
                        push_prf(&mut metrics, level.key(), Prf::micro(cs));
                    }
                }
            }
            TaskKind::Antibiotics => {
                let scores: Vec<AbxEncounterScore> = recs
                    .iter()
                    .filter_map(|r| match &r.scores {
                        Some(CellScores::Antibiotics { name, jaccard, per_key }) => {
                            Some(AbxEncounterScore { counts: *name, jaccard: *jaccard, per_key: per_key.clone() })
                        }
                        _ => None,
                    })
                    .collect();
                push_prf(&mut metrics, "name", Prf::micro(scores.iter().map(|s| &s.counts)));
                let j = summarize_jaccard(&scores);
                metrics.push(("jaccard".into(), j.per_encounter));
                metrics.push(("jaccard_pooled".into(), j.pooled));
            }
            TaskKind::Diagnosis => {
                let mut by_target: BTreeMap<String, Vec<Counts>> = BTreeMap::new();
                for r in &recs {
                    if let Some(CellScores::Diagnosis { targets, .. }) = &r.scores {
                        for (t, c) in targets {
                            by_target.entry(t.as_str().to_string()).or_default().push(*c);
                        }
                    }
                }
                for (t, cs) in by_target {
                    push_prf(&mut metrics, &t, Prf::micro(&cs));
                }
            }
        }
        let encounters: BTreeSet<&str> = recs.iter().map(|r| r.encounter_id.as_str()).collect();
        let mut ids: Vec<&str> = recs.iter().map(|r| r.run_id.as_str()).collect();
        ids.sort_unstable();
        let run_id = sha256_hex(ids.join("\n").as_bytes())[..16].to_string();
        let mean_tokens = recs.iter().map(|r| r.prompt_tokens as f64).sum::<f64>() / recs.len() as f64;
        for (metric, value) in metrics {
            rows.push(ScoreRow {
                task: task.as_str().to_string(),
                model: model.clone(),
                strategy,
                metric,
                value,
                n_encounters: encounters.len(),
                run_id: run_id.clone(),
                mean_prompt_tokens: Some(mean_tokens),
                value_text: None,
            });
        }
    }
    rows
}

/// Scores of the structured-record baseline, which reads courses straight
/// from the medication administration record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub name: Prf,
    pub jaccard: JaccardSummary,
    pub encounters: usize,
}

/// `None` when no MAR is configured or no encounter has both MAR rows and gold.
pub fn baseline_summary(rt: &Runtime) -> Option<BaselineSummary> {
    if rt.gold.mar.is_empty() {
        return None;
    }
    let mut scores = Vec::new();
    for h in &rt.corpus.hospitalizations {
        let Ok(TaskGold::Antibiotics { courses, .. }) = rt.gold.build(h, TaskKind::Antibiotics, &rt.gateway) else {
            continue;
        };
        let pred = rt.gold.mar_courses(h).unwrap_or_default();
        scores.push(score_abx(&pred, &courses));
    }
    if scores.is_empty() {
        return None;
    }
    Some(BaselineSummary {
        name: Prf::micro(scores.iter().map(|s| &s.counts)),
        jaccard: summarize_jaccard(&scores),
        encounters: scores.len(),
    })
}
