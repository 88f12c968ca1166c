use std::hint::black_box;

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, Criterion};

use ehrrag_bench::sample_encounters;
use ehrrag_core::corpus::TaskKind;
use ehrrag_core::dx::{score_dx, DiagnosisEntry};
use ehrrag_core::imaging::{match_imaging, ImagingEvent, Modality, StrictnessLevel};
use ehrrag_core::indexer::embedding::{embed, EmbedKind};
use ehrrag_core::indexer::{chunk_note, ChunkIndex, ChunkParams, DeterministicTestProvider, RetrievalQuery, RuleTokenizer};

fn chunking(c: &mut Criterion) {
    let h = &sample_encounters(1)[0];
    let params = ChunkParams::default();
    c.bench_function("chunk one encounter", |b| {
        b.iter(|| h.notes.iter().map(|n| chunk_note(&h.encounter_id, n, &RuleTokenizer, params).len()).sum::<usize>())
    });
}

fn retrieval(c: &mut Criterion) {
    let h = &sample_encounters(1)[0];
    let provider = DeterministicTestProvider::new(1024);
    c.bench_function("index one encounter (1024 dims)", |b| {
        b.iter(|| ChunkIndex::build(black_box(h), &RuleTokenizer, ChunkParams::default(), &provider).unwrap().len())
    });
    let ix = ChunkIndex::build(h, &RuleTokenizer, ChunkParams::default(), &provider).unwrap();
    let q = RetrievalQuery::for_task(TaskKind::Imaging);
    let qv = embed(std::slice::from_ref(&q.text), EmbedKind::Query, &provider).unwrap().remove(0);
    c.bench_function(&format!("top-60 of {} chunks", ix.len()), |b| b.iter(|| ix.retrieve_top_n(black_box(&qv), 60).unwrap().len()));
}

fn matching(c: &mut Criterion) {
    let day = |d| NaiveDate::from_ymd_opt(2023, 3, d);
    let mods = [Modality::Ct, Modality::XRay];
    let events: Vec<ImagingEvent> = (0..6).map(|i| ImagingEvent::new(mods[i % 2], day(1 + i as u32 / 2), "chest")).collect();
    let shifted: Vec<ImagingEvent> = (0..6).map(|i| ImagingEvent::new(mods[i % 2], day(2 + i as u32 / 2), "chest")).collect();
    c.bench_function("imaging match 6x6 (+-1 day)", |b| {
        b.iter(|| match_imaging(black_box(&shifted), black_box(&events), StrictnessLevel::ModDatePm1))
    });
    let cats = ["INF002", "GEN002", "RSP012", "CIR008", "GEN003", "CIR019"];
    let entries: Vec<DiagnosisEntry> = (0..6)
        .map(|i| DiagnosisEntry {
            surface_text: None,
            icd_codes: Default::default(),
            ccsr: [cats[i], cats[(i + 1) % 6]].iter().map(|s| s.to_string()).collect(),
        })
        .collect();
    c.bench_function("diagnosis match 6x6", |b| b.iter(|| score_dx(black_box(&entries), black_box(&entries[1..]))));
}

criterion_group!(benches, chunking, retrieval, matching);
criterion_main!(benches);
