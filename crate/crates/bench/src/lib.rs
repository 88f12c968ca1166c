//! Shared inputs for the benchmarks in `benches/`.

use ehrrag_core::corpus::Hospitalization;
use ehrrag_core::synth::{generate_corpus, SynthConfig};

/// `n` synthetic hospitalizations with the default generator settings.
pub fn sample_encounters(n: usize) -> Vec<Hospitalization> {
    let cfg = SynthConfig { n_encounters: n, ..SynthConfig::default() };
    generate_corpus(&cfg).expect("default synth config is valid").corpus.hospitalizations
}
