pub mod corpus;
pub mod hashing;
pub mod indexer;
pub mod contexts;
pub mod llm;
#[cfg(test)]
pub(crate) mod testing;
pub mod dates;
pub mod matching;
pub mod metrics;
pub mod report;
pub mod imaging;
pub mod abx;
pub mod dx;
pub mod analysis;
pub mod synth;
pub mod runner;
