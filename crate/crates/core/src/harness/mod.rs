//! Synthetic worlds, datasets, evaluation and the experiment grid runner.

mod dataset;
mod eval;
mod experiment;
mod synth;

pub use dataset::{load_dataset, save_corpus, ClassCounts, DatasetStats};
pub use eval::{evaluate, EvalReport};
pub use experiment::{run_experiment, CellReport, DataSource, DescriptorSequence, ExperimentGrid, ExperimentReport};
pub use synth::{generate_synthetic, generate_synthetic_descriptors, SyntheticCorpus, SyntheticWorldConfig};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed` one word at a time; order-sensitive.
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(mix64(acc) ^ p))
}
