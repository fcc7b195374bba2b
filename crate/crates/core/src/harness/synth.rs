//! Synthetic place-labelled word streams with known per-place word processes.
//!
//! Every place owns a contiguous block of the vocabulary. At each frame the
//! current place emits, with probability `concentration`, a word from its own
//! block and otherwise a word from anywhere in the vocabulary. Both choices
//! are drawn from sparse, place-specific categorical distributions that
//! depend on the previous `generator_order − 1` words, so the stream carries
//! genuine higher-order structure.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::experiment::DescriptorSequence;
use crate::error::{Error, Result};
use crate::wordselect::WordSequence;

const TAG_WORLD: u64 = 1;
const TAG_OPEN: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_TEST: u64 = 4;
const TAG_CENTERS: u64 = 5;
const TAG_NOISE: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticWorldConfig {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub generator_order: usize,
    /// Per-frame probability of staying in the current place once the
    /// minimum dwell has elapsed.
    pub p_e_gen: f64,
    pub dwell_min: usize,
    pub dwell_max: usize,
    pub train_frames: usize,
    pub test_frames: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub seed: u64,
    /// Probability that a frame's word comes from its place's own vocabulary
    /// block rather than the whole vocabulary; 1 makes the places' word sets
    /// disjoint.
    pub concentration: f64,
    /// Dirichlet parameter of every conditional word distribution; small
    /// values give peaked, strongly history-dependent emissions.
    pub sparsity: f64,
    /// Probability of repeating the previous word instead of drawing a new
    /// one, mimicking consecutive frames that quantize identically.
    pub persistence: f64,
    /// Dimension of generated descriptors (descriptor-level worlds only).
    pub descriptor_dim: usize,
    /// Noise standard deviation around each word's descriptor centre.
    pub descriptor_noise: f64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        SyntheticWorldConfig {
            num_classes: 5,
            vocab_size: 100,
            generator_order: 2,
            p_e_gen: 0.99,
            dwell_min: 20,
            dwell_max: 600,
            train_frames: 10_000,
            test_frames: 5_000,
            train_sequences: 2,
            test_sequences: 1,
            seed: 1,
            concentration: 0.3,
            sparsity: 0.1,
            persistence: 0.0,
            descriptor_dim: 80,
            descriptor_noise: 0.35,
        }
    }
}

impl SyntheticWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        if self.vocab_size > u32::MAX as usize {
            return bad("vocab_size does not fit a word id".into());
        }
        if self.generator_order == 0 {
            return bad("generator_order must be at least 1".into());
        }
        if !(self.p_e_gen > 0.0 && self.p_e_gen <= 1.0) {
            return bad(format!("p_e_gen = {} is outside (0, 1]", self.p_e_gen));
        }
        if self.dwell_min == 0 || self.dwell_max < self.dwell_min {
            return bad(format!(
                "dwell bounds {}..{} are invalid",
                self.dwell_min, self.dwell_max
            ));
        }
        if self.train_sequences == 0 || self.test_sequences == 0 {
            return bad("at least one train and one test sequence are required".into());
        }
        if self.train_frames < self.train_sequences || self.test_frames < self.test_sequences {
            return bad("every sequence needs at least one frame".into());
        }
        if !(0.0..=1.0).contains(&self.concentration) {
            return bad(format!("concentration {} is outside [0, 1]", self.concentration));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return bad(format!("persistence {} is outside [0, 1)", self.persistence));
        }
        if !(self.sparsity > 0.0 && self.sparsity.is_finite()) {
            return bad(format!("sparsity {} must be positive", self.sparsity));
        }
        if self.descriptor_dim == 0 || !(self.descriptor_noise >= 0.0 && self.descriptor_noise.is_finite()) {
            return bad("descriptor_dim must be positive and descriptor_noise non-negative".into());
        }
        Ok(())
    }

    /// Vocabulary block `[start, end)` owned by place `class`.
    fn block(&self, class: usize) -> (usize, usize) {
        let k = self.vocab_size;
        let c = self.num_classes;
        if c >= k {
            let w = class % k;
            return (w, w + 1);
        }
        (class * k / c, (class + 1) * k / c)
    }
}

/// Labelled training and testing streams drawn from one synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<WordSequence>,
    pub test: Vec<WordSequence>,
    pub vocab_size: usize,
    pub classes: Vec<u32>,
}

/// The generating word processes, materialized lazily per history.
struct World<'a> {
    cfg: &'a SyntheticWorldConfig,
    gamma: Gamma<f64>,
    cache: HashMap<(u64, Vec<u32>), Vec<f64>>,
}

impl<'a> World<'a> {
    fn new(cfg: &'a SyntheticWorldConfig) -> Result<Self> {
        let gamma = Gamma::new(cfg.sparsity, 1.0)
            .map_err(|e| Error::Validation(format!("sparsity: {e}")))?;
        Ok(World {
            cfg,
            gamma,
            cache: HashMap::new(),
        })
    }

    /// Cumulative distribution over `[start, end)` for a keyed history.
    fn cdf(&mut self, key: u64, history: &[u32], start: usize, end: usize) -> &[f64] {
        let gamma = self.gamma;
        let seed = self.cfg.seed;
        self.cache
            .entry((key, history.to_vec()))
            .or_insert_with(|| {
                let mut parts = vec![key];
                parts.extend(history.iter().map(|&w| w as u64));
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &parts));
                let mut weights: Vec<f64> = (start..end).map(|_| gamma.sample(&mut rng)).collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 || !total.is_finite() {
                    weights.iter_mut().for_each(|w| *w = 1.0);
                }
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect()
            })
    }

    fn emit(&mut self, class: usize, history: &[u32], rng: &mut ChaCha8Rng) -> u32 {
        let own = rng.gen_bool(self.cfg.concentration);
        let u: f64 = rng.gen();
        let (key, start, end) = if own {
            let (s, e) = self.cfg.block(class);
            (derive_seed(TAG_WORLD, &[class as u64]), s, e)
        } else {
            (derive_seed(TAG_OPEN, &[class as u64]), 0, self.cfg.vocab_size)
        };
        let cdf = self.cdf(key, history, start, end);
        let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
        (start + idx) as u32
    }

    fn trajectory(&mut self, frames: usize, seed: u64) -> (Vec<u32>, Vec<u32>) {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = Vec::with_capacity(frames);
        let mut labels = Vec::with_capacity(frames);
        let mut class = rng.gen_range(0..cfg.num_classes);
        let mut dwell = 0usize;
        let context = cfg.generator_order - 1;
        for _ in 0..frames {
            if cfg.num_classes > 1 && dwell >= cfg.dwell_min && (dwell >= cfg.dwell_max || !rng.gen_bool(cfg.p_e_gen)) {
                let mut next = rng.gen_range(0..cfg.num_classes - 1);
                if next >= class {
                    next += 1;
                }
                class = next;
                dwell = 0;
            }
            let repeat = cfg.persistence > 0.0 && dwell > 0 && rng.gen_bool(cfg.persistence);
            let w = match words.last() {
                Some(&prev) if repeat => prev,
                _ => {
                    let h = words[words.len().saturating_sub(context)..].to_vec();
                    self.emit(class, &h, &mut rng)
                }
            };
            words.push(w);
            labels.push(class as u32);
            dwell += 1;
        }
        (words, labels)
    }
}

fn split_lengths(total: usize, parts: usize) -> impl Iterator<Item = usize> {
    (0..parts).map(move |i| total * (i + 1) / parts - total * i / parts)
}

/// Draws a world from `cfg.seed` and samples train and test trajectories
/// from it with disjoint sub-seeds.
pub fn generate_synthetic(cfg: &SyntheticWorldConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut world = World::new(cfg)?;
    let mut split = |tag: u64, frames: usize, count: usize, name: &str| -> Result<Vec<WordSequence>> {
        split_lengths(frames, count)
            .enumerate()
            .map(|(i, len)| {
                let (w, l) = world.trajectory(len, derive_seed(cfg.seed, &[tag, i as u64]));
                Ok(WordSequence::labeled(w, l)?.with_source_id(format!("{name}{:02}", i + 1)))
            })
            .collect()
    };
    let train = split(TAG_TRAIN, cfg.train_frames, cfg.train_sequences, "train")?;
    let test = split(TAG_TEST, cfg.test_frames, cfg.test_sequences, "test")?;
    Ok(SyntheticCorpus {
        train,
        test,
        vocab_size: cfg.vocab_size,
        classes: (0..cfg.num_classes as u32).collect(),
    })
}

/// Turns a synthetic word corpus into noisy descriptor streams.
///
/// Each latent word gets a random centre; a frame's descriptor is its
/// word's centre plus isotropic Gaussian noise.
pub fn generate_synthetic_descriptors(
    cfg: &SyntheticWorldConfig,
    corpus: &SyntheticCorpus,
) -> Result<(Vec<DescriptorSequence>, Vec<DescriptorSequence>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_CENTERS]));
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..corpus.vocab_size)
        .map(|_| (0..cfg.descriptor_dim).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, cfg.descriptor_noise)
        .map_err(|e| Error::Validation(format!("descriptor_noise: {e}")))?;

    let convert = |seqs: &[WordSequence], tag: u64| -> Vec<DescriptorSequence> {
        seqs.iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_NOISE, tag, i as u64]));
                let descriptors = s
                    .words()
                    .iter()
                    .map(|&w| {
                        centers[w as usize]
                            .iter()
                            .map(|c| c + noise.sample(&mut rng))
                            .collect()
                    })
                    .collect();
                DescriptorSequence {
                    source_id: s.source_id().to_string(),
                    descriptors,
                    labels: s.labels().map(<[u32]>::to_vec).unwrap_or_default(),
                }
            })
            .collect()
    };
    Ok((convert(&corpus.train, TAG_TRAIN), convert(&corpus.test, TAG_TEST)))
}
