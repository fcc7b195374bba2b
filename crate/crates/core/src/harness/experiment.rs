//! Grid runner: every combination of dictionary, word selection, smoother
//! and n-gram order is trained and evaluated independently.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetStats;
use super::derive_seed;
use super::eval::{evaluate, EvalReport};
use crate::error::{Error, Result};
use crate::filter::{Belief, Filter, TransitionMatrix};
use crate::ngram::{train_class_models, SmoothingSpec};
use crate::som::{train_som, SomTrainConfig};
use crate::wordselect::{runs, SelectionStrategy, WordSequence};

/// Parameter grid; defaults reproduce the published protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub orders: Vec<usize>,
    pub smoothers: Vec<SmoothingSpec>,
    pub strategies: Vec<SelectionStrategy>,
    /// Map sides; only used with descriptor data.
    pub som_sides: Vec<usize>,
    /// Maps trained per side, seeded `seed, seed + 1, …`.
    pub repeats: usize,
    pub p_e: f64,
    pub seed: u64,
    pub som_epochs: usize,
    pub som_learning_rate: f64,
    /// Fraction of the training descriptors, drawn at random, used to fit
    /// each map.
    pub som_train_fraction: f64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            orders: (1..=6).collect(),
            smoothers: vec![SmoothingSpec::LAPLACE, SmoothingSpec::WittenBell],
            strategies: vec![
                SelectionStrategy::None,
                SelectionStrategy::Subsample(3),
                SelectionStrategy::Subsample(5),
                SelectionStrategy::Compress(3),
                SelectionStrategy::Unique,
            ],
            som_sides: vec![10, 20],
            repeats: 5,
            p_e: 0.99,
            seed: 0,
            som_epochs: 5,
            som_learning_rate: 0.5,
            som_train_fraction: 1.0 / 3.0,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.orders.is_empty() || self.smoothers.is_empty() || self.strategies.is_empty() {
            return bad("orders, smoothers and strategies must be non-empty");
        }
        if self.som_sides.is_empty() || self.som_sides.contains(&0) {
            return bad("som_sides must be non-empty and positive");
        }
        if self.orders.contains(&0) {
            return bad("n-gram orders start at 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if !(self.p_e > 0.0 && self.p_e <= 1.0) {
            return bad("p_e must lie in (0, 1]");
        }
        if !(self.som_train_fraction > 0.0 && self.som_train_fraction <= 1.0) {
            return bad("som_train_fraction must lie in (0, 1]");
        }
        for s in &self.smoothers {
            s.validate()?;
        }
        Ok(())
    }
}

/// Labelled descriptor stream, one descriptor per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSequence {
    pub source_id: String,
    pub descriptors: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

/// Input of an experiment.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Pre-quantized streams; the grid's map sides and repeats are unused.
    Words {
        train: Vec<WordSequence>,
        test: Vec<WordSequence>,
        vocab_size: usize,
    },
    /// Descriptor streams quantized by maps trained inside the experiment.
    Descriptors {
        train: Vec<DescriptorSequence>,
        test: Vec<DescriptorSequence>,
    },
}

/// Results of one grid cell, aggregated over map repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub som_side: Option<usize>,
    pub vocab_size: usize,
    pub strategy: SelectionStrategy,
    pub smoothing: SmoothingSpec,
    pub order: usize,
    /// Mean frame accuracy over repeats, in percent.
    pub accuracy: f64,
    pub accuracy_per_repeat: Vec<f64>,
    pub chance: f64,
    /// Evaluated test frames after selection, per repeat.
    pub test_frames: Vec<usize>,
    /// Training frames after selection, per repeat.
    pub train_frames: Vec<usize>,
    pub test_sequences: usize,
    /// Confusion counts summed over repeats.
    pub confusion: Vec<Vec<usize>>,
    /// Mean run length of the selected test stream, averaged over repeats.
    pub mean_run_length: f64,
    pub filter_runs: usize,
    /// Wall-clock seconds, summed over repeats. Not serialized.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub classes: Vec<u32>,
    pub chance: f64,
    pub dataset: DatasetStats,
    pub cells: Vec<CellReport>,
    pub filter_runs: usize,
}

impl ExperimentReport {
    /// Pretty JSON; excludes timings so equal inputs give equal bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per cell, including wall-clock time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "som_side,vocab_size,strategy,smoothing,order,accuracy,chance,test_frames,mean_run_length,filter_runs,seconds\n",
        );
        for c in &self.cells {
            let side = c.som_side.map(|s| s.to_string()).unwrap_or_default();
            let frames: usize = c.test_frames.iter().sum();
            let _ = writeln!(
                out,
                "{side},{},{},{},{},{:.4},{:.4},{frames},{:.4},{},{:.3}",
                c.vocab_size, c.strategy, c.smoothing, c.order, c.accuracy, c.chance, c.mean_run_length, c.filter_runs, c.seconds
            );
        }
        out
    }

    pub fn find(&self, side: Option<usize>, strategy: SelectionStrategy, smoothing: SmoothingSpec, order: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.som_side == side && c.strategy == strategy && c.smoothing == smoothing && c.order == order
        })
    }
}

/// One quantization of the data: either the given words or one trained map.
struct Vocabulary {
    side: Option<usize>,
    vocab_size: usize,
    train: Vec<WordSequence>,
    test: Vec<WordSequence>,
}

struct Selected {
    train: Vec<WordSequence>,
    test: Vec<WordSequence>,
}

struct CellRun {
    eval: EvalReport,
    train_frames: usize,
    mean_run_length: f64,
    filter_runs: usize,
    seconds: f64,
}

fn labels_of(seqs: &[WordSequence]) -> Result<BTreeSet<u32>> {
    let mut out = BTreeSet::new();
    for s in seqs {
        match s.labels() {
            Some(l) => out.extend(l.iter().copied()),
            None if s.is_empty() => {}
            None => {
                return Err(Error::Validation(format!(
                    "sequence {:?} has no labels",
                    s.source_id()
                )))
            }
        }
    }
    Ok(out)
}

fn quantize_all(grid: &ExperimentGrid, train: &[DescriptorSequence], test: &[DescriptorSequence]) -> Result<Vec<Vocabulary>> {
    let pool: Vec<&[f64]> = train
        .iter()
        .flat_map(|s| s.descriptors.iter().map(Vec::as_slice))
        .collect();
    if pool.is_empty() {
        return Err(Error::InsufficientData("no training descriptors".into()));
    }
    for s in train.iter().chain(test) {
        if s.descriptors.len() != s.labels.len() {
            return Err(Error::Dimension(format!(
                "sequence {:?} has {} descriptors but {} labels",
                s.source_id,
                s.descriptors.len(),
                s.labels.len()
            )));
        }
    }
    let jobs: Vec<(usize, usize)> = grid
        .som_sides
        .iter()
        .flat_map(|&side| (0..grid.repeats).map(move |r| (side, r)))
        .collect();
    jobs.par_iter()
        .map(|&(side, r)| {
            let seed = grid.seed + r as u64;
            let mut subset = pool.clone();
            subset.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[side as u64])));
            let keep = ((pool.len() as f64 * grid.som_train_fraction).ceil() as usize).clamp(1, pool.len());
            subset.truncate(keep);
            let cfg = SomTrainConfig {
                epochs: grid.som_epochs,
                initial_learning_rate: grid.som_learning_rate,
                ..SomTrainConfig::for_side(side, seed)
            };
            let cb = train_som(&subset, side, &cfg)?;
            let convert = |seqs: &[DescriptorSequence]| -> Result<Vec<WordSequence>> {
                seqs.iter()
                    .map(|s| {
                        let words = cb.quantize_sequence(&s.descriptors)?.words().to_vec();
                        Ok(WordSequence::labeled(words, s.labels.clone())?.with_source_id(s.source_id.clone()))
                    })
                    .collect()
            };
            Ok(Vocabulary {
                side: Some(side),
                vocab_size: cb.vocab_size(),
                train: convert(train)?,
                test: convert(test)?,
            })
        })
        .collect()
}

fn run_cell(vocab: &Vocabulary, data: &Selected, classes: &[u32], smoothing: SmoothingSpec, order: usize, p_e: f64) -> Result<CellRun> {
    let started = Instant::now();
    let models = train_class_models(&data.train, classes, order, vocab.vocab_size, smoothing)?;
    let transition = TransitionMatrix::uniform_switch(classes.len(), p_e)?;
    let filter = Filter::new(&models, &transition)?;

    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    let mut filter_runs = 0;
    for seq in data.test.iter().filter(|s| !s.is_empty()) {
        let trace = filter.run(seq, Belief::uniform(classes.len()))?;
        filter_runs += 1;
        predictions.extend(trace.map_labels(&models));
        truth.extend_from_slice(seq.labels().expect("labels checked"));
    }
    let eval = evaluate(&predictions, &truth, classes)?;
    let run_count: usize = data.test.iter().map(|s| runs(s.words()).count()).sum();
    Ok(CellRun {
        eval,
        train_frames: data.train.iter().map(WordSequence::len).sum(),
        mean_run_length: truth.len() as f64 / run_count as f64,
        filter_runs,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every grid cell on `source` and averages over map repeats.
///
/// Word selection is applied to training and test streams alike. Every
/// test sequence is filtered from a uniform prior with self-transition
/// `grid.p_e`.
pub fn run_experiment(grid: &ExperimentGrid, source: &DataSource) -> Result<ExperimentReport> {
    grid.validate()?;
    let vocabularies = match source {
        DataSource::Words { train, test, vocab_size } => {
            for s in train.iter().chain(test) {
                s.check_vocab(*vocab_size)?;
            }
            vec![Vocabulary {
                side: None,
                vocab_size: *vocab_size,
                train: train.clone(),
                test: test.clone(),
            }]
        }
        DataSource::Descriptors { train, test } => quantize_all(grid, train, test)?,
    };
    let first = &vocabularies[0];
    let mut class_set = labels_of(&first.train)?;
    class_set.extend(labels_of(&first.test)?);
    let classes: Vec<u32> = class_set.into_iter().collect();
    if classes.is_empty() {
        return Err(Error::InsufficientData("no labelled frames".into()));
    }
    if first.test.iter().all(WordSequence::is_empty) {
        return Err(Error::InsufficientData("no test frames".into()));
    }
    let train_labels = labels_of(&first.train)?;
    if let Some(&missing) = classes.iter().find(|c| !train_labels.contains(c)) {
        return Err(Error::MissingClass(missing));
    }
    let chance = 100.0 / classes.len() as f64;

    let selected: Vec<Vec<Selected>> = vocabularies
        .iter()
        .map(|v| {
            grid.strategies
                .iter()
                .map(|st| {
                    let apply = |seqs: &[WordSequence]| seqs.iter().map(|s| st.apply(s)).collect::<Result<Vec<_>>>();
                    Ok(Selected {
                        train: apply(&v.train)?,
                        test: apply(&v.test)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // (vocabulary, strategy, smoother, order) in grid order
    let mut keys = Vec::new();
    for vi in 0..vocabularies.len() {
        for si in 0..grid.strategies.len() {
            for mi in 0..grid.smoothers.len() {
                for &order in &grid.orders {
                    keys.push((vi, si, mi, order));
                }
            }
        }
    }
    let runs: Vec<CellRun> = keys
        .par_iter()
        .map(|&(vi, si, mi, order)| {
            run_cell(&vocabularies[vi], &selected[vi][si], &classes, grid.smoothers[mi], order, grid.p_e)
        })
        .collect::<Result<_>>()?;

    // Vocabularies are grouped by side, so repeats of a cell share a side.
    let mut cells: Vec<CellReport> = Vec::new();
    for (&(vi, si, mi, order), run) in keys.iter().zip(&runs) {
        let v = &vocabularies[vi];
        let existing = cells.iter_mut().find(|c| {
            c.som_side == v.side && c.strategy == grid.strategies[si] && c.smoothing == grid.smoothers[mi] && c.order == order
        });
        let cell = match existing {
            Some(c) => c,
            None => {
                cells.push(CellReport {
                    som_side: v.side,
                    vocab_size: v.vocab_size,
                    strategy: grid.strategies[si],
                    smoothing: grid.smoothers[mi],
                    order,
                    accuracy: 0.0,
                    accuracy_per_repeat: Vec::new(),
                    chance,
                    test_frames: Vec::new(),
                    train_frames: Vec::new(),
                    test_sequences: selected[vi][si].test.len(),
                    confusion: vec![vec![0; classes.len()]; classes.len()],
                    mean_run_length: 0.0,
                    filter_runs: 0,
                    seconds: 0.0,
                });
                cells.last_mut().expect("just pushed")
            }
        };
        cell.accuracy_per_repeat.push(run.eval.accuracy);
        cell.test_frames.push(run.eval.frames);
        cell.train_frames.push(run.train_frames);
        for (row, add) in cell.confusion.iter_mut().zip(&run.eval.confusion) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
        cell.mean_run_length += run.mean_run_length;
        cell.filter_runs += run.filter_runs;
        cell.seconds += run.seconds;
    }
    for c in &mut cells {
        let reps = c.accuracy_per_repeat.len() as f64;
        c.accuracy = c.accuracy_per_repeat.iter().sum::<f64>() / reps;
        c.mean_run_length /= reps;
    }

    Ok(ExperimentReport {
        dataset: DatasetStats::new(&first.train, &first.test),
        filter_runs: cells.iter().map(|c| c.filter_runs).sum(),
        classes,
        chance,
        cells,
    })
}
