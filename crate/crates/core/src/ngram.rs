//! Per-place n-gram observation models over a closed visual vocabulary.
//!
//! A model of order `n` predicts the next word from at most `n − 1`
//! preceding words. Every order is interpolated with the one below it, down
//! to a uniform distribution over the `K` words, so no word ever receives
//! zero probability.
//!
//! Two smoothers are provided:
//!
//! * Lidstone: `P_m(w|h) = (c(h,w) + δ·P_{m−1}(w|h')) / (N(h) + δ)`
//! * Witten-Bell: `P_m(w|h) = (c(h,w) + T(h)·P_{m−1}(w|h')) / (N(h) + T(h))`
//!
//! where `h'` drops the oldest word of `h`, `N(h)` is the number of tokens
//! seen after `h` and `T(h)` the number of distinct words seen after it.
//! Histories never seen leave the lower-order estimate unchanged.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wordselect::WordSequence;

/// Continuation counts observed after one history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HistoryCounts {
    total: u64,
    counts: BTreeMap<u32, u64>,
}

impl HistoryCounts {
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct words seen after this history.
    pub fn types(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, w: u32) -> u64 {
        self.counts.get(&w).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&w, &c)| (w, c))
    }
}

/// m-gram counts for every history length `m` in `0..order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    order: usize,
    tables: Vec<HashMap<Vec<u32>, HistoryCounts>>,
}

impl CountTable {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation("n-gram order must be at least 1".into()));
        }
        Ok(CountTable {
            order,
            tables: vec![HashMap::new(); order],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_empty(&self) -> bool {
        self.tables.iter().all(HashMap::is_empty)
    }

    /// Adds `count` occurrences of `w` after `history`.
    ///
    /// Only the table for `history.len()` is touched.
    pub fn add(&mut self, history: &[u32], w: u32, count: u64) -> Result<()> {
        if history.len() >= self.order {
            return Err(Error::Validation(format!(
                "history of length {} exceeds order {}",
                history.len(),
                self.order
            )));
        }
        if count == 0 {
            return Ok(());
        }
        let entry = match self.tables[history.len()].get_mut(history) {
            Some(e) => e,
            None => self.tables[history.len()]
                .entry(history.to_vec())
                .or_default(),
        };
        entry.total += count;
        *entry.counts.entry(w).or_insert(0) += count;
        Ok(())
    }

    pub fn get(&self, history: &[u32]) -> Option<&HistoryCounts> {
        self.tables.get(history.len())?.get(history)
    }

    pub fn count(&self, history: &[u32], w: u32) -> u64 {
        self.get(history).map_or(0, |h| h.count(w))
    }

    pub fn history_total(&self, history: &[u32]) -> u64 {
        self.get(history).map_or(0, HistoryCounts::total)
    }

    pub fn continuation_types(&self, history: &[u32]) -> usize {
        self.get(history).map_or(0, HistoryCounts::types)
    }

    /// Histories of length `m` in sorted order.
    pub fn histories(&self, m: usize) -> Vec<(&[u32], &HistoryCounts)> {
        let mut out: Vec<_> = self.tables[m]
            .iter()
            .map(|(h, c)| (h.as_slice(), c))
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(b.0));
        out
    }

    fn max_word(&self) -> Option<u32> {
        self.tables
            .iter()
            .flat_map(|t| t.iter())
            .flat_map(|(h, c)| h.iter().copied().chain(c.counts.keys().copied()))
            .max()
    }

    /// Drops every table above `order`, keeping the lower-order counts.
    pub fn truncated(&self, order: usize) -> Result<CountTable> {
        if order == 0 || order > self.order {
            return Err(Error::Validation(format!(
                "cannot truncate order {} to {order}",
                self.order
            )));
        }
        Ok(CountTable {
            order,
            tables: self.tables[..order].to_vec(),
        })
    }
}

/// Counts every m-gram (`m = 1..=n`) inside each sequence independently.
///
/// No padding is used, so the first `n − 1` positions of a sequence only
/// contribute their shorter grams.
pub fn count_ngrams<S: AsRef<[u32]>>(seqs: &[S], n: usize) -> Result<CountTable> {
    let mut table = CountTable::new(n)?;
    for seq in seqs {
        let words = seq.as_ref();
        for t in 0..words.len() {
            for m in 0..n.min(t + 1) {
                table.add(&words[t - m..t], words[t], 1)?;
            }
        }
    }
    Ok(table)
}

/// Contiguous stretches of `seqs` labeled with `class`.
///
/// Histories never span two places because runs split at label changes.
pub fn class_segments(seqs: &[WordSequence], class: u32) -> Result<Vec<&[u32]>> {
    let mut out = Vec::new();
    for seq in seqs {
        let labels = seq.labels().ok_or_else(|| {
            Error::Validation(format!("sequence {:?} has no labels", seq.source_id()))
        })?;
        let words = seq.words();
        let mut t = 0;
        while t < labels.len() {
            if labels[t] != class {
                t += 1;
                continue;
            }
            let start = t;
            while t < labels.len() && labels[t] == class {
                t += 1;
            }
            out.push(&words[start..t]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SmoothingSpec {
    Lidstone { delta: f64 },
    WittenBell,
}

impl SmoothingSpec {
    pub const LAPLACE: SmoothingSpec = SmoothingSpec::Lidstone { delta: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if let SmoothingSpec::Lidstone { delta } = self {
            if !(*delta > 0.0 && delta.is_finite()) {
                return Err(Error::Validation(format!(
                    "Lidstone delta must be positive, got {delta}"
                )));
            }
        }
        Ok(())
    }

    /// Short tag used in reports: `ll` or `wb`.
    pub fn tag(&self) -> &'static str {
        match self {
            SmoothingSpec::Lidstone { .. } => "ll",
            SmoothingSpec::WittenBell => "wb",
        }
    }
}

impl fmt::Display for SmoothingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingSpec::Lidstone { delta } => write!(f, "ll:{delta}"),
            SmoothingSpec::WittenBell => f.write_str("wb"),
        }
    }
}

impl FromStr for SmoothingSpec {
    type Err = Error;

    /// Accepts `ll`, `ll:<delta>`, `lidstone[:<delta>]`, `wb`, `witten_bell`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let spec = match (kind, arg) {
            ("ll" | "lidstone", None) => SmoothingSpec::LAPLACE,
            ("ll" | "lidstone", Some(d)) => SmoothingSpec::Lidstone {
                delta: d
                    .parse()
                    .map_err(|_| Error::Validation(format!("invalid delta {d:?}")))?,
            },
            ("wb" | "witten_bell", None) => SmoothingSpec::WittenBell,
            _ => return Err(Error::Validation(format!("unknown smoothing {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for SmoothingSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SmoothingSpec> for String {
    fn from(s: SmoothingSpec) -> String {
        s.to_string()
    }
}

/// Smoothed distribution `P(w | history)` for one place.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceModel {
    class_id: u32,
    vocab_size: usize,
    smoothing: SmoothingSpec,
    counts: CountTable,
}

/// Wraps counts into an evaluable model over `vocab_size` words.
pub fn estimate(counts: CountTable, vocab_size: usize, spec: SmoothingSpec, class_id: u32) -> Result<PlaceModel> {
    if vocab_size == 0 {
        return Err(Error::Validation("vocabulary size must be at least 1".into()));
    }
    spec.validate()?;
    if let Some(w) = counts.max_word() {
        if w as usize >= vocab_size {
            return Err(Error::Validation(format!(
                "word {w} in counts is outside the vocabulary of {vocab_size}"
            )));
        }
    }
    Ok(PlaceModel {
        class_id,
        vocab_size,
        smoothing: spec,
        counts,
    })
}

impl PlaceModel {
    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn order(&self) -> usize {
        self.counts.order()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn smoothing(&self) -> SmoothingSpec {
        self.smoothing
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    /// `P(w | history)`, with `history` ordered oldest first.
    ///
    /// Only the most recent `order − 1` words are used; shorter histories
    /// evaluate the matching lower order.
    pub fn cond_prob(&self, history: &[u32], w: u32) -> Result<f64> {
        if w as usize >= self.vocab_size {
            return Err(Error::Validation(format!(
                "word {w} outside the vocabulary of {}",
                self.vocab_size
            )));
        }
        if let Some(h) = history.iter().find(|&&h| h as usize >= self.vocab_size) {
            return Err(Error::Validation(format!(
                "history word {h} outside the vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(self.prob(history, w))
    }

    /// Unchecked [`cond_prob`](Self::cond_prob) for validated inputs.
    #[inline]
    pub fn prob(&self, history: &[u32], w: u32) -> f64 {
        let usable = history.len().min(self.order() - 1);
        let history = &history[history.len() - usable..];
        let mut p = 1.0 / self.vocab_size as f64;
        for m in 0..=usable {
            let Some(hc) = self.counts.tables[m].get(&history[usable - m..]) else {
                continue;
            };
            if hc.total == 0 {
                continue;
            }
            let weight = match self.smoothing {
                SmoothingSpec::Lidstone { delta } => delta,
                SmoothingSpec::WittenBell => hc.types() as f64,
            };
            p = (hc.count(w) as f64 + weight * p) / (hc.total as f64 + weight);
        }
        p
    }

    /// Full next-word distribution after `history`.
    pub fn distribution(&self, history: &[u32]) -> Result<Vec<f64>> {
        (0..self.vocab_size as u32)
            .map(|w| self.cond_prob(history, w))
            .collect()
    }

    fn write_text(&self, out: &mut String) {
        use std::fmt::Write;
        let _ = writeln!(out, "model");
        let _ = writeln!(out, "class {}", self.class_id);
        let _ = writeln!(out, "vocab {}", self.vocab_size);
        let _ = writeln!(out, "order {}", self.order());
        match self.smoothing {
            SmoothingSpec::Lidstone { delta } => {
                let _ = writeln!(out, "smoothing lidstone {delta}");
            }
            SmoothingSpec::WittenBell => {
                let _ = writeln!(out, "smoothing witten_bell");
            }
        }
        for m in 0..self.order() {
            for (h, hc) in self.counts.histories(m) {
                for (w, c) in hc.iter() {
                    let _ = write!(out, "{m}");
                    for x in h {
                        let _ = write!(out, " {x}");
                    }
                    let _ = writeln!(out, " {w} {c}");
                }
            }
        }
        let _ = writeln!(out, "end");
    }
}

/// Serializes models to the canonical count-file text.
pub fn models_to_text(models: &[PlaceModel]) -> String {
    let mut out = String::from("# placerec n-gram counts v1\n");
    for m in models {
        m.write_text(&mut out);
    }
    out
}

/// Parses a count file. Nothing is returned unless the whole file is valid.
pub fn models_from_text(text: &str, origin: &str) -> Result<Vec<PlaceModel>> {
    struct Partial {
        class: Option<u32>,
        vocab: Option<usize>,
        order: Option<usize>,
        smoothing: Option<SmoothingSpec>,
        counts: Option<CountTable>,
    }

    let mut models = Vec::new();
    let mut current: Option<Partial> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let at = || format!("{origin}:{lineno}");
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let parse_num = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::parse(at(), format!("invalid number {s:?}")))
        };
        let Some(p) = current.as_mut() else {
            if toks == ["model"] {
                current = Some(Partial {
                    class: None,
                    vocab: None,
                    order: None,
                    smoothing: None,
                    counts: None,
                });
                continue;
            }
            return Err(Error::parse(at(), format!("expected `model`, found {line:?}")));
        };
        match toks[0] {
            "class" | "vocab" | "order" if toks.len() == 2 => {
                if p.counts.is_some() {
                    return Err(Error::parse(at(), "header field after count lines"));
                }
                let v = parse_num(toks[1])?;
                match toks[0] {
                    "class" => p.class = Some(u32::try_from(v).map_err(|_| Error::parse(at(), "class id too large"))?),
                    "vocab" => p.vocab = Some(v as usize),
                    _ => p.order = Some(v as usize),
                }
            }
            "smoothing" => {
                let spec = match toks.as_slice() {
                    ["smoothing", "lidstone", d] => SmoothingSpec::Lidstone {
                        delta: d
                            .parse()
                            .map_err(|_| Error::parse(at(), format!("invalid delta {d:?}")))?,
                    },
                    ["smoothing", "witten_bell"] => SmoothingSpec::WittenBell,
                    _ => return Err(Error::parse(at(), format!("invalid smoothing line {line:?}"))),
                };
                spec.validate().map_err(|e| Error::parse(at(), e.to_string()))?;
                p.smoothing = Some(spec);
            }
            "end" if toks.len() == 1 => {
                let p = current.take().expect("open model");
                let (Some(class), Some(vocab), Some(order), Some(smoothing)) =
                    (p.class, p.vocab, p.order, p.smoothing)
                else {
                    return Err(Error::parse(at(), "model header is incomplete"));
                };
                let counts = match p.counts {
                    Some(c) => c,
                    None => CountTable::new(order).map_err(|e| Error::parse(at(), e.to_string()))?,
                };
                models.push(
                    estimate(counts, vocab, smoothing, class).map_err(|e| Error::parse(at(), e.to_string()))?,
                );
            }
            _ => {
                let (Some(order), Some(vocab)) = (p.order, p.vocab) else {
                    return Err(Error::parse(at(), "count line before `vocab` and `order`"));
                };
                let m = parse_num(toks[0])? as usize;
                if m >= order {
                    return Err(Error::parse(at(), format!("history length {m} ≥ order {order}")));
                }
                if toks.len() != m + 3 {
                    return Err(Error::parse(
                        at(),
                        format!("history length {m} needs {} fields, found {}", m + 3, toks.len()),
                    ));
                }
                let mut ids = Vec::with_capacity(m + 1);
                for t in &toks[1..m + 2] {
                    let v = parse_num(t)?;
                    if v as usize >= vocab {
                        return Err(Error::parse(at(), format!("word {v} outside vocabulary {vocab}")));
                    }
                    ids.push(v as u32);
                }
                let count = parse_num(toks[m + 2])?;
                let w = ids.pop().expect("m + 1 ids");
                if p.counts.is_none() {
                    p.counts = Some(CountTable::new(order).map_err(|e| Error::parse(at(), e.to_string()))?);
                }
                let table = p.counts.as_mut().expect("initialized");
                if table.count(&ids, w) != 0 {
                    return Err(Error::parse(at(), "duplicate count line"));
                }
                table.add(&ids, w, count)?;
            }
        }
    }
    if current.is_some() {
        return Err(Error::parse(
            format!("{origin}:{last_line}"),
            "unexpected end of file inside a model (missing `end`)",
        ));
    }
    Ok(models)
}

pub fn save_models(path: impl AsRef<Path>, models: &[PlaceModel]) -> Result<()> {
    fs::write(path, models_to_text(models))?;
    Ok(())
}

pub fn load_models(path: impl AsRef<Path>) -> Result<Vec<PlaceModel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    models_from_text(&text, &path.display().to_string())
}

pub fn save_model(path: impl AsRef<Path>, model: &PlaceModel) -> Result<()> {
    save_models(path, std::slice::from_ref(model))
}

/// Loads a file that must contain exactly one model.
pub fn load_model(path: impl AsRef<Path>) -> Result<PlaceModel> {
    let path = path.as_ref();
    let mut models = load_models(path)?;
    if models.len() != 1 {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected exactly one model, found {}", models.len()),
        ));
    }
    Ok(models.pop().expect("one model"))
}

/// Estimates one model per class from labeled training sequences.
pub fn train_class_models(
    seqs: &[WordSequence],
    classes: &[u32],
    order: usize,
    vocab_size: usize,
    spec: SmoothingSpec,
) -> Result<Vec<PlaceModel>> {
    for s in seqs {
        s.check_vocab(vocab_size)?;
    }
    classes
        .iter()
        .map(|&c| {
            let segments = class_segments(seqs, c)?;
            if segments.iter().all(|s| s.is_empty()) {
                return Err(Error::MissingClass(c));
            }
            estimate(count_ngrams(&segments, order)?, vocab_size, spec, c)
        })
        .collect()
}
