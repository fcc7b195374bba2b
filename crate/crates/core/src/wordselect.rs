//! Word sequences, the three word-selection strategies and run statistics.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-ordered visual words with optional per-frame class labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordSequence {
    words: Vec<u32>,
    labels: Option<Vec<u32>>,
    source_id: String,
}

impl WordSequence {
    pub fn unlabeled(words: Vec<u32>) -> Self {
        WordSequence {
            words,
            labels: None,
            source_id: String::new(),
        }
    }

    pub fn labeled(words: Vec<u32>, labels: Vec<u32>) -> Result<Self> {
        if words.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} words but {} labels",
                words.len(),
                labels.len()
            )));
        }
        // empty sequences store no labels so they match their file form
        Ok(WordSequence {
            labels: (!words.is_empty()).then_some(labels),
            words,
            source_id: String::new(),
        })
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    /// Per-frame classes; an empty sequence counts as labeled.
    pub fn labels(&self) -> Option<&[u32]> {
        match &self.labels {
            Some(l) => Some(l),
            None if self.words.is_empty() => Some(&[]),
            None => None,
        }
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Checks every word id against a vocabulary of size `k`.
    pub fn check_vocab(&self, k: usize) -> Result<()> {
        match self.words.iter().position(|&w| w as usize >= k) {
            Some(i) => Err(Error::Validation(format!(
                "word {} at index {i} of sequence {:?} is outside the vocabulary of {k}",
                self.words[i], self.source_id
            ))),
            None => Ok(()),
        }
    }

    /// Keeps the elements at `indices`, labels following their words.
    fn pick(&self, indices: impl Iterator<Item = usize>) -> WordSequence {
        let idx: Vec<usize> = indices.collect();
        WordSequence {
            words: idx.iter().map(|&i| self.words[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .filter(|_| !idx.is_empty())
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            source_id: self.source_id.clone(),
        }
    }

    /// Text form: one `<word>\t<class>` record per line (just `<word>` when
    /// unlabeled), preceded by a comment naming the source.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.words.len() * 6 + 32);
        if !self.source_id.is_empty() {
            out.push_str("# source ");
            out.push_str(&self.source_id);
            out.push('\n');
        }
        match &self.labels {
            Some(labels) => {
                for (w, l) in self.words.iter().zip(labels) {
                    out.push_str(&format!("{w}\t{l}\n"));
                }
            }
            None => {
                for w in &self.words {
                    out.push_str(&format!("{w}\n"));
                }
            }
        }
        out
    }

    /// Parses the text form. `origin` names the input in error locations.
    pub fn parse_text(text: &str, origin: &str) -> Result<WordSequence> {
        let mut words = Vec::new();
        let mut labels = Vec::new();
        let mut labeled: Option<bool> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{origin}:{}", lineno + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            let this_labeled = match fields.len() {
                1 => false,
                2 => true,
                n => return Err(Error::parse(at(), format!("expected 1 or 2 tab-separated fields, found {n}"))),
            };
            if *labeled.get_or_insert(this_labeled) != this_labeled {
                return Err(Error::parse(at(), "mixes labeled and unlabeled records"));
            }
            let num = |s: &str, what: &str| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::parse(at(), format!("invalid {what} {s:?}")))
            };
            words.push(num(fields[0], "word id")?);
            if this_labeled {
                labels.push(num(fields[1], "class id")?);
            }
        }
        let seq = WordSequence {
            words,
            labels: labeled.unwrap_or(false).then_some(labels),
            source_id: String::new(),
        };
        Ok(seq)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Loads a sequence file; the source id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<WordSequence> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(WordSequence::parse_text(&text, &path.display().to_string())?.with_source_id(id))
    }
}

/// Keeps elements `0, r, 2r, …`.
pub fn subsample(seq: &WordSequence, r: usize) -> Result<WordSequence> {
    if r == 0 {
        return Err(Error::Validation("subsample rate must be at least 1".into()));
    }
    Ok(seq.pick((0..seq.len()).step_by(r)))
}

/// Replaces each maximal run of length `L` by `⌈L/c⌉` copies of its word.
///
/// Copy `j` of a run stands for the `j`-th block of `c` frames and carries
/// the label of that block's first frame.
pub fn compress(seq: &WordSequence, c: usize) -> Result<WordSequence> {
    if c == 0 {
        return Err(Error::Validation("compression rate must be at least 1".into()));
    }
    let mut keep = Vec::new();
    let mut start = 0;
    for run in runs(seq.words()) {
        keep.extend((start..start + run.len).step_by(c));
        start += run.len;
    }
    Ok(seq.pick(keep.into_iter()))
}

/// Keeps a word only when it differs from its predecessor.
pub fn unique(seq: &WordSequence) -> WordSequence {
    let w = seq.words();
    seq.pick((0..w.len()).filter(|&t| t == 0 || w[t] != w[t - 1]))
}

/// Sequence length divided by the number of maximal runs.
pub fn mean_run_length(seq: &WordSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::Validation("run length of an empty sequence".into()));
    }
    Ok(seq.len() as f64 / runs(seq.words()).count() as f64)
}

/// One maximal run of identical words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub word: u32,
    pub len: usize,
}

/// Iterates over the maximal runs of `words`.
pub fn runs(words: &[u32]) -> impl Iterator<Item = Run> + '_ {
    let mut pos = 0;
    std::iter::from_fn(move || {
        let word = *words.get(pos)?;
        let len = words[pos..].iter().take_while(|&&w| w == word).count();
        pos += len;
        Some(Run { word, len })
    })
}

/// A word-selection policy applied to both training and test streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectionStrategy {
    None,
    Subsample(usize),
    Compress(usize),
    Unique,
}

impl SelectionStrategy {
    pub fn apply(&self, seq: &WordSequence) -> Result<WordSequence> {
        match *self {
            SelectionStrategy::None => Ok(seq.clone()),
            SelectionStrategy::Subsample(r) => subsample(seq, r),
            SelectionStrategy::Compress(c) => compress(seq, c),
            SelectionStrategy::Unique => Ok(unique(seq)),
        }
    }

    /// Output length predicted from run structure alone.
    pub fn output_len(&self, words: &[u32]) -> usize {
        match *self {
            SelectionStrategy::None => words.len(),
            SelectionStrategy::Subsample(r) => words.len().div_ceil(r.max(1)),
            SelectionStrategy::Compress(c) => runs(words).map(|r| r.len.div_ceil(c.max(1))).sum(),
            SelectionStrategy::Unique => runs(words).count(),
        }
    }

    /// Builds a strategy from a CLI-style name and optional rate.
    pub fn from_parts(kind: &str, rate: Option<usize>) -> Result<Self> {
        let need_rate = |r: Option<usize>| {
            let r = r.ok_or_else(|| Error::Validation(format!("strategy {kind} needs a rate")))?;
            if r == 0 {
                return Err(Error::Validation(format!("strategy {kind} needs a rate ≥ 1")));
            }
            Ok(r)
        };
        match kind {
            "none" => Ok(SelectionStrategy::None),
            "unique" => Ok(SelectionStrategy::Unique),
            "subsample" => Ok(SelectionStrategy::Subsample(need_rate(rate)?)),
            "compress" => Ok(SelectionStrategy::Compress(need_rate(rate)?)),
            other => Err(Error::Validation(format!("unknown strategy {other:?}"))),
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionStrategy::None => f.write_str("none"),
            SelectionStrategy::Subsample(r) => write!(f, "subsample:{r}"),
            SelectionStrategy::Compress(c) => write!(f, "compress:{c}"),
            SelectionStrategy::Unique => f.write_str("unique"),
        }
    }
}

impl FromStr for SelectionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rate) = match s.split_once(':') {
            Some((k, r)) => {
                let r = r
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("invalid rate in {s:?}")))?;
                (k.trim(), Some(r))
            }
            None => (s.trim(), None),
        };
        SelectionStrategy::from_parts(kind, rate)
    }
}

impl TryFrom<String> for SelectionStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectionStrategy> for String {
    fn from(s: SelectionStrategy) -> String {
        s.to_string()
    }
}
