use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::wordselect::WordSequence;

/// Frames per class in one split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub per_class: BTreeMap<u32, usize>,
    pub total: usize,
}

impl ClassCounts {
    pub fn from_sequences(seqs: &[WordSequence]) -> Self {
        let mut out = ClassCounts::default();
        for l in seqs.iter().filter_map(WordSequence::labels).flatten() {
            *out.per_class.entry(*l).or_insert(0) += 1;
            out.total += 1;
        }
        out
    }
}

/// Per-class frame counts of a training/testing split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub train: ClassCounts,
    pub test: ClassCounts,
}

impl DatasetStats {
    pub fn new(train: &[WordSequence], test: &[WordSequence]) -> Self {
        DatasetStats {
            train: ClassCounts::from_sequences(train),
            test: ClassCounts::from_sequences(test),
        }
    }
}

/// Loads labelled sequence files. Directories are expanded to their
/// `*.tsv` files in name order.
///
/// When `known_classes` is given, labels outside it are rejected.
pub fn load_dataset<P: AsRef<Path>>(
    paths: &[P],
    known_classes: Option<&[u32]>,
) -> Result<(Vec<WordSequence>, ClassCounts)> {
    let mut files: Vec<PathBuf> = Vec::new();
    for p in paths {
        let p = p.as_ref();
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "tsv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.to_path_buf());
        }
    }

    let mut seqs = Vec::with_capacity(files.len());
    for f in &files {
        let seq = WordSequence::load(f)?;
        let labels = match seq.labels() {
            Some(l) => l,
            None => {
                return Err(Error::parse(
                    f.display().to_string(),
                    "dataset sequences need `<word>\\t<class>` records",
                ))
            }
        };
        if let Some(known) = known_classes {
            if let Some(i) = labels.iter().position(|l| !known.contains(l)) {
                return Err(Error::parse(
                    format!("{} record {}", f.display(), i + 1),
                    format!("unknown class id {}", labels[i]),
                ));
            }
        }
        seqs.push(seq);
    }
    let counts = ClassCounts::from_sequences(&seqs);
    Ok((seqs, counts))
}

/// Writes each sequence to `<dir>/<source_id>.tsv`.
pub fn save_corpus(dir: impl AsRef<Path>, seqs: &[WordSequence]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    seqs.iter()
        .enumerate()
        .map(|(i, s)| {
            let name = if s.source_id().is_empty() {
                format!("seq{:03}", i + 1)
            } else {
                s.source_id().to_string()
            };
            let path = dir.join(format!("{name}.tsv"));
            s.save(&path)?;
            Ok(path)
        })
        .collect()
}
