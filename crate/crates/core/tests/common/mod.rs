//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use placerec::{estimate, count_ngrams, PlaceModel, SmoothingSpec, WordSequence};
use rand::Rng;

/// Run-length encoding as `(word, length)` pairs.
pub fn rle(words: &[u32]) -> Vec<(u32, usize)> {
    let mut out: Vec<(u32, usize)> = Vec::new();
    for &w in words {
        match out.last_mut() {
            Some((x, n)) if *x == w => *n += 1,
            _ => out.push((w, 1)),
        }
    }
    out
}

/// Nearest prototype by linear scan; the first strict minimum wins.
pub fn linear_scan(prototypes: &[Vec<f64>], d: &[f64]) -> u32 {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in prototypes.iter().enumerate() {
        let dist: f64 = p.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best_d {
            best_d = dist;
            best = i;
        }
    }
    best as u32
}

/// Random labelled training data over `classes` place models.
pub fn random_models<R: Rng>(
    rng: &mut R,
    classes: usize,
    vocab: usize,
    order: usize,
    spec: SmoothingSpec,
    train_len: usize,
) -> Vec<PlaceModel> {
    (0..classes)
        .map(|c| {
            // skew each class towards a different word so classes differ
            let favourite = (c % vocab) as u32;
            let words: Vec<u32> = (0..train_len)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        favourite
                    } else {
                        rng.gen_range(0..vocab as u32)
                    }
                })
                .collect();
            let counts = count_ngrams(&[words], order).unwrap();
            estimate(counts, vocab, spec, c as u32).unwrap()
        })
        .collect()
}

/// Filtered beliefs by summing over every state path `x_0 .. x_t`.
pub fn path_enumeration(
    models: &[PlaceModel],
    transition: &[Vec<f64>],
    prior: &[f64],
    words: &[u32],
) -> Vec<Vec<f64>> {
    let c = models.len();
    let order = models[0].order();
    let mut beliefs = Vec::with_capacity(words.len());
    for t in 1..=words.len() {
        let mut joint = vec![0.0; c];
        let paths = c.pow(t as u32 + 1);
        let mut path = vec![0usize; t + 1];
        for code in 0..paths {
            let mut rest = code;
            for slot in path.iter_mut() {
                *slot = rest % c;
                rest /= c;
            }
            let mut weight = prior[path[0]];
            for i in 1..=t {
                let start = (i - 1).saturating_sub(order - 1);
                let history = &words[start..i - 1];
                weight *= transition[path[i - 1]][path[i]] * models[path[i]].prob(history, words[i - 1]);
            }
            joint[path[t]] += weight;
        }
        let z: f64 = joint.iter().sum();
        beliefs.push(joint.iter().map(|j| j / z).collect());
    }
    beliefs
}

/// Classical HMM forward pass with unigram emissions `(c + 1/K) / (N + 1)`
/// built directly from training words per class.
pub fn forward_lidstone(
    train: &[Vec<u32>],
    vocab: usize,
    transition: &[Vec<f64>],
    prior: &[f64],
    words: &[u32],
) -> Vec<Vec<f64>> {
    let emission: Vec<Vec<f64>> = train
        .iter()
        .map(|ws| {
            let mut counts = vec![0.0; vocab];
            for &w in ws {
                counts[w as usize] += 1.0;
            }
            counts.iter().map(|c| (c + 1.0 / vocab as f64) / (ws.len() as f64 + 1.0)).collect()
        })
        .collect();
    let n = prior.len();
    let mut alpha = prior.to_vec();
    let mut out = Vec::new();
    for &w in words {
        let mut next = vec![0.0; n];
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += alpha[i] * transition[i][j];
            }
            next[j] = s * emission[j][w as usize];
        }
        let z: f64 = next.iter().sum();
        alpha = next.iter().map(|a| a / z).collect();
        out.push(alpha.clone());
    }
    out
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Every sequence of length `0..=max_len` over `alphabet` words.
pub fn all_sequences(alphabet: u32, max_len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for w in 0..alphabet {
                let mut t: Vec<u32> = s.clone();
                t.push(w);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Random sequence with runs, drawn from a small alphabet.
pub fn runny_sequence<R: Rng>(rng: &mut R, len: usize, alphabet: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    let mut w = rng.gen_range(0..alphabet);
    while out.len() < len {
        if rng.gen_bool(0.35) {
            w = rng.gen_range(0..alphabet);
        }
        out.push(w);
    }
    out
}

pub fn labeled(words: Vec<u32>) -> WordSequence {
    let labels: Vec<u32> = words.iter().map(|w| w % 3).collect();
    WordSequence::labeled(words, labels).unwrap()
}

/// Expected output lengths of the selection operators.
pub fn subsample_len(len: usize, r: usize) -> usize {
    len.div_ceil(r)
}

pub fn compress_len(words: &[u32], c: usize) -> usize {
    rle(words).iter().map(|(_, l)| l.div_ceil(c)).sum()
}

pub fn unique_len(words: &[u32]) -> usize {
    rle(words).len()
}
