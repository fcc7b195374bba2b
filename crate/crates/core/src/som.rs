//! Square self-organizing map used as a visual-word quantizer.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::wordselect::WordSequence;

const MAGIC: &[u8; 4] = b"PGSM";
const MAX_FIELD: u64 = 1 << 24;

/// Learning rate and radius both decay exponentially towards these.
const FINAL_LEARNING_RATE: f64 = 0.01;
const FINAL_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomTrainConfig {
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub initial_radius: f64,
    pub seed: u64,
}

impl SomTrainConfig {
    /// Reasonable defaults for a map of the given side.
    pub fn for_side(side: usize, seed: u64) -> Self {
        SomTrainConfig {
            epochs: 10,
            initial_learning_rate: 0.5,
            initial_radius: (side as f64 / 2.0).max(1.0),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Validation("SOM needs at least one epoch".into()));
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate <= 1.0) {
            return Err(Error::Validation(format!(
                "learning rate {} outside (0, 1]",
                self.initial_learning_rate
            )));
        }
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return Err(Error::Validation(format!(
                "radius {} must be positive",
                self.initial_radius
            )));
        }
        Ok(())
    }
}

/// Trained prototype grid; word `i` is prototype `i` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    side: usize,
    dim: usize,
    prototypes: Vec<f64>,
    train_seed: u64,
}

impl Codebook {
    /// Wraps explicit prototypes; `prototypes.len()` must be `side²`.
    pub fn from_prototypes(side: usize, prototypes: Vec<Vec<f64>>, train_seed: u64) -> Result<Self> {
        if side == 0 || prototypes.len() != side * side {
            return Err(Error::Dimension(format!(
                "side {side} needs {} prototypes, got {}",
                side * side,
                prototypes.len()
            )));
        }
        let dim = prototypes[0].len();
        if dim == 0 || prototypes.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("prototypes must share a non-zero length".into()));
        }
        if prototypes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("prototype contains non-finite values".into()));
        }
        Ok(Codebook {
            side,
            dim,
            prototypes: prototypes.concat(),
            train_seed,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of visual words, `side²`.
    pub fn vocab_size(&self) -> usize {
        self.side * self.side
    }

    pub fn train_seed(&self) -> u64 {
        self.train_seed
    }

    pub fn prototype(&self, i: usize) -> &[f64] {
        &self.prototypes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn prototypes(&self) -> impl Iterator<Item = &[f64]> {
        self.prototypes.chunks_exact(self.dim)
    }

    /// Nearest prototype by squared Euclidean distance, lowest index on ties.
    pub fn quantize(&self, d: &[f64]) -> Result<u32> {
        if d.len() != self.dim {
            return Err(Error::Dimension(format!(
                "descriptor has length {}, codebook expects {}",
                d.len(),
                self.dim
            )));
        }
        Ok(self.nearest(d) as u32)
    }

    fn nearest(&self, d: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, p) in self.prototypes().enumerate() {
            let dist = squared_distance(p, d);
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best
    }

    /// Quantizes an ordered descriptor stream into an unlabeled word sequence.
    pub fn quantize_sequence<D: AsRef<[f64]>>(&self, ds: &[D]) -> Result<WordSequence> {
        let mut words = Vec::with_capacity(ds.len());
        for (i, d) in ds.iter().enumerate() {
            let w = self.quantize(d.as_ref()).map_err(|e| match e {
                Error::Dimension(m) => Error::Dimension(format!("descriptor {i}: {m}")),
                other => other,
            })?;
            words.push(w);
        }
        Ok(WordSequence::unlabeled(words))
    }

    /// Binary container: magic `PGSM`, version, side, dim, seed, prototypes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u64(self.side as u64);
        w.u64(self.dim as u64);
        w.u64(self.train_seed);
        w.f64s(&self.prototypes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Codebook> {
        let mut r = Reader::new(bytes, MAGIC, "codebook")?;
        let side = r.len(1 << 12)?;
        let dim = r.len(MAX_FIELD)?;
        let train_seed = r.u64()?;
        if side == 0 || dim == 0 {
            return Err(Error::parse("codebook header", "side and dim must be positive"));
        }
        let prototypes = r.f64s(side * side * dim)?;
        r.finish()?;
        Ok(Codebook {
            side,
            dim,
            prototypes,
            train_seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Codebook> {
        Codebook::from_bytes(&container::read_file(path.as_ref())?)
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Trains a `side`×`side` map with a Gaussian neighbourhood on a rectangular
/// grid. Deterministic for a given `cfg.seed` and data order.
pub fn train_som<D: AsRef<[f64]>>(data: &[D], side: usize, cfg: &SomTrainConfig) -> Result<Codebook> {
    if data.is_empty() {
        return Err(Error::InsufficientData("SOM training set is empty".into()));
    }
    if side == 0 {
        return Err(Error::Validation("SOM side must be at least 1".into()));
    }
    cfg.validate()?;
    let dim = data[0].as_ref().len();
    if dim == 0 {
        return Err(Error::Dimension("descriptors are empty".into()));
    }
    if let Some(i) = data.iter().position(|d| d.as_ref().len() != dim) {
        return Err(Error::Dimension(format!(
            "descriptor {i} has length {}, expected {dim}",
            data[i].as_ref().len()
        )));
    }
    if data.iter().flat_map(|d| d.as_ref()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("descriptor contains non-finite values".into()));
    }

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for d in data {
        for ((l, h), v) in lo.iter_mut().zip(hi.iter_mut()).zip(d.as_ref()) {
            *l = l.min(*v);
            *h = h.max(*v);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let units = side * side;
    let mut protos = Vec::with_capacity(units * dim);
    for _ in 0..units {
        for (l, h) in lo.iter().zip(&hi) {
            protos.push(if h > l { rng.gen_range(*l..*h) } else { *l });
        }
    }

    let total_steps = cfg.epochs * data.len();
    let lr_decay = (FINAL_LEARNING_RATE / cfg.initial_learning_rate).ln();
    let radius_decay = (FINAL_RADIUS / cfg.initial_radius).ln();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;
    let mut cb = Codebook {
        side,
        dim,
        prototypes: protos,
        train_seed: cfg.seed,
    };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let frac = if total_steps > 1 {
                step as f64 / (total_steps - 1) as f64
            } else {
                0.0
            };
            let lr = cfg.initial_learning_rate * (lr_decay * frac).exp();
            let radius = cfg.initial_radius * (radius_decay * frac).exp();
            let two_r2 = 2.0 * radius * radius;
            let reach = (3.0 * radius).ceil() as isize;

            let x = data[idx].as_ref();
            let winner = cb.nearest(x);
            let (wr, wc) = ((winner / side) as isize, (winner % side) as isize);
            let r0 = (wr - reach).max(0) as usize;
            let r1 = (wr + reach).min(side as isize - 1) as usize;
            let c0 = (wc - reach).max(0) as usize;
            let c1 = (wc + reach).min(side as isize - 1) as usize;
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let dr = r as f64 - wr as f64;
                    let dc = c as f64 - wc as f64;
                    let h = lr * (-(dr * dr + dc * dc) / two_r2).exp();
                    let unit = r * side + c;
                    for (p, v) in cb.prototypes[unit * dim..(unit + 1) * dim].iter_mut().zip(x) {
                        *p += h * (v - *p);
                    }
                }
            }
            step += 1;
        }
    }
    Ok(cb)
}
