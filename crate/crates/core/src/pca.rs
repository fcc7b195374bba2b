//! Principal component projection of raw descriptors.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::container::{self, Reader, Writer};
use crate::error::{Error, Result};

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 80;

const MAGIC: &[u8; 4] = b"PGPC";
const MAX_DIM: u64 = 1 << 20;

/// Sample mean and the top principal axes of a descriptor pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `k` orthonormal rows of length `dim`, by descending eigenvalue.
    basis: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

/// Fits a `k`-component PCA on the rows of `data`.
///
/// The covariance uses the unbiased `n − 1` divisor. Each basis vector is
/// sign-normalised so its largest-magnitude coordinate is positive.
pub fn fit_pca<D: AsRef<[f64]>>(data: &[D], k: usize) -> Result<PcaModel> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 descriptors, got {}",
            data.len()
        )));
    }
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
    if k == 0 || k > dim {
        return Err(Error::Validation(format!(
            "component count {k} must lie in 1..={dim}"
        )));
    }
    if data.iter().flat_map(|d| d.as_ref()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("descriptor contains non-finite values".into()));
    }

    let n = data.len();
    let mut mean = vec![0.0; dim];
    for d in data {
        for (m, v) in mean.iter_mut().zip(d.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| data[i].as_ref()[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total_variance = cov.trace();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    // stable sort keeps ties in solver order, so results are reproducible
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(v);
        // rank-deficient pools produce tiny negative round-off
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        basis,
        explained_variance,
        total_variance,
    })
}

impl PcaModel {
    pub fn components(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Trace of the sample covariance the model was fitted on.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Fraction of the total variance captured by the retained components.
    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    /// `basis · (d − mean)`.
    pub fn project(&self, d: &[f64]) -> Result<Vec<f64>> {
        if d.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "descriptor has length {}, PCA expects {}",
                d.len(),
                self.dim()
            )));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("descriptor contains non-finite values".into()));
        }
        Ok(self
            .basis
            .iter()
            .map(|b| {
                b.iter()
                    .zip(d.iter().zip(&self.mean))
                    .map(|(bi, (di, mi))| bi * (di - mi))
                    .sum()
            })
            .collect())
    }

    /// Maps projected coordinates back to descriptor space.
    pub fn unproject(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.components() {
            return Err(Error::Dimension(format!(
                "projection has length {}, PCA has {} components",
                y.len(),
                self.components()
            )));
        }
        let mut out = self.mean.clone();
        for (coef, b) in y.iter().zip(&self.basis) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += coef * bi;
            }
        }
        Ok(out)
    }

    /// Binary container: magic `PGPC`, version, k, dim, mean, basis rows,
    /// explained variances, total variance.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC);
        w.u64(self.components() as u64);
        w.u64(self.dim() as u64);
        w.f64s(&self.mean);
        for b in &self.basis {
            w.f64s(b);
        }
        w.f64s(&self.explained_variance);
        w.f64s(&[self.total_variance]);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PcaModel> {
        let mut r = Reader::new(bytes, MAGIC, "PCA model")?;
        let k = r.len(MAX_DIM)?;
        let dim = r.len(MAX_DIM)?;
        if k == 0 || k > dim {
            return Err(Error::parse("PCA model header", format!("k = {k} invalid for dim = {dim}")));
        }
        let mean = r.f64s(dim)?;
        let mut basis = Vec::with_capacity(k);
        for _ in 0..k {
            basis.push(r.f64s(dim)?);
        }
        let explained_variance = r.f64s(k)?;
        let total_variance = r.f64s(1)?[0];
        r.finish()?;
        Ok(PcaModel {
            mean,
            basis,
            explained_variance,
            total_variance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PcaModel> {
        PcaModel::from_bytes(&container::read_file(path.as_ref())?)
    }
}
