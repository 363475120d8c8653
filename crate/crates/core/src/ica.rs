//! Centering, whitening and symmetric FastICA with the tanh contrast.
//!
//! Matrices follow the recording layout: one row per channel (or component),
//! one column per sample.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Centered, whitened data together with the transform that produced it.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub z: DMatrix<f64>,
    /// Maps centered channel data onto `z`.
    pub whitener: DMatrix<f64>,
    pub mean: DVector<f64>,
}

struct Centered {
    data: DMatrix<f64>,
    mean: DVector<f64>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

/// Centers rows and eigendecomposes `C = Xc·Xcᵀ / n_samples`.
fn centered_covariance(x: &DMatrix<f64>) -> Result<Centered> {
    let (n_ch, n_s) = x.shape();
    if n_s <= n_ch {
        return Err(Error::DegenerateInput(format!(
            "{n_s} samples cannot whiten {n_ch} channels"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite sample in ICA input".into()));
    }
    let mean = x.column_mean();
    let mut data = x.clone();
    for mut col in data.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&data * data.transpose()) / n_s as f64;
    let eig = SymmetricEigen::new(cov);
    Ok(Centered { data, mean, eig })
}

/// Removes row means and applies the symmetric whitener `C^{-1/2}`, where
/// `C = Xc·Xcᵀ / n_samples`.
pub fn center_whiten(x: &DMatrix<f64>) -> Result<Whitened> {
    let Centered { data, mean, eig } = centered_covariance(x)?;
    let largest = eig.eigenvalues.max();
    let smallest = eig.eigenvalues.min();
    if !(largest > 0.0) || smallest < 1e-12 * largest {
        return Err(Error::DegenerateInput(format!(
            "covariance is rank deficient (eigenvalues {smallest:e} .. {largest:e})"
        )));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let whitener = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    let z = &whitener * &data;
    Ok(Whitened { z, whitener, mean })
}

/// Eigenvalue indices, largest first.
fn descending(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
}

/// Centers and projects onto the `n_components` leading principal axes,
/// each scaled to unit variance. The whitener is `n_components × n_channels`.
pub fn pca_whiten(x: &DMatrix<f64>, n_components: usize) -> Result<Whitened> {
    let n_ch = x.nrows();
    if n_components == 0 || n_components > n_ch {
        return Err(Error::Range(format!(
            "{n_components} principal components from {n_ch} channels"
        )));
    }
    let Centered { data, mean, eig } = centered_covariance(x)?;
    let order = descending(&eig);
    let largest = eig.eigenvalues[order[0]];
    let kept = eig.eigenvalues[order[n_components - 1]];
    if !(largest > 0.0) || kept < 1e-12 * largest {
        return Err(Error::DegenerateInput(format!(
            "principal axis {n_components} has variance {kept:e} (largest {largest:e})"
        )));
    }
    let whitener = DMatrix::from_fn(n_components, n_ch, |r, c| {
        eig.eigenvectors[(c, order[r])] / eig.eigenvalues[order[r]].sqrt()
    });
    let z = &whitener * &data;
    Ok(Whitened { z, whitener, mean })
}

/// Fewest principal components whose variances add up to at least
/// `fraction` of the total.
pub fn variance_rank(x: &DMatrix<f64>, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Range(format!("variance fraction {fraction} outside (0, 1]")));
    }
    let Centered { eig, .. } = centered_covariance(x)?;
    let order = descending(&eig);
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let mut acc = 0.0;
    for (k, &i) in order.iter().enumerate() {
        acc += eig.eigenvalues[i].max(0.0);
        if acc >= fraction * total {
            return Ok(k + 1);
        }
    }
    Ok(order.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// Scalp weights, one column per component.
    pub mixing: DMatrix<f64>,
    /// Channel space to sources: `unmixing · (x − mean) = sources`.
    pub unmixing: DMatrix<f64>,
    pub sources: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaResult {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }
}

/// `(W·Wᵀ)^{-1/2}·W`: rows become orthonormal.
pub(crate) fn symmetric_decorrelation(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(w * w.transpose());
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-300)) {
        return Err(Error::Numeric("unmixing matrix lost rank".into()));
    }
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w)
}

/// Parallel fixed-point FastICA on whitened data.
///
/// Non-convergence is reported through [`IcaResult::converged`], not as an
/// error.
pub fn fast_ica(white: &Whitened, n_components: usize, cfg: &IcaConfig) -> Result<IcaResult> {
    let z = &white.z;
    let (dims, n_s) = z.shape();
    if n_components == 0 || n_components > dims {
        return Err(Error::Range(format!(
            "{n_components} components requested from {dims} whitened dimensions"
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in whitened data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(n_components, dims, |_, _| {
        StandardNormal.sample(&mut rng)
    });
    let mut w = symmetric_decorrelation(&init)?;
    let zt = z.transpose();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut g = &w * z;
        let mut g_prime_mean = DVector::zeros(n_components);
        for (i, mut row) in g.row_iter_mut().enumerate() {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                let t = v.tanh();
                acc += 1.0 - t * t;
                *v = t;
            }
            g_prime_mean[i] = acc / n_s as f64;
        }
        let mut next = (&g * &zt) / n_s as f64;
        for i in 0..n_components {
            let scaled = w.row(i) * g_prime_mean[i];
            let mut row = next.row_mut(i);
            row -= scaled;
        }
        let next = symmetric_decorrelation(&next)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("FastICA update diverged".into()));
        }
        let change = next
            .row_iter()
            .zip(w.row_iter())
            .map(|(a, b)| (a.dot(&b).abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let unmixing = &w * &white.whitener;
    let sources = &w * z;
    let mixing = if unmixing.is_square() {
        unmixing
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("unmixing matrix is singular".into()))?
    } else {
        unmixing
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numeric(e.to_string()))?
    };
    Ok(IcaResult {
        mixing,
        unmixing,
        sources,
        mean: white.mean.clone(),
        converged,
        iterations,
    })
}

/// Whitens and decomposes in one go.
pub fn decompose(x: &DMatrix<f64>, n_components: usize, cfg: &IcaConfig) -> Result<IcaResult> {
    fast_ica(&center_whiten(x)?, n_components, cfg)
}

/// One component's per-channel scalp weights, scaled to max-abs 1 with the
/// dominant entry positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentWeights {
    weights: Vec<f64>,
    channel_names: Vec<String>,
}

impl ComponentWeights {
    /// Normalizes an arbitrary weight column. `index` only labels the error.
    pub fn from_column(column: &[f64], channel_names: Vec<String>, index: usize) -> Result<Self> {
        if column.len() != channel_names.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} channels",
                column.len(),
                channel_names.len()
            )));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("component {index} has non-finite weights")));
        }
        let (arg, peak) = column
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(ai, am), (i, &v)| {
                if v.abs() > am.abs() {
                    (i, v)
                } else {
                    (ai, am)
                }
            });
        if peak == 0.0 {
            return Err(Error::DegenerateComponent(index));
        }
        let mut weights: Vec<f64> = column.iter().map(|v| v / peak).collect();
        // exact, even if the division above rounded
        weights[arg] = 1.0;
        Ok(Self {
            weights,
            channel_names,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn weight_of(&self, label: &str) -> Option<f64> {
        self.channel_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(label))
            .map(|i| self.weights[i])
    }
}

/// Column `k` of the mixing matrix as normalized scalp weights.
pub fn component_weights(
    result: &IcaResult,
    k: usize,
    channel_names: &[String],
) -> Result<ComponentWeights> {
    if k >= result.n_components() {
        return Err(Error::Index {
            index: k,
            len: result.n_components(),
        });
    }
    let column: Vec<f64> = result.mixing.column(k).iter().copied().collect();
    ComponentWeights::from_column(&column, channel_names.to_vec(), k)
}

/// Amari performance index of a square matrix: 0 for a scaled permutation,
/// at most 1.
pub fn amari_index(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    assert!(p.is_square() && n >= 2, "Amari index needs a square matrix, n >= 2");
    let a = p.abs();
    let mut total = 0.0;
    for row in a.row_iter() {
        total += row.sum() / row.max() - 1.0;
    }
    for col in a.column_iter() {
        total += col.sum() / col.max() - 1.0;
    }
    total / (2.0 * n as f64 * (n as f64 - 1.0))
}
