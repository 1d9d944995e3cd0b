//! Principal component analysis for embedding compression.
//!
//! Fitting eigendecomposes the population covariance of the centered data.
//! When there are fewer samples than input dimensions the Gram matrix route
//! is used instead: the nonzero eigenvalues of `Xc Xc^T / N` equal those of
//! the covariance, and each covariance eigenvector is recovered as
//! `Xc^T u / ||Xc^T u||`.

use serde::{Deserialize, Serialize};

use super::MiningError;
use crate::linalg::{self, SquareMatrix};

/// A fitted PCA projection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k` unit-norm principal axes, each of input length.
    pub components: Vec<Vec<f64>>,
    /// Population variance captured by each component, descending.
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Fits a `k`-component projection on the given samples.
    pub fn fit(data: &[Vec<f64>], k: usize) -> Result<Self, MiningError> {
        let n = data.len();
        if n == 0 || k == 0 {
            return Err(MiningError::Parameter(
                "pca requires at least one sample and one component".to_string(),
            ));
        }
        let dim = data[0].len();
        if data.iter().any(|row| row.len() != dim) {
            return Err(MiningError::Parameter(
                "pca input rows have inconsistent lengths".to_string(),
            ));
        }
        if n < k {
            return Err(MiningError::Parameter(format!(
                "pca needs at least k={k} samples, got {n}"
            )));
        }
        if dim < k {
            return Err(MiningError::Parameter(format!(
                "pca cannot extract k={k} components from {dim}-dimensional input"
            )));
        }

        let mut mean = vec![0.0f64; dim];
        for row in data {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let centered: Vec<Vec<f64>> = data
            .iter()
            .map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();

        let (values, components) = if dim <= n {
            // Covariance route: C = Xc^T Xc / N, dim x dim.
            let mut cov = SquareMatrix::zeros(dim);
            for row in &centered {
                for i in 0..dim {
                    for j in i..dim {
                        cov.add_to(i, j, row[i] * row[j]);
                    }
                }
            }
            for i in 0..dim {
                for j in i..dim {
                    let v = cov.get(i, j) / n as f64;
                    cov.set(i, j, v);
                    cov.set(j, i, v);
                }
            }
            let (values, vectors) = linalg::symmetric_eigen(&cov)?;
            (values, vectors)
        } else {
            // Gram route: M = Xc Xc^T / N, n x n.
            let mut gram = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in i..n {
                    let v = linalg::dot(&centered[i], &centered[j]) / n as f64;
                    gram.set(i, j, v);
                    gram.set(j, i, v);
                }
            }
            let (values, gram_vectors) = linalg::symmetric_eigen(&gram)?;
            let mut components = Vec::with_capacity(k);
            for u in gram_vectors.iter().take(k) {
                let mut axis = vec![0.0f64; dim];
                for (weight, row) in u.iter().zip(&centered) {
                    for (a, v) in axis.iter_mut().zip(row) {
                        *a += weight * v;
                    }
                }
                let norm = linalg::norm(&axis);
                if norm > 1e-12 {
                    for a in axis.iter_mut() {
                        *a /= norm;
                    }
                }
                canonicalize(&mut axis);
                components.push(axis);
            }
            (values, components)
        };

        Ok(Pca {
            mean,
            components: components.into_iter().take(k).collect(),
            explained_variance: values.into_iter().take(k).map(|v| v.max(0.0)).collect(),
        })
    }

    /// Projects one vector onto the fitted components.
    pub fn transform_one(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components
            .iter()
            .map(|axis| linalg::dot(axis, &centered))
            .collect()
    }

    /// Reconstructs a vector from its projection.
    pub fn reconstruct(&self, projection: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coeff, axis) in projection.iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += coeff * a;
            }
        }
        out
    }
}

fn canonicalize(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fits a `k`-component PCA on the inputs and returns their projections,
/// aligned with the input order.
pub fn pca_fit_transform(embeddings: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>, MiningError> {
    let pca = Pca::fit(embeddings, k)?;
    Ok(embeddings.iter().map(|e| pca.transform_one(e)).collect())
}
