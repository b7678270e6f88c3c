//! Linear projection baseline: top principal components of the sample
//! covariance.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Mat};

/// Centering mean plus a d x m matrix with orthonormal columns; projection
/// is Vᵀ(x - mean).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProjector {
    pub mean: Vec<f64>,
    pub components: Mat,
    /// Variance captured by each component, descending.
    pub eigenvalues: Vec<f64>,
}

impl LinearProjector {
    pub fn out_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn in_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        Ok(self.components.transpose().matvec(&centered))
    }

    /// Map a projection back into the ambient space.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.components.matvec(y);
        for (xi, m) in x.iter_mut().zip(&self.mean) {
            *xi += m;
        }
        x
    }
}

/// Top-m eigenvectors of the biased sample covariance.
pub fn fit_pca(data: &EmbeddingSet, m: usize) -> Result<LinearProjector> {
    let d = data.dim();
    if m == 0 || m > d {
        return Err(Error::InvalidTargetDim {
            target: m,
            input: d,
        });
    }
    if data.len() < m + 1 {
        return Err(Error::InsufficientSamples {
            need: m + 1,
            got: data.len(),
        });
    }
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for r in data.records() {
        for (s, v) in mean.iter_mut().zip(&r.vector) {
            *s += v;
        }
    }
    for s in mean.iter_mut() {
        *s /= n;
    }
    let mut cov = Mat::zeros(d, d);
    let mut dev = vec![0.0; d];
    for r in data.records() {
        for ((dv, v), mu) in dev.iter_mut().zip(&r.vector).zip(&mean) {
            *dv = v - mu;
        }
        cov.add_outer(&dev, 1.0 / n);
    }
    let (vals, vecs) = sym_eig(&cov)?;
    let mut components = Mat::zeros(d, m);
    for j in 0..m {
        for i in 0..d {
            components[(i, j)] = vecs[(i, j)];
        }
    }
    Ok(LinearProjector {
        mean,
        components,
        eigenvalues: vals[..m].to_vec(),
    })
}
