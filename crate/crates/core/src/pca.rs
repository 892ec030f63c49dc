//! Linear compression of log-DLV levels onto their leading principal axes.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

/// Number of principal components used by the compressed models.
pub const DEFAULT_COMPONENTS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PcaError {
    #[error("n_components must be in 1..={max}, got {got}")]
    Components { got: usize, max: usize },
    #[error("need more rows ({rows}) than columns ({cols}) to fit")]
    TooFewRows { rows: usize, cols: usize },
    #[error("expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },
}

/// Fitted projection `P = W (x - mean)` and reconstruction
/// `x = mean + W_pinv P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionMap {
    pub mean: Vec<f64>,
    /// Row-major `n_components × n_x`.
    pub projection: Vec<f64>,
    /// Row-major `n_x × n_components`.
    pub reconstruction: Vec<f64>,
    /// One ratio per input dimension, descending, summing to one.
    pub explained_variance_ratio: Vec<f64>,
    pub n_components: usize,
    pub n_x: usize,
    pub centered: bool,
    /// Components whose variance is numerically zero.
    pub rank_deficient: bool,
    pub rank: usize,
}

/// Centered PCA on the rows of `values`.
pub fn fit_pca(values: &Tensor, n_components: usize) -> Result<CompressionMap, PcaError> {
    fit_pca_with(values, n_components, true)
}

/// PCA with optional centering. Uncentered fits use the second-moment
/// matrix and a zero mean.
pub fn fit_pca_with(values: &Tensor, n_components: usize, centered: bool) -> Result<CompressionMap, PcaError> {
    let (t, n) = values.dims2();
    if n_components == 0 || n_components > n {
        return Err(PcaError::Components { got: n_components, max: n });
    }
    if t <= n {
        return Err(PcaError::TooFewRows { rows: t, cols: n });
    }
    let mean: Vec<f64> = if centered {
        (0..n).map(|j| (0..t).map(|i| values.get(i, j)).sum::<f64>() / t as f64).collect()
    } else {
        vec![0.0; n]
    };
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for i in 0..t {
        let row = values.row(i);
        for a in 0..n {
            let da = row[a] - mean[a];
            for b in a..n {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..n {
        for b in a..n {
            let v = cov[(a, b)] / t as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    let top = lambdas.first().copied().unwrap_or(0.0);
    let rank = lambdas.iter().filter(|&&l| l > top * 1e-12 && l > 0.0).count();
    let explained_variance_ratio = if total > 0.0 {
        lambdas.iter().map(|l| l / total).collect()
    } else {
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        r
    };

    let mut projection = vec![0.0; n_components * n];
    for (c, &k) in order.iter().take(n_components).enumerate() {
        let col = eig.eigenvectors.column(k);
        // Fix the sign so the largest-magnitude loading is positive.
        let pivot = (0..n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            projection[c * n + j] = sign * col[j];
        }
    }
    let mut reconstruction = vec![0.0; n * n_components];
    for c in 0..n_components {
        for j in 0..n {
            reconstruction[j * n_components + c] = projection[c * n + j];
        }
    }
    Ok(CompressionMap {
        mean,
        projection,
        reconstruction,
        explained_variance_ratio,
        n_components,
        n_x: n,
        centered,
        rank_deficient: rank < n_components,
        rank,
    })
}

impl CompressionMap {
    pub fn projection_matrix(&self) -> Tensor {
        Tensor::matrix(self.n_components, self.n_x, self.projection.clone()).expect("projection shape")
    }

    pub fn reconstruction_matrix(&self) -> Tensor {
        Tensor::matrix(self.n_x, self.n_components, self.reconstruction.clone()).expect("reconstruction shape")
    }

    /// Cumulative explained-variance curve.
    pub fn cumulative_ratio(&self) -> Vec<f64> {
        self.explained_variance_ratio
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }

    /// Maps `k × n_x` rows to `k × n_components`.
    pub fn compress(&self, rows: &Tensor) -> Result<Tensor, PcaError> {
        let (k, n) = rows.dims2();
        if n != self.n_x {
            return Err(PcaError::Shape { expected: self.n_x, got: n });
        }
        let mut out = Vec::with_capacity(k * self.n_components);
        let mut centered = vec![0.0; n];
        for i in 0..k {
            for (c, (v, m)) in centered.iter_mut().zip(rows.row(i).iter().zip(&self.mean)) {
                *c = v - m;
            }
            for c in 0..self.n_components {
                let w = &self.projection[c * n..(c + 1) * n];
                out.push(w.iter().zip(&centered).map(|(a, b)| a * b).sum());
            }
        }
        Ok(Tensor::matrix(k, self.n_components, out).expect("compressed shape"))
    }

    /// Maps `k × n_components` rows back to `k × n_x`.
    pub fn decompress(&self, rows: &Tensor) -> Result<Tensor, PcaError> {
        let (k, p) = rows.dims2();
        if p != self.n_components {
            return Err(PcaError::Shape { expected: self.n_components, got: p });
        }
        let n = self.n_x;
        let mut out = Vec::with_capacity(k * n);
        for i in 0..k {
            let row = rows.row(i);
            for j in 0..n {
                let w = &self.reconstruction[j * p..(j + 1) * p];
                out.push(self.mean[j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        Ok(Tensor::matrix(k, n, out).expect("decompressed shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> Tensor {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| {
            let s = i as f64 * 0.3 - 2.0;
            vec![1.0 + s, 2.0 - 2.0 * s, 0.5 * s]
        }).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn degenerate_line_has_full_ratio_on_first_axis() {
        let cm = fit_pca(&line_data(), 1).unwrap();
        assert!((cm.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!(cm.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(cm.rank, 1);
        assert!(!cm.rank_deficient);
        let cm3 = fit_pca(&line_data(), 3).unwrap();
        assert!(cm3.rank_deficient);
    }

    #[test]
    fn mean_row_compresses_to_zero() {
        let data = line_data();
        let cm = fit_pca(&data, 2).unwrap();
        let mean = Tensor::matrix(1, 3, cm.mean.clone()).unwrap();
        assert!(cm.compress(&mean).unwrap().data().iter().all(|v| v.abs() < 1e-12));
        let zero = Tensor::zeros(&[1, 2]);
        assert_eq!(cm.decompress(&zero).unwrap().data(), &cm.mean[..]);
    }

    #[test]
    fn unit_coordinate_decompresses_to_first_axis() {
        let cm = fit_pca(&line_data(), 2).unwrap();
        let e1 = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let x = cm.decompress(&e1).unwrap();
        for j in 0..3 {
            assert!((x.data()[j] - cm.mean[j] - cm.projection[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let cm = fit_pca(&line_data(), 2).unwrap();
        assert!(matches!(cm.compress(&Tensor::zeros(&[1, 2])), Err(PcaError::Shape { .. })));
        assert!(matches!(cm.decompress(&Tensor::zeros(&[1, 3])), Err(PcaError::Shape { .. })));
        assert!(matches!(fit_pca(&line_data(), 4), Err(PcaError::Components { .. })));
        assert!(matches!(fit_pca(&Tensor::zeros(&[3, 3]), 1), Err(PcaError::TooFewRows { .. })));
    }

    #[test]
    fn uncentered_variant_has_zero_mean() {
        let cm = fit_pca_with(&line_data(), 2, false).unwrap();
        assert!(cm.mean.iter().all(|&m| m == 0.0));
        assert!(!cm.centered);
    }
}
