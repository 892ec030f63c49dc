//! Vector autoregression `x_{t+1} = A_1 x_t + … + A_p x_{t-p+1} + b + ε`,
//! `ε ~ N(0, Σ)`, fitted by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::Tensor;

/// Ridge added to the regressor Gram matrix when it is not positive definite.
pub const RIDGE_EPS: f64 = 1e-8;

pub const DEFAULT_ORDER: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    order: usize,
    dim: usize,
    /// `order` row-major `dim × dim` blocks.
    #[serde(skip)]
    coefficients: Vec<f64>,
    #[serde(skip)]
    intercept: Vec<f64>,
    /// Row-major residual covariance.
    #[serde(skip)]
    sigma: Vec<f64>,
    #[serde(skip)]
    chol: Vec<f64>,
    /// Whether the ridge fallback was used.
    pub ridged: bool,
}

/// Lower-triangular `L` with `L Lᵀ = Σ` for positive semi-definite `Σ`;
/// zero pivots yield zero columns.
pub fn cholesky_psd(sigma: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    let scale = (0..n).map(|i| sigma[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = sigma[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 1e-14 * scale {
            continue;
        }
        let pivot = d.sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let mut s = sigma[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / pivot;
        }
    }
    l
}

/// Least-squares fit on rows of `values` (`T × N`).
pub fn var_fit(values: &Tensor, order: usize) -> Result<VarModel, ModelError> {
    let (t, n) = values.dims2();
    if order == 0 {
        return Err(ModelError::InvalidSpec("VAR order must be at least 1".into()));
    }
    if t <= n * order + 1 {
        return Err(ModelError::InvalidSpec(format!("VAR({order}) on {n} series needs more than {} rows, got {t}", n * order + 1)));
    }
    let rows = t - order;
    let k = n * order;
    let mut x = DMatrix::<f64>::zeros(rows, k);
    let mut y = DMatrix::<f64>::zeros(rows, n);
    for r in 0..rows {
        let target = order + r;
        for j in 0..n {
            y[(r, j)] = values.get(target, j);
        }
        for lag in 1..=order {
            for j in 0..n {
                x[(r, (lag - 1) * n + j)] = values.get(target - lag, j);
            }
        }
    }
    let x_mean: Vec<f64> = (0..k).map(|c| x.column(c).mean()).collect();
    let y_mean: Vec<f64> = (0..n).map(|c| y.column(c).mean()).collect();
    let mut xc = x.clone();
    let mut yc = y.clone();
    for r in 0..rows {
        for c in 0..k {
            xc[(r, c)] -= x_mean[c];
        }
        for c in 0..n {
            yc[(r, c)] -= y_mean[c];
        }
    }
    let gram = xc.transpose() * &xc;
    let rhs = xc.transpose() * &yc;
    let (beta, ridged) = match gram.clone().cholesky() {
        Some(ch) if ch.l().diagonal().iter().all(|d| *d > 1e-10 * gram.diagonal().max().max(1.0).sqrt()) => (ch.solve(&rhs), false),
        _ => {
            let lambda = RIDGE_EPS * (gram.trace() / k as f64).max(1.0);
            let reg = &gram + DMatrix::<f64>::identity(k, k) * lambda;
            let ch = reg.cholesky().ok_or_else(|| ModelError::Singular("VAR design matrix".into()))?;
            (ch.solve(&rhs), true)
        }
    };
    // beta is k × n with y = x beta, so A_lag[i][j] = beta[(lag-1)·n + j, i].
    let mut coefficients = vec![0.0; order * n * n];
    for lag in 0..order {
        for i in 0..n {
            for j in 0..n {
                coefficients[lag * n * n + i * n + j] = beta[(lag * n + j, i)];
            }
        }
    }
    let mut intercept = y_mean.clone();
    for i in 0..n {
        for c in 0..k {
            intercept[i] -= beta[(c, i)] * x_mean[c];
        }
    }
    let resid = &yc - &xc * &beta;
    let cov = resid.transpose() * &resid / rows as f64;
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sigma[i * n + j] = 0.5 * (cov[(i, j)] + cov[(j, i)]);
        }
    }
    let chol = cholesky_psd(&sigma, n);
    Ok(VarModel { order, dim: n, coefficients, intercept, sigma, chol, ridged })
}

impl VarModel {
    /// Builds a model from explicit parameters.
    pub fn from_parts(a: &[Tensor], b: &[f64], sigma: &Tensor) -> Result<Self, ModelError> {
        let n = b.len();
        if a.is_empty() || a.iter().any(|m| m.shape() != [n, n]) || sigma.shape() != [n, n] {
            return Err(ModelError::InvalidSpec(format!("VAR parts must be {n}×{n}")));
        }
        let coefficients = a.iter().flat_map(|m| m.data().iter().copied()).collect();
        let chol = cholesky_psd(sigma.data(), n);
        Ok(Self { order: a.len(), dim: n, coefficients, intercept: b.to_vec(), sigma: sigma.data().to_vec(), chol, ridged: false })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficient(&self, lag: usize) -> Tensor {
        let n = self.dim;
        Tensor::matrix(n, n, self.coefficients[(lag - 1) * n * n..lag * n * n].to_vec()).expect("coefficient shape")
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    pub fn sigma(&self) -> Tensor {
        Tensor::matrix(self.dim, self.dim, self.sigma.clone()).expect("sigma shape")
    }

    pub fn chol(&self) -> Tensor {
        Tensor::matrix(self.dim, self.dim, self.chol.clone()).expect("chol shape")
    }

    /// One step from `history` (newest first, `order` rows) and a standard
    /// normal draw `z`.
    pub fn var_step(&self, history: &[&[f64]], z: &[f64]) -> Result<Vec<f64>, ModelError> {
        let n = self.dim;
        if history.len() != self.order || history.iter().any(|h| h.len() != n) {
            return Err(ModelError::Dimension { what: "VAR history", expected: self.order * n, got: history.iter().map(|h| h.len()).sum() });
        }
        if z.len() != n {
            return Err(ModelError::Dimension { what: "noise", expected: n, got: z.len() });
        }
        let flat: Vec<f64> = history.iter().flat_map(|h| h.iter().copied()).collect();
        Ok(self.step_flat(&flat, z))
    }

    /// Like [`VarModel::var_step`] with the history concatenated newest first.
    pub(crate) fn step_flat(&self, history: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = self.intercept.clone();
        for lag in 0..self.order {
            let block = &self.coefficients[lag * n * n..(lag + 1) * n * n];
            let h = &history[lag * n..(lag + 1) * n];
            for i in 0..n {
                out[i] += (0..n).map(|j| block[i * n + j] * h[j]).sum::<f64>();
            }
        }
        for i in 0..n {
            out[i] += (0..=i).map(|j| self.chol[i * n + j] * z[j]).sum::<f64>();
        }
        out
    }

    /// Unconditional mean `(I - Σ A_i)^{-1} b`.
    pub fn stationary_mean(&self) -> Result<Vec<f64>, ModelError> {
        let n = self.dim;
        let mut m = DMatrix::<f64>::identity(n, n);
        for lag in 1..=self.order {
            let a = self.coefficient(lag);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] -= a.get(i, j);
                }
            }
        }
        let b = DVector::from_column_slice(&self.intercept);
        let sol = m.lu().solve(&b).ok_or_else(|| ModelError::Singular("I - ΣA".into()))?;
        Ok(sol.iter().copied().collect())
    }

    pub(crate) fn take_params(&mut self) -> Vec<f64> {
        let mut p = std::mem::take(&mut self.coefficients);
        p.append(&mut self.intercept);
        p.append(&mut self.sigma);
        self.chol.clear();
        p
    }

    pub(crate) fn put_params(&mut self, p: Vec<f64>) -> Result<(), ModelError> {
        let n = self.dim;
        let ca = self.order * n * n;
        if p.len() != ca + n + n * n {
            return Err(ModelError::ParamCount { expected: ca + n + n * n, got: p.len() });
        }
        self.coefficients = p[..ca].to_vec();
        self.intercept = p[ca..ca + n].to_vec();
        self.sigma = p[ca + n..].to_vec();
        self.chol = cholesky_psd(&self.sigma, n);
        Ok(())
    }
}
