//! Seeded synthetic panels standing in for historical log-DLV data.

use serde::{Deserialize, Serialize};

use crate::models::VarModel;
use crate::numerics::Tensor;
use crate::panel::{reference_grid, GridLabel, LogPanel, DEFAULT_FLOOR};
use crate::rng::{normal_vec, seeded, Rng};

/// Panel length of the reference data set.
pub const REFERENCE_T: usize = 2257;

fn labels(n: usize) -> Vec<GridLabel> {
    let grid = reference_grid();
    if n <= grid.len() {
        grid[..n].to_vec()
    } else {
        (0..n).map(|i| GridLabel::new(0.5 + 0.01 * i as f64, 20).expect("positive")).collect()
    }
}

fn panel(rows: Vec<f64>, t: usize, n: usize) -> LogPanel {
    LogPanel::from_rows_indexed(labels(n), Tensor::matrix(t, n, rows).expect("fixture shape"), DEFAULT_FLOOR).expect("fixture values are finite")
}

/// D-dimensional VAR(1) whose shock scale depends on the observed level
/// factor: `y_{t+1} = φ y_t + σ₀ exp(κ f_t) L ε_{t+1}` with
/// `f_t = mean(y_t) / sd(f)`, equicorrelated shocks via the Cholesky
/// factor `L`, and levels `x_t = μ + y_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarSvFixture {
    pub mean: Vec<f64>,
    pub phi: f64,
    pub sigma: f64,
    pub vol_loading: f64,
    pub shock_corr: f64,
    pub length: usize,
    pub burn_in: usize,
}

impl Default for VarSvFixture {
    fn default() -> Self {
        Self { mean: vec![-1.2, -0.9, -0.7, -0.5], phi: 0.9, sigma: 0.04, vol_loading: 0.2, shock_corr: 0.7, length: REFERENCE_T, burn_in: 500 }
    }
}

fn equicorr_chol(n: usize, rho: f64) -> Vec<f64> {
    let mut s = vec![rho; n * n];
    for i in 0..n {
        s[i * n + i] = 1.0;
    }
    crate::models::var::cholesky_psd(&s, n)
}

impl VarSvFixture {
    /// Standard deviation of the level factor without volatility feedback.
    fn factor_sd(&self) -> f64 {
        let n = self.mean.len() as f64;
        let shock_var = self.sigma * self.sigma * (1.0 + (n - 1.0) * self.shock_corr) / n;
        (shock_var / (1.0 - self.phi * self.phi)).sqrt()
    }

    pub fn generate(&self, seed: u64) -> LogPanel {
        let n = self.mean.len();
        let l = equicorr_chol(n, self.shock_corr);
        let fsd = self.factor_sd();
        let mut rng = seeded(seed);
        let mut y = vec![0.0; n];
        let mut rows = Vec::with_capacity(self.length * n);
        for t in 0..self.burn_in + self.length {
            if t >= self.burn_in {
                rows.extend(y.iter().zip(&self.mean).map(|(v, m)| v + m));
            }
            let f = y.iter().sum::<f64>() / n as f64 / fsd;
            let scale = self.sigma * (self.vol_loading * f).clamp(-3.0, 3.0).exp();
            let e = normal_vec(&mut rng, n);
            for i in 0..n {
                let shock: f64 = (0..=i).map(|j| l[i * n + j] * e[j]).sum();
                y[i] = self.phi * y[i] + scale * shock;
            }
        }
        panel(rows, self.length, n)
    }
}

/// Panel on the 8 × 4 reference grid driven by five AR(1) factors with
/// smooth loadings, plus independent noise with standard deviation
/// `noise` times the average signal standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorFixture {
    pub factor_sd: [f64; 5],
    pub factor_phi: [f64; 5],
    pub noise: f64,
    pub length: usize,
}

impl Default for FactorFixture {
    fn default() -> Self {
        Self { factor_sd: [0.30, 0.15, 0.08, 0.05, 0.03], factor_phi: [0.99, 0.97, 0.95, 0.9, 0.8], noise: 0.02, length: REFERENCE_T }
    }
}

impl FactorFixture {
    pub fn generate(&self, seed: u64) -> LogPanel {
        let grid = reference_grid();
        let n = grid.len();
        let mut loadings = vec![[0.0; 5]; n];
        for (j, g) in grid.iter().enumerate() {
            let k = (g.relative_strike - 1.0) / 0.2;
            let m = ((g.maturity_days as f64) / 60.0).ln();
            loadings[j] = [1.0, k, m, k * k - 0.5, k * m];
        }
        let mut rng: Rng = seeded(seed);
        let mut f = [0.0; 5];
        let mut signal = Vec::with_capacity(self.length * n);
        for t in 0..self.length + 200 {
            for c in 0..5 {
                let innov = self.factor_sd[c] * (1.0 - self.factor_phi[c].powi(2)).sqrt();
                f[c] = self.factor_phi[c] * f[c] + innov * normal_vec(&mut rng, 1)[0];
            }
            if t >= 200 {
                for (j, g) in grid.iter().enumerate() {
                    let k = g.relative_strike - 1.0;
                    let base = (0.25 + 0.8 * k * k).ln() - 0.1 * (g.maturity_days as f64 / 100.0);
                    signal.push(base + (0..5).map(|c| loadings[j][c] * f[c]).sum::<f64>());
                }
            }
        }
        let sd: f64 = (0..n)
            .map(|j| {
                let col: Vec<f64> = (0..self.length).map(|t| signal[t * n + j]).collect();
                let m = col.iter().sum::<f64>() / col.len() as f64;
                (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        let noise = normal_vec(&mut rng, self.length * n);
        let rows = signal.iter().zip(noise).map(|(s, e)| s + self.noise * sd * e).collect();
        panel(rows, self.length, n)
    }
}

/// Univariate `x_{t+1} = μ + φ (x_t - μ) + σ ε_{t+1}`.
pub fn ar1_panel(phi: f64, mean: f64, sigma: f64, length: usize, seed: u64) -> LogPanel {
    let mut rng = seeded(seed);
    let sd = sigma / (1.0 - phi * phi).max(1e-12).sqrt();
    let mut x = mean + sd * normal_vec(&mut rng, 1)[0];
    let mut rows = Vec::with_capacity(length);
    for _ in 0..length {
        rows.push(x);
        x = mean + phi * (x - mean) + sigma * normal_vec(&mut rng, 1)[0];
    }
    panel(rows, length, 1)
}

/// `steps` rows simulated from `model` after the `order` rows of `init`
/// (oldest first), which are included at the top.
pub fn simulate_var(model: &VarModel, init: &Tensor, steps: usize, seed: u64) -> Tensor {
    let n = model.dim();
    let p = model.order();
    let mut rng = seeded(seed);
    let mut rows: Vec<f64> = init.data().to_vec();
    for _ in 0..steps {
        let t = rows.len() / n;
        let history: Vec<f64> = (1..=p).flat_map(|k| rows[(t - k) * n..(t - k + 1) * n].to_vec()).collect();
        let z = normal_vec(&mut rng, n);
        rows.extend(model.step_flat(&history, &z));
    }
    Tensor::matrix(rows.len() / n, n, rows).expect("simulated shape")
}
