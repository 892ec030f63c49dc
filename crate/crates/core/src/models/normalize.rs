//! Fixed affine maps between data coordinates and network coordinates.
//!
//! States are standardized per element. Values (next observations) are
//! either standardized levels or, with [`Representation::Increments`],
//! scaled differences from the current state: generators then output
//! `x_t + scale ⊙ raw` and discriminators see `(x_{t+1} - x_t) / scale`.
//! Both are invertible linear maps of `[state, value]`, fitted once and
//! never trained.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{Graph, Tensor, Var};
use crate::panel::WindowSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Levels,
    Increments,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub value_dim: usize,
    pub lags: usize,
    pub representation: Representation,
    pub level_mean: Vec<f64>,
    pub level_std: Vec<f64>,
    pub increment_std: Vec<f64>,
}

fn std_floor(v: f64) -> f64 {
    if v.is_finite() && v > 1e-12 {
        v
    } else {
        1.0
    }
}

impl Normalizer {
    /// The identity map.
    pub fn identity(value_dim: usize, lags: usize, representation: Representation) -> Self {
        Self {
            value_dim,
            lags,
            representation,
            level_mean: vec![0.0; value_dim],
            level_std: vec![1.0; value_dim],
            increment_std: vec![1.0; value_dim],
        }
    }

    /// Moments of the rows underlying `windows`.
    pub fn fit(windows: &WindowSet, representation: Representation) -> Self {
        Self::fit_values(windows.values(), windows.lags(), representation)
    }

    pub fn fit_values(values: &Tensor, lags: usize, representation: Representation) -> Self {
        let (t, n) = values.dims2();
        let mut out = Self::identity(n, lags, representation);
        for j in 0..n {
            let col = values.column(j);
            let m = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64;
            out.level_mean[j] = m;
            out.level_std[j] = std_floor(var.sqrt());
            if t > 1 {
                let d: Vec<f64> = col.windows(2).map(|w| w[1] - w[0]).collect();
                let dm = d.iter().sum::<f64>() / d.len() as f64;
                let dv = d.iter().map(|v| (v - dm).powi(2)).sum::<f64>() / d.len() as f64;
                out.increment_std[j] = std_floor(dv.sqrt());
            }
        }
        out
    }

    pub fn state_dim(&self) -> usize {
        (self.lags + 1) * self.value_dim
    }

    fn state_shift_scale(&self) -> (Tensor, Tensor) {
        let reps = self.lags + 1;
        let shift: Vec<f64> = (0..reps).flat_map(|_| self.level_mean.iter().copied()).collect();
        let inv: Vec<f64> = (0..reps).flat_map(|_| self.level_std.iter().map(|s| 1.0 / s)).collect();
        (Tensor::vector(shift), Tensor::vector(inv))
    }

    /// Per-dimension scale of the network's value coordinates.
    pub fn value_scale(&self) -> &[f64] {
        match self.representation {
            Representation::Levels => &self.level_std,
            Representation::Increments => &self.increment_std,
        }
    }

    pub(crate) fn check_state(&self, cols: usize) -> Result<(), ModelError> {
        if cols != self.state_dim() {
            return Err(ModelError::Dimension { what: "state", expected: self.state_dim(), got: cols });
        }
        Ok(())
    }

    pub(crate) fn check_value(&self, cols: usize) -> Result<(), ModelError> {
        if cols != self.value_dim {
            return Err(ModelError::Dimension { what: "value", expected: self.value_dim, got: cols });
        }
        Ok(())
    }

    pub fn state_features(&self, s: &Tensor) -> Result<Tensor, ModelError> {
        self.check_state(s.cols())?;
        let (shift, inv) = self.state_shift_scale();
        Ok(s.sub(&shift)?.mul(&inv)?)
    }

    pub fn state_features_graph<'g>(&self, s: Var<'g>) -> Result<Var<'g>, ModelError> {
        let g = s.graph();
        let (shift, inv) = self.state_shift_scale();
        Ok(s.sub(g.constant(shift))?.mul(g.constant(inv))?)
    }

    fn current(&self, s: &Tensor) -> Result<Tensor, ModelError> {
        Ok(s.slice(1, 0, self.value_dim)?)
    }

    /// Value in network coordinates.
    pub fn value_features(&self, s: &Tensor, x: &Tensor) -> Result<Tensor, ModelError> {
        self.check_state(s.cols())?;
        self.check_value(x.cols())?;
        match self.representation {
            Representation::Levels => {
                let inv = Tensor::vector(self.level_std.iter().map(|v| 1.0 / v).collect());
                Ok(x.sub(&Tensor::vector(self.level_mean.clone()))?.mul(&inv)?)
            }
            Representation::Increments => {
                let inv = Tensor::vector(self.increment_std.iter().map(|v| 1.0 / v).collect());
                Ok(x.sub(&self.current(s)?)?.mul(&inv)?)
            }
        }
    }

    pub fn value_features_graph<'g>(&self, s: Var<'g>, x: Var<'g>) -> Result<Var<'g>, ModelError> {
        let g = s.graph();
        match self.representation {
            Representation::Levels => {
                let inv = Tensor::vector(self.level_std.iter().map(|v| 1.0 / v).collect());
                Ok(x.sub(g.constant(Tensor::vector(self.level_mean.clone())))?.mul(g.constant(inv))?)
            }
            Representation::Increments => {
                let inv = Tensor::vector(self.increment_std.iter().map(|v| 1.0 / v).collect());
                Ok(x.sub(s.slice(1, 0, self.value_dim)?)?.mul(g.constant(inv))?)
            }
        }
    }

    /// Maps network output back to data coordinates.
    pub fn decode(&self, s: &Tensor, raw: &Tensor) -> Result<Tensor, ModelError> {
        let scale = Tensor::vector(self.value_scale().to_vec());
        let base = match self.representation {
            Representation::Levels => Tensor::vector(self.level_mean.clone()),
            Representation::Increments => self.current(s)?,
        };
        Ok(raw.mul(&scale)?.add(&base)?)
    }

    pub fn decode_graph<'g>(&self, g: &'g Graph, s: Var<'g>, raw: Var<'g>) -> Result<Var<'g>, ModelError> {
        let scale = g.constant(Tensor::vector(self.value_scale().to_vec()));
        let base = match self.representation {
            Representation::Levels => g.constant(Tensor::vector(self.level_mean.clone())),
            Representation::Increments => s.slice(1, 0, self.value_dim)?,
        };
        Ok(raw.mul(scale)?.add(base)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_decode_inverts_features() {
        let values = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.5, 1.0], vec![0.5, 3.0], vec![1.0, 2.5]]).unwrap();
        let n = Normalizer::fit_values(&values, 1, Representation::Increments);
        let s = Tensor::from_rows(&[vec![1.5, 1.0, 1.0, 2.0]]).unwrap();
        let x = Tensor::from_rows(&[vec![0.7, 2.2]]).unwrap();
        let f = n.value_features(&s, &x).unwrap();
        let back = n.decode(&s, &f).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let lv = Normalizer::fit_values(&values, 1, Representation::Levels);
        let back = lv.decode(&s, &lv.value_features(&s, &x).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let values = Tensor::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let n = Normalizer::fit_values(&values, 0, Representation::Levels);
        assert_eq!(n.level_std, vec![1.0]);
        assert_eq!(n.increment_std, vec![1.0]);
    }
}
