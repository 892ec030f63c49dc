//! Conditional networks: the generator `g(z, s)`, the discriminator
//! `d([s, x])` and the diagonal-Gaussian head used for quasi-maximum
//! likelihood.

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpSpec};
use super::normalize::{Normalizer, Representation};
use super::ModelError;
use crate::numerics::{concat, Tensor, Var};
use crate::rng::Rng;

/// Architecture shared by the three conditional networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub spectral_norm: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden_widths: vec![64, 64, 64], activation: Activation::LeakyRelu, spectral_norm: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    mlp: Mlp,
    noise_dim: usize,
    normalizer: Normalizer,
}

impl Generator {
    /// `noise_dim` defaults to the value dimension when `None`.
    pub fn new(net: &NetConfig, normalizer: Normalizer, noise_dim: Option<usize>, rng: &mut Rng) -> Result<Self, ModelError> {
        let noise_dim = noise_dim.unwrap_or(normalizer.value_dim);
        let spec = MlpSpec {
            input_dim: noise_dim + normalizer.state_dim(),
            output_dim: normalizer.value_dim,
            hidden_widths: net.hidden_widths.clone(),
            activation: net.activation,
            spectral_norm: net.spectral_norm,
        };
        Ok(Self { mlp: Mlp::new(spec, rng)?, noise_dim, normalizer })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn value_dim(&self) -> usize {
        self.normalizer.value_dim
    }

    pub fn lags(&self) -> usize {
        self.normalizer.lags
    }

    pub fn state_dim(&self) -> usize {
        self.normalizer.state_dim()
    }

    fn check(&self, z_cols: usize, s_cols: usize) -> Result<(), ModelError> {
        if z_cols != self.noise_dim {
            return Err(ModelError::Dimension { what: "noise", expected: self.noise_dim, got: z_cols });
        }
        self.normalizer.check_state(s_cols)
    }

    /// Batched `x̃ = g(z, s)` for `z: [B, noise_dim]`, `s: [B, state_dim]`.
    pub fn forward(&self, z: &Tensor, s: &Tensor) -> Result<Tensor, ModelError> {
        self.check(z.cols(), s.cols())?;
        let input = Tensor::concat(&[z, &self.normalizer.state_features(s)?], 1)?;
        let raw = self.mlp.forward(&input)?;
        self.normalizer.decode(s, &raw)
    }

    pub fn forward_graph<'g>(&self, params: &[Var<'g>], z: Var<'g>, s: Var<'g>) -> Result<Var<'g>, ModelError> {
        let (zs, ss) = (z.shape(), s.shape());
        self.check(*zs.last().unwrap_or(&0), *ss.last().unwrap_or(&0))?;
        let g = z.graph();
        let input = concat(&[z, self.normalizer.state_features_graph(s)?], 1)?;
        let raw = self.mlp.forward_graph(params, input)?;
        self.normalizer.decode_graph(g, s, raw)
    }

    /// Single-sample convenience wrapper.
    pub fn generator_forward(&self, z: &[f64], s: &[f64]) -> Result<Vec<f64>, ModelError> {
        let z = Tensor::matrix(1, z.len(), z.to_vec())?;
        let s = Tensor::matrix(1, s.len(), s.to_vec())?;
        Ok(self.forward(&z, &s)?.into_data())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    mlp: Mlp,
    normalizer: Normalizer,
}

impl Discriminator {
    pub fn new(net: &NetConfig, normalizer: Normalizer, rng: &mut Rng) -> Result<Self, ModelError> {
        let spec = MlpSpec {
            input_dim: normalizer.state_dim() + normalizer.value_dim,
            output_dim: 1,
            hidden_widths: net.hidden_widths.clone(),
            activation: net.activation,
            spectral_norm: net.spectral_norm,
        };
        Ok(Self { mlp: Mlp::new(spec, rng)?, normalizer })
    }

    /// Wraps an existing network taking `state_dim + value_dim` inputs.
    pub fn from_mlp(mlp: Mlp, normalizer: Normalizer) -> Result<Self, ModelError> {
        let need = normalizer.state_dim() + normalizer.value_dim;
        if mlp.spec().input_dim != need || mlp.spec().output_dim != 1 {
            return Err(ModelError::Dimension { what: "discriminator input", expected: need, got: mlp.spec().input_dim });
        }
        Ok(Self { mlp, normalizer })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.spec().input_dim
    }

    /// Network input `[state features, value features]`.
    pub fn features(&self, s: &Tensor, x: &Tensor) -> Result<Tensor, ModelError> {
        let fs = self.normalizer.state_features(s)?;
        let fx = self.normalizer.value_features(s, x)?;
        Ok(Tensor::concat(&[&fs, &fx], 1)?)
    }

    pub fn features_graph<'g>(&self, s: Var<'g>, x: Var<'g>) -> Result<Var<'g>, ModelError> {
        let fs = self.normalizer.state_features_graph(s)?;
        let fx = self.normalizer.value_features_graph(s, x)?;
        Ok(concat(&[fs, fx], 1)?)
    }

    /// Logits `[B, 1]` from network-coordinate inputs.
    pub fn logits(&self, features: &Tensor) -> Result<Tensor, ModelError> {
        self.mlp.forward(features)
    }

    pub fn logits_graph<'g>(&self, params: &[Var<'g>], features: Var<'g>) -> Result<Var<'g>, ModelError> {
        self.mlp.forward_graph(params, features)
    }

    /// Logit of one `(state, candidate)` pair.
    pub fn discriminator_forward(&self, s: &[f64], x: &[f64]) -> Result<f64, ModelError> {
        let s = Tensor::matrix(1, s.len(), s.to_vec())?;
        let x = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.logits(&self.features(&s, &x)?)?.data()[0])
    }
}

/// State ↦ (mean, log-variance) network. Variances are `exp` of the head
/// output, so positive by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmleHead {
    mlp: Mlp,
    normalizer: Normalizer,
}

impl QmleHead {
    pub fn new(net: &NetConfig, normalizer: Normalizer, rng: &mut Rng) -> Result<Self, ModelError> {
        let spec = MlpSpec {
            input_dim: normalizer.state_dim(),
            output_dim: 2 * normalizer.value_dim,
            hidden_widths: net.hidden_widths.clone(),
            activation: net.activation,
            spectral_norm: net.spectral_norm,
        };
        Ok(Self { mlp: Mlp::new(spec, rng)?, normalizer })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn value_dim(&self) -> usize {
        self.normalizer.value_dim
    }

    pub fn lags(&self) -> usize {
        self.normalizer.lags
    }

    fn log_scale(&self) -> Tensor {
        Tensor::vector(self.normalizer.value_scale().iter().map(|s| 2.0 * s.ln()).collect())
    }

    /// Means and variances, each `[B, value_dim]`.
    pub fn forward(&self, s: &Tensor) -> Result<(Tensor, Tensor), ModelError> {
        let out = self.mlp.forward(&self.normalizer.state_features(s)?)?;
        let n = self.value_dim();
        let mu = self.normalizer.decode(s, &out.slice(1, 0, n)?)?;
        let var = out.slice(1, n, 2 * n)?.add(&self.log_scale())?.map(f64::exp);
        Ok((mu, var))
    }

    /// Recorded means and log-variances.
    pub fn forward_graph<'g>(&self, params: &[Var<'g>], s: Var<'g>) -> Result<(Var<'g>, Var<'g>), ModelError> {
        self.normalizer.check_state(*s.shape().last().unwrap_or(&0))?;
        let g = s.graph();
        let out = self.mlp.forward_graph(params, self.normalizer.state_features_graph(s)?)?;
        let n = self.value_dim();
        let mu = self.normalizer.decode_graph(g, s, out.slice(1, 0, n)?)?;
        let logvar = out.slice(1, n, 2 * n)?.add(g.constant(self.log_scale()))?;
        Ok((mu, logvar))
    }

    pub fn qmle_forward(&self, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let s = Tensor::matrix(1, s.len(), s.to_vec())?;
        let (m, v) = self.forward(&s)?;
        Ok((m.into_data(), v.into_data()))
    }

    /// `μ + σ ⊙ z`.
    pub fn sample(&self, s: &Tensor, z: &Tensor) -> Result<Tensor, ModelError> {
        let (mu, var) = self.forward(s)?;
        if z.shape() != mu.shape() {
            return Err(ModelError::Dimension { what: "noise", expected: mu.cols(), got: z.cols() });
        }
        Ok(mu.add(&var.map(f64::sqrt).mul(z)?)?)
    }
}

/// Identity normalizer in the levels representation.
pub fn plain_normalizer(value_dim: usize, lags: usize) -> Normalizer {
    Normalizer::identity(value_dim, lags, Representation::Levels)
}
