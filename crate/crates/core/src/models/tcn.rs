//! Unconditional temporal convolutional network
//! `x̃_t = g(z_t, z_{t-1}, …, z_{t-L+1})` built from dilated causal
//! convolutions without padding.
//!
//! Sequences of `B` parallel series are laid out time-major as
//! `[len · B, channels]` (row `t·B + b`), so a shift by `d` steps is a
//! contiguous row slice.

use serde::{Deserialize, Serialize};

use super::mlp::Activation;
use super::ModelError;
use crate::numerics::{Graph, Tensor, Var};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnSpec {
    pub noise_dim: usize,
    pub output_dim: usize,
    /// Output channels of each convolution block.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    /// One dilation per block.
    pub dilations: Vec<usize>,
    pub activation: Activation,
}

impl TcnSpec {
    /// Kernel 2 with dilations `1, 2, …, 128`: receptive field 256.
    pub fn standard(noise_dim: usize, output_dim: usize, width: usize) -> Self {
        let dilations: Vec<usize> = (0..8).map(|i| 1 << i).collect();
        Self {
            noise_dim,
            output_dim,
            channels: vec![width; dilations.len()],
            kernel_size: 2,
            dilations,
            activation: Activation::LeakyRelu,
        }
    }

    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.noise_dim == 0 || self.output_dim == 0 || self.kernel_size == 0 {
            return Err(ModelError::InvalidSpec("TCN dimensions must be positive".into()));
        }
        if self.channels.len() != self.dilations.len() || self.channels.is_empty() {
            return Err(ModelError::InvalidSpec("TCN needs one channel width per dilation".into()));
        }
        if self.channels.contains(&0) || self.dilations.contains(&0) {
            return Err(ModelError::InvalidSpec("channel widths and dilations must be ≥ 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` per block, then the final 1×1 projection.
    fn block_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.channels.len());
        let mut prev = self.noise_dim;
        for &c in &self.channels {
            dims.push((prev, c));
            prev = c;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        let conv: usize = self.block_dims().iter().map(|(i, o)| self.kernel_size * i * o + o).sum();
        let last = *self.channels.last().unwrap_or(&0);
        conv + last * self.output_dim + self.output_dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcnModel {
    spec: TcnSpec,
    /// Affine output map `mean + scale ⊙ net`.
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
    #[serde(skip)]
    params: Vec<f64>,
}

impl TcnModel {
    pub fn new(spec: TcnSpec, rng: &mut Rng) -> Result<Self, ModelError> {
        use rand::Rng as _;
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.param_count());
        for (i, o) in spec.block_dims() {
            let fan_in = spec.kernel_size * i;
            let a = (6.0 / (fan_in + o) as f64).sqrt();
            params.extend((0..spec.kernel_size * i * o).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, o));
        }
        let last = *spec.channels.last().expect("validated");
        let a = (6.0 / (last + spec.output_dim) as f64).sqrt();
        params.extend((0..last * spec.output_dim).map(|_| rng.random_range(-a..a)));
        params.extend(std::iter::repeat_n(0.0, spec.output_dim));
        let n = spec.output_dim;
        Ok(Self { spec, output_mean: vec![0.0; n], output_scale: vec![1.0; n], params })
    }

    pub fn spec(&self) -> &TcnSpec {
        &self.spec
    }

    pub fn receptive_field(&self) -> usize {
        self.spec.receptive_field()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), ModelError> {
        if params.len() != self.spec.param_count() {
            return Err(ModelError::ParamCount { expected: self.spec.param_count(), got: params.len() });
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn take_params(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.params)
    }

    /// Parameter tensors in layout order: per block `kernel_size` tap
    /// matrices `[in, out]` (oldest tap first) and a bias, then the output
    /// projection and its bias.
    fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        let mut off = 0;
        let mut take = |rows: usize, cols: usize, out: &mut Vec<Tensor>| {
            let t = Tensor::matrix(rows, cols, self.params[off..off + rows * cols].to_vec()).expect("layout");
            off += rows * cols;
            out.push(t);
        };
        for (i, o) in self.spec.block_dims() {
            for _ in 0..self.spec.kernel_size {
                take(i, o, &mut out);
            }
            take(1, o, &mut out);
        }
        let last = *self.spec.channels.last().expect("validated");
        take(last, self.spec.output_dim, &mut out);
        take(1, self.spec.output_dim, &mut out);
        out
    }

    pub fn param_leaves<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.tensors().into_iter().map(|t| g.leaf(t)).collect()
    }

    pub fn param_constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.tensors().into_iter().map(|t| g.constant(t)).collect()
    }

    pub fn flatten_grads(&self, grads: &[Tensor]) -> Vec<f64> {
        grads.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Maps time-major noise `[len · batch, noise_dim]` to outputs
    /// `[(len - L + 1) · batch, output_dim]` where output row block `t`
    /// depends on noise blocks `t .. t + L - 1`.
    pub fn forward_graph<'g>(&self, params: &[Var<'g>], noise: Var<'g>, batch: usize) -> Result<Var<'g>, ModelError> {
        let shape = noise.shape();
        let cols = *shape.last().unwrap_or(&0);
        if cols != self.spec.noise_dim {
            return Err(ModelError::Dimension { what: "TCN noise", expected: self.spec.noise_dim, got: cols });
        }
        let rows = shape.first().copied().unwrap_or(0);
        if batch == 0 || rows % batch != 0 {
            return Err(ModelError::Dimension { what: "TCN batch rows", expected: batch, got: rows });
        }
        let rf = self.receptive_field();
        let mut len = rows / batch;
        if len < rf {
            return Err(ModelError::Dimension { what: "TCN noise window", expected: rf, got: len });
        }
        let g = noise.graph();
        let k = self.spec.kernel_size;
        let mut h = noise;
        let mut p = 0;
        for &d in &self.spec.dilations {
            let out_len = len - (k - 1) * d;
            let mut acc: Option<Var<'g>> = None;
            for tap in 0..k {
                let start = tap * d * batch;
                let part = h.slice(0, start, start + out_len * batch)?.matmul(params[p + tap])?;
                acc = Some(match acc {
                    None => part,
                    Some(a) => a.add(part)?,
                });
            }
            let pre = acc.expect("kernel_size ≥ 1").add(params[p + k])?;
            h = self.spec.activation.apply_var(pre);
            p += k + 1;
            len = out_len;
        }
        let raw = h.matmul(params[p])?.add(params[p + 1])?;
        let scale = g.constant(Tensor::vector(self.output_scale.clone()));
        let mean = g.constant(Tensor::vector(self.output_mean.clone()));
        Ok(raw.mul(scale)?.add(mean)?)
    }

    /// Evaluates [`TcnModel::forward_graph`] on plain tensors.
    pub fn forward_sequence(&self, noise: &Tensor, batch: usize) -> Result<Tensor, ModelError> {
        let g = Graph::new();
        let params = self.param_constants(&g);
        let out = self.forward_graph(&params, g.constant(noise.clone()), batch)?;
        Ok(out.value())
    }

    /// One output from a window of exactly `receptive_field` noise rows,
    /// oldest first.
    pub fn tcn_forward(&self, window: &Tensor) -> Result<Vec<f64>, ModelError> {
        let rf = self.receptive_field();
        if window.rows() != rf {
            return Err(ModelError::Dimension { what: "TCN noise window", expected: rf, got: window.rows() });
        }
        Ok(self.forward_sequence(window, 1)?.into_data())
    }
}
