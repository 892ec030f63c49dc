//! Fully connected networks with optional spectral normalization.
//!
//! Layer `l` maps `x ↦ act(x W_l + b_l)` with `W_l` of shape `[in, out]`;
//! the last layer has no activation. Parameters live in one flat vector,
//! layer by layer, each weight (row-major) followed by its bias.
//!
//! With spectral normalization every weight is divided by an estimate of its
//! largest singular value, `σ ≈ uᵀ W v`, kept current by power iteration on
//! a persisted left vector `u`.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{leaky_relu, softplus, Graph, NumericsError, Tensor, Var};
use crate::rng::{self, Rng};

/// Power-iteration sweeps run when a network is created.
pub const INITIAL_POWER_ITERATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu => leaky_relu(v),
            Activation::Tanh => v.tanh(),
            Activation::Softplus => softplus(v),
        }
    }

    pub fn apply_var(self, x: Var<'_>) -> Var<'_> {
        match self {
            Activation::LeakyRelu => x.leaky_relu(),
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub spectral_norm: bool,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(ModelError::InvalidSpec(format!("all widths must be at least 1: {self:?}")));
        }
        Ok(())
    }

    /// `(in, out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in self.hidden_widths.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    #[serde(skip)]
    params: Vec<f64>,
    /// Left singular-vector estimate per layer (length `in`).
    sn_vectors: Vec<Vec<f64>>,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self, ModelError> {
        use rand::Rng as _;
        spec.validate()?;
        let mut params = Vec::with_capacity(spec.param_count());
        for (i, o) in spec.layer_dims() {
            let a = (6.0 / (i + o) as f64).sqrt();
            params.extend((0..i * o).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, o));
        }
        let sn_vectors = spec
            .layer_dims()
            .iter()
            .map(|&(i, _)| {
                let mut u = rng::normal_vec(rng, i);
                normalize(&mut u);
                u
            })
            .collect();
        let mut mlp = Self { spec, params, sn_vectors };
        if mlp.spec.spectral_norm {
            mlp.power_iteration(INITIAL_POWER_ITERATIONS);
        }
        Ok(mlp)
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>, rng: &mut Rng) -> Result<Self, ModelError> {
        let mut mlp = Self::new(spec, rng)?;
        mlp.set_params(params)?;
        if mlp.spec.spectral_norm {
            mlp.power_iteration(INITIAL_POWER_ITERATIONS);
        }
        Ok(mlp)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
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

    fn offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let w = off;
                off += i * o + o;
                (w, w + i * o, i, o)
            })
            .collect()
    }

    pub fn n_layers(&self) -> usize {
        self.spec.hidden_widths.len() + 1
    }

    /// Raw (unnormalized) weight matrix of layer `l`, `[in, out]`.
    pub fn weight(&self, l: usize) -> Tensor {
        let (w, b, i, o) = self.offsets()[l];
        Tensor::matrix(i, o, self.params[w..b].to_vec()).expect("weight shape")
    }

    pub fn bias(&self, l: usize) -> Tensor {
        let (_, b, _, o) = self.offsets()[l];
        Tensor::vector(self.params[b..b + o].to_vec())
    }

    /// Overwrites the weights of layer `l`.
    pub fn set_weight(&mut self, l: usize, w: &Tensor) -> Result<(), ModelError> {
        let (off, _, i, o) = self.offsets()[l];
        if w.shape() != [i, o] {
            return Err(ModelError::Dimension { what: "layer weight", expected: i * o, got: w.numel() });
        }
        self.params[off..off + i * o].copy_from_slice(w.data());
        Ok(())
    }

    pub fn set_bias(&mut self, l: usize, b: &[f64]) -> Result<(), ModelError> {
        let (_, off, _, o) = self.offsets()[l];
        if b.len() != o {
            return Err(ModelError::Dimension { what: "layer bias", expected: o, got: b.len() });
        }
        self.params[off..off + o].copy_from_slice(b);
        Ok(())
    }

    /// `(u, v)` for layer `l` given the current persisted `u`.
    fn singular_pair(&self, l: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let w = self.weight(l);
        let (i, o) = (w.rows(), w.cols());
        let u = &self.sn_vectors[l];
        let mut v = vec![0.0; o];
        for r in 0..i {
            for c in 0..o {
                v[c] += w.get(r, c) * u[r];
            }
        }
        let sigma = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        normalize(&mut v);
        (u.clone(), v, sigma)
    }

    /// Runs `steps` power-iteration sweeps on every layer, updating the
    /// persisted vectors.
    pub fn power_iteration(&mut self, steps: usize) {
        for l in 0..self.n_layers() {
            let w = self.weight(l);
            let (i, o) = (w.rows(), w.cols());
            for _ in 0..steps {
                let u = &self.sn_vectors[l];
                let mut v = vec![0.0; o];
                for r in 0..i {
                    for c in 0..o {
                        v[c] += w.get(r, c) * u[r];
                    }
                }
                normalize(&mut v);
                let mut u_new = vec![0.0; i];
                for r in 0..i {
                    u_new[r] = (0..o).map(|c| w.get(r, c) * v[c]).sum();
                }
                normalize(&mut u_new);
                if u_new.iter().all(|x| *x == 0.0) {
                    break;
                }
                self.sn_vectors[l] = u_new;
            }
        }
    }

    /// Current estimate of the largest singular value of layer `l`'s raw weight.
    pub fn sigma_estimate(&self, l: usize) -> f64 {
        self.singular_pair(l).2
    }

    /// Weight actually applied by layer `l` (divided by σ when normalized).
    pub fn effective_weight(&self, l: usize) -> Tensor {
        let w = self.weight(l);
        if self.spec.spectral_norm {
            let s = self.sigma_estimate(l);
            if s > 0.0 {
                return w.scale(1.0 / s);
            }
        }
        w
    }

    fn check_input(&self, cols: usize) -> Result<(), ModelError> {
        if cols != self.spec.input_dim {
            return Err(ModelError::Dimension { what: "network input", expected: self.spec.input_dim, got: cols });
        }
        Ok(())
    }

    /// Batched forward pass on `[B, input_dim]` rows.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        self.check_input(x.cols())?;
        let n = self.n_layers();
        let mut h = if x.rank() == 2 { x.clone() } else { x.reshape(&[1, x.numel()])? };
        for l in 0..n {
            let w = self.effective_weight(l);
            let b = self.bias(l);
            h = h.matmul(&w)?.add(&b)?;
            if l + 1 < n {
                let act = self.spec.activation;
                h = h.map(|v| act.apply(v));
            }
        }
        Ok(h)
    }

    /// Parameters as graph leaves, two per layer (weight, bias).
    pub fn param_leaves<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        (0..self.n_layers()).flat_map(|l| [g.leaf(self.weight(l)), g.leaf(self.bias(l))]).collect()
    }

    /// Parameters as graph constants, for passes that must not update them.
    pub fn param_constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        (0..self.n_layers()).flat_map(|l| [g.constant(self.weight(l)), g.constant(self.bias(l))]).collect()
    }

    /// Recorded forward pass using `params` from [`Mlp::param_leaves`].
    pub fn forward_graph<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>, ModelError> {
        let shape = x.shape();
        self.check_input(*shape.last().unwrap_or(&0))?;
        let g = x.graph();
        let n = self.n_layers();
        let mut h = x;
        for l in 0..n {
            let mut w = params[2 * l];
            if self.spec.spectral_norm {
                let (u, v, sigma) = self.singular_pair(l);
                if sigma > 0.0 {
                    let outer = Tensor::matrix(u.len(), v.len(), u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect())?;
                    let s = w.mul(g.constant(outer))?.sum();
                    w = w.mul(s.powf(-1.0))?;
                }
            }
            h = h.matmul(w)?.add(params[2 * l + 1])?;
            if l + 1 < n {
                h = self.spec.activation.apply_var(h);
            }
        }
        Ok(h)
    }

    /// Flattens per-leaf gradients back into the parameter layout.
    pub fn flatten_grads(&self, grads: &[Tensor]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        for t in grads {
            out.extend_from_slice(t.data());
        }
        out
    }
}

impl From<NumericsError> for ModelError {
    fn from(e: NumericsError) -> Self {
        ModelError::Numerics(e)
    }
}
