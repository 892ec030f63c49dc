//! Central finite-difference verification of the autodiff engine.
//!
//! [`run_suite`] exercises every graph operation, the adversarial and
//! likelihood losses, and the input-gradient penalties (which need second
//! derivatives) on random instances, reporting the worst relative error
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1)` per check.

use rand::Rng as _;

use crate::models::{plain_normalizer, Activation, Discriminator, NetConfig};
use crate::numerics::{concat, Graph, Tensor, Var};
use crate::rng::{normal_tensor, seeded, Rng};
use crate::training::{gan_losses, gradient_norms, qmle_loss, r1_penalty, wgan_gp_losses};

pub const FIRST_ORDER_TOL: f64 = 1e-6;
pub const SECOND_ORDER_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    /// 1 for plain gradients, 2 when the checked quantity is itself built
    /// from a gradient.
    pub order: u8,
    pub instances: u64,
    pub worst: f64,
}

impl GradCheck {
    pub fn tolerance(&self) -> f64 {
        if self.order == 1 {
            FIRST_ORDER_TOL
        } else {
            SECOND_ORDER_TOL
        }
    }

    pub fn passed(&self) -> bool {
        self.worst < self.tolerance()
    }
}

struct Suite {
    instances: u64,
    results: Vec<GradCheck>,
}

impl Suite {
    fn run(&mut self, name: impl Into<String>, order: u8, case: impl Fn(&mut Rng) -> f64) {
        let mut worst: f64 = 0.0;
        for s in 0..self.instances {
            worst = worst.max(case(&mut seeded(1000 + s)));
        }
        self.results.push(GradCheck { name: name.into(), order, instances: self.instances, worst });
    }
}

/// Runs every check on `instances` random instances each.
pub fn run_suite(instances: u64) -> Vec<GradCheck> {
    let mut s = Suite { instances, results: Vec::new() };
    elementwise_unary_ops(&mut s);
    binary_ops_with_broadcasting(&mut s);
    matmul_and_transpose(&mut s);
    reductions_and_shape_ops(&mut s);
    gan_and_wgan_losses(&mut s);
    qmle_loss_gradients(&mut s);
    r1_penalty_double_backprop(&mut s);
    gradient_penalty_double_backprop(&mut s);
    penalty_gradient_with_respect_to_inputs(&mut s);
    s.results
}

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compares [`Graph::grad`] of the scalar `f(inputs)` with central differences and
/// returns the worst relative error.
pub fn max_rel_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let g = Graph::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&g, &leaves);
    let grads = g.grad(out, &leaves).unwrap();
    let eval = |xs: &[Tensor]| {
        let g = Graph::new();
        let vs: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vs).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for k in 0..t.numel() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[k] = t.data()[k] + H;
            let up = eval(&xs);
            xs[i].data_mut()[k] = t.data()[k] - H;
            let down = eval(&xs);
            worst = worst.max(rel_err(grads[i].data()[k], (up - down) / (2.0 * H)));
        }
    }
    worst
}

fn dims(rng: &mut Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

fn away_from_zero(t: Tensor) -> Tensor {
    t.map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v })
}


fn weighted<'g>(g: &'g Graph, y: Var<'g>, seed: u64) -> Var<'g> {
    let w = normal_tensor(&mut seeded(seed), &y.shape());
    y.mul(g.constant(w)).unwrap().sum()
}

fn unary(s: &mut Suite, name: &str, positive: bool, op: for<'g> fn(Var<'g>) -> Var<'g>) {
    s.run(name, 1, |rng| {
        let (r, c) = dims(rng);
        let mut x = away_from_zero(normal_tensor(rng, &[r, c]));
        if positive {
            x = x.map(|v| v.abs() + 0.2);
        }
        max_rel_error(&[x], |g, v| weighted(g, op(v[0]), 7))
    });
}

fn elementwise_unary_ops(s: &mut Suite) {
    unary(s, "neg", false, |x| x.neg());
    unary(s, "scale", false, |x| x.scale(-1.7));
    unary(s, "add_scalar", false, |x| x.add_scalar(0.3));
    unary(s, "exp", false, |x| x.exp());
    unary(s, "log", true, |x| x.log());
    unary(s, "tanh", false, |x| x.tanh());
    unary(s, "sigmoid", false, |x| x.sigmoid());
    unary(s, "softplus", false, |x| x.softplus());
    unary(s, "leaky_relu", false, |x| x.leaky_relu());
    unary(s, "powf", true, |x| x.powf(1.5));
    unary(s, "sqrt", true, |x| x.sqrt());
}

fn binary_ops_with_broadcasting(s: &mut Suite) {
    for (name, op) in [
        ("add", (|a: Var<'_>, b| a.add(b).unwrap()) as for<'g> fn(Var<'g>, Var<'g>) -> Var<'g>),
        ("sub", |a, b| a.sub(b).unwrap()),
        ("mul", |a, b| a.mul(b).unwrap()),
    ] {
        s.run(name, 1, |rng| {
            let (r, c) = dims(rng);
            let a = normal_tensor(rng, &[r, c]);
            let b = match rng.random_range(0..3) {
                0 => normal_tensor(rng, &[r, c]),
                1 => normal_tensor(rng, &[c]),
                _ => normal_tensor(rng, &[r, 1]),
            };
            max_rel_error(&[a, b], |g, v| weighted(g, op(v[0], v[1]), 3))
        });
    }
}

fn matmul_and_transpose(s: &mut Suite) {
    s.run("matmul", 1, |rng| {
        let (r, c) = dims(rng);
        let k = rng.random_range(1..5);
        let a = normal_tensor(rng, &[r, k]);
        let b = normal_tensor(rng, &[k, c]);
        max_rel_error(&[a, b], |g, v| weighted(g, v[0].matmul(v[1]).unwrap(), 5))
    });
    s.run("transpose", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], |g, v| weighted(g, v[0].t().unwrap(), 5))
    });
}

fn reductions_and_shape_ops(s: &mut Suite) {
    s.run("sum", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], |_, v| v[0].exp().sum())
    });
    s.run("mean", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], |_, v| v[0].tanh().mean())
    });
    s.run("sum_axis", 1, |rng| {
        let (r, c) = dims(rng);
        let axis = rng.random_range(0..2);
        max_rel_error(&[normal_tensor(rng, &[r, c])], move |g, v| weighted(g, v[0].sum_axis(axis).unwrap(), 2))
    });
    s.run("broadcast", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[1, c])], move |g, v| weighted(g, v[0].broadcast(&[r, c]).unwrap(), 2))
    });
    s.run("sum_to", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], move |g, v| weighted(g, v[0].sum_to(&[1, c]).unwrap(), 2))
    });
    s.run("reshape", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], move |g, v| weighted(g, v[0].reshape(&[c, r]).unwrap(), 2))
    });
    s.run("slice", 1, |rng| {
        let (r, c) = dims(rng);
        let start = rng.random_range(0..r);
        let end = rng.random_range(start + 1..=r);
        max_rel_error(&[normal_tensor(rng, &[r, c])], move |g, v| weighted(g, v[0].slice(0, start, end).unwrap(), 2))
    });
    s.run("pad", 1, |rng| {
        let (r, c) = dims(rng);
        let start = rng.random_range(0..3);
        max_rel_error(&[normal_tensor(rng, &[r, c])], move |g, v| weighted(g, v[0].pad(1, start, c + start + 2).unwrap(), 2))
    });
    s.run("concat", 1, |rng| {
        let (r, c) = dims(rng);
        let c2 = rng.random_range(1..4);
        let a = normal_tensor(rng, &[r, c]);
        let b = normal_tensor(rng, &[r, c2]);
        max_rel_error(&[a, b], |g, v| weighted(g, concat(&[v[0], v[1]], 1).unwrap(), 2))
    });
    s.run("norm2", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[away_from_zero(normal_tensor(rng, &[r, c]))], |_, v| v[0].norm2().unwrap())
    });
    s.run("row_norms", 1, |rng| {
        let (r, c) = dims(rng);
        max_rel_error(&[normal_tensor(rng, &[r, c])], |g, v| weighted(g, v[0].row_norms(1e-12).unwrap(), 2))
    });
}

fn gan_and_wgan_losses(s: &mut Suite) {
    for minimax in [false, true] {
        s.run(format!("gan discriminator, minimax {minimax}"), 1, |rng| {
            let b = rng.random_range(1..8);
            let real = normal_tensor(rng, &[b, 1]).scale(3.0);
            let fake = normal_tensor(rng, &[b, 1]).scale(3.0);
            max_rel_error(&[real, fake], move |_, v| gan_losses(v[0], v[1], minimax).0)
        });
        s.run(format!("gan generator, minimax {minimax}"), 1, |rng| {
            let b = rng.random_range(1..8);
            let real = normal_tensor(rng, &[b, 1]);
            let fake = normal_tensor(rng, &[b, 1]).scale(3.0);
            max_rel_error(&[real, fake], move |_, v| gan_losses(v[0], v[1], minimax).1)
        });
    }
    s.run("wgan-gp", 1, |rng| {
        let b = rng.random_range(1..8);
        let real = normal_tensor(rng, &[b, 1]);
        let fake = normal_tensor(rng, &[b, 1]);
        let norms = normal_tensor(rng, &[b, 1]).map(|v| v.abs() + 0.1);
        max_rel_error(&[real, fake, norms], |_, v| {
            let (d, gl) = wgan_gp_losses(v[0], v[1], v[2], 10.0).unwrap();
            d.add(gl.scale(0.5)).unwrap()
        })
    });
}

fn qmle_loss_gradients(s: &mut Suite) {
    s.run("qmle", 1, |rng| {
        let (b, n) = dims(rng);
        let mu = normal_tensor(rng, &[b, n]);
        let logvar = normal_tensor(rng, &[b, n]).scale(0.5);
        let target = normal_tensor(rng, &[b, n]);
        max_rel_error(&[mu, logvar, target], |_, v| qmle_loss(v[0], v[1], v[2]).unwrap())
    });
}

fn small_disc(rng: &mut Rng, value_dim: usize, activation: Activation) -> Discriminator {
    let net = NetConfig { hidden_widths: vec![6, 5], activation, spectral_norm: false };
    Discriminator::new(&net, plain_normalizer(value_dim, 1), rng).unwrap()
}

/// Penalty value as a function of the discriminator parameters, with the
/// input gradient computed analytically inside.
fn penalty_value(disc: &Discriminator, features: &Tensor, r1: bool) -> f64 {
    let g = Graph::new();
    let p = disc.mlp().param_constants(&g);
    let x = g.leaf(features.clone());
    if r1 {
        r1_penalty(disc, &p, x, 10.0).unwrap().item().unwrap()
    } else {
        gradient_norms(disc, &p, x).unwrap().add_scalar(-1.0).powf(2.0).mean().scale(10.0).item().unwrap()
    }
}

fn second_order(r1: bool, activation: Activation) -> impl Fn(&mut Rng) -> f64 {
    move |rng| {
        let n = rng.random_range(1..3);
        let mut disc = small_disc(rng, n, activation);
        let b = rng.random_range(1..5);
        let features = normal_tensor(rng, &[b, disc.input_dim()]);
        let g = Graph::new();
        let p = disc.mlp().param_leaves(&g);
        let x = g.leaf(features.clone());
        let pen = if r1 {
            r1_penalty(&disc, &p, x, 10.0).unwrap()
        } else {
            gradient_norms(&disc, &p, x).unwrap().add_scalar(-1.0).powf(2.0).mean().scale(10.0)
        };
        let grads = disc.mlp().flatten_grads(&g.grad(pen, &p).unwrap());
        let base = disc.mlp().params().to_vec();
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            disc.mlp_mut().params_mut()[k] = base[k] + H;
            let up = penalty_value(&disc, &features, r1);
            disc.mlp_mut().params_mut()[k] = base[k] - H;
            let down = penalty_value(&disc, &features, r1);
            disc.mlp_mut().params_mut()[k] = base[k];
            worst = worst.max(rel_err(grads[k], (up - down) / (2.0 * H)));
        }
        worst
    }
}

fn r1_penalty_double_backprop(s: &mut Suite) {
    s.run("r1 softplus", 2, second_order(true, Activation::Softplus));
    s.run("r1 tanh", 2, second_order(true, Activation::Tanh));
}

fn gradient_penalty_double_backprop(s: &mut Suite) {
    s.run("gp softplus", 2, second_order(false, Activation::Softplus));
    s.run("gp tanh", 2, second_order(false, Activation::Tanh));
}

fn penalty_gradient_with_respect_to_inputs(s: &mut Suite) {
    s.run("r1 input", 2, |rng| {
        let disc = small_disc(rng, 1, Activation::Softplus);
        let features = normal_tensor(rng, &[3, disc.input_dim()]);
        max_rel_error(&[features], |g, v| {
            let p = disc.mlp().param_constants(g);
            r1_penalty(&disc, &p, v[0], 10.0).unwrap()
        })
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_agrees() {
        let err = max_rel_error(&[Tensor::vector(vec![3.0, -0.5])], |_, v| v[0].mul(v[0]).unwrap().sum());
        assert!(err < 1e-9);
    }

    #[test]
    fn check_names_are_unique() {
        let results = run_suite(1);
        let mut names: Vec<&str> = results.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), results.len());
    }
}
