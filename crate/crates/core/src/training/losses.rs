//! Adversarial and likelihood objectives as recorded graph expressions.
//!
//! Log-sigmoid terms use `-log σ(a) = softplus(-a)` and
//! `-log(1 - σ(a)) = softplus(a)`, which stay finite for any logit.

use crate::models::{Discriminator, ModelError};
use crate::numerics::{Tensor, Var};

/// `(loss_d, loss_g)` for the original GAN objective. The generator loss is
/// the non-saturating `-E log σ(d_fake)` unless `minimax` is set, in which
/// case it is `E log(1 - σ(d_fake))`.
pub fn gan_losses<'g>(d_real: Var<'g>, d_fake: Var<'g>, minimax: bool) -> (Var<'g>, Var<'g>) {
    let real_term = d_real.neg().softplus().mean();
    let fake_term = d_fake.softplus().mean();
    let loss_d = real_term.add(fake_term).expect("scalar add");
    let loss_g = if minimax { d_fake.softplus().mean().neg() } else { d_fake.neg().softplus().mean() };
    (loss_d, loss_g)
}

/// WGAN-GP critic and generator losses given per-sample gradient norms at
/// the interpolates.
pub fn wgan_gp_losses<'g>(d_real: Var<'g>, d_fake: Var<'g>, grad_norms: Var<'g>, lambda: f64) -> Result<(Var<'g>, Var<'g>), ModelError> {
    let gap = d_fake.mean().sub(d_real.mean())?;
    let penalty = grad_norms.add_scalar(-1.0).powf(2.0).mean().scale(lambda);
    Ok((gap.add(penalty)?, d_fake.mean().neg()))
}

/// `∇_f d(f)` per row for discriminator inputs `features` `[B, D]`, recorded
/// so that it can itself be differentiated.
pub fn input_gradients<'g>(disc: &Discriminator, params: &[Var<'g>], features: Var<'g>) -> Result<Var<'g>, ModelError> {
    let g = features.graph();
    let logits = disc.logits_graph(params, features)?;
    // Rows are independent, so the gradient of the summed logits holds
    // every per-sample input gradient.
    let grads = g.grad_graph(logits.sum(), &[features])?;
    Ok(grads[0])
}

/// Per-sample input-gradient norms `[B, 1]`.
pub fn gradient_norms<'g>(disc: &Discriminator, params: &[Var<'g>], features: Var<'g>) -> Result<Var<'g>, ModelError> {
    Ok(input_gradients(disc, params, features)?.row_norms(1e-12)?)
}

/// `(γ/2) · mean_b ‖∇ d(f_b)‖²` at real inputs.
pub fn r1_penalty<'g>(disc: &Discriminator, params: &[Var<'g>], real_features: Var<'g>, gamma: f64) -> Result<Var<'g>, ModelError> {
    let grads = input_gradients(disc, params, real_features)?;
    let b = grads.shape()[0].max(1) as f64;
    Ok(grads.mul(grads)?.sum().scale(0.5 * gamma / b))
}

/// Mean over the batch of the diagonal-Gaussian negative log-likelihood
/// `Σ_j ½ log(2π σ²_j) + (x_j - μ_j)² / (2σ²_j)`.
pub fn qmle_loss<'g>(mu: Var<'g>, logvar: Var<'g>, target: Var<'g>) -> Result<Var<'g>, ModelError> {
    let shape = mu.shape();
    let (b, n) = (shape[0] as f64, shape.get(1).copied().unwrap_or(1) as f64);
    let diff = target.sub(mu)?;
    let quad = diff.mul(diff)?.mul(logvar.neg().exp())?;
    let per = logvar.add(quad)?.sum().scale(0.5 / b);
    Ok(per.add_scalar(0.5 * n * (2.0 * std::f64::consts::PI).ln()))
}

/// Plain-tensor version of [`qmle_loss`] with variances instead of
/// log-variances.
pub fn gaussian_nll(mu: &Tensor, var: &Tensor, target: &Tensor) -> f64 {
    let b = mu.rows().max(1) as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let total: f64 = mu
        .data()
        .iter()
        .zip(var.data())
        .zip(target.data())
        .map(|((m, v), x)| 0.5 * (ln2pi + v.ln()) + (x - m).powi(2) / (2.0 * v))
        .sum();
    total / b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Graph;

    #[test]
    fn zero_logits() {
        let g = Graph::new();
        let z = g.constant(Tensor::zeros(&[4, 1]));
        let (d, gl) = gan_losses(z, z, false);
        assert!((d.item().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((gl.item().unwrap() - 2f64.ln()).abs() < 1e-15);
        let (_, mm) = gan_losses(z, z, true);
        assert!((mm.item().unwrap() + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_discriminator_has_zero_loss() {
        let g = Graph::new();
        let r = g.constant(Tensor::full(&[3, 1], 800.0));
        let f = g.constant(Tensor::full(&[3, 1], -800.0));
        let (d, _) = gan_losses(r, f, false);
        assert!(d.item().unwrap() < 1e-300);
    }

    #[test]
    fn unit_norms_have_no_penalty() {
        let g = Graph::new();
        let r = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let f = g.constant(Tensor::vector(vec![0.0, 0.5]));
        let n = g.constant(Tensor::ones(&[2, 1]));
        let (d, gl) = wgan_gp_losses(r, f, n, 10.0).unwrap();
        assert!((d.item().unwrap() + 1.25).abs() < 1e-15);
        assert!((gl.item().unwrap() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn nll_at_the_mode() {
        let g = Graph::new();
        let mu = g.constant(Tensor::from_rows(&[vec![0.3, -1.0]]).unwrap());
        let lv = g.constant(Tensor::zeros(&[1, 2]));
        let v = qmle_loss(mu, lv, mu).unwrap().item().unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        let lv2 = g.constant(Tensor::full(&[1, 2], 4f64.ln()));
        let v2 = qmle_loss(mu, lv2, mu).unwrap().item().unwrap();
        assert!((v2 - v - 2.0 * 2f64.ln()).abs() < 1e-14);
    }
}
