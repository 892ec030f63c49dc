//! Alternating discriminator/generator updates for the conditional
//! generator and for the unconditional TCN.
//!
//! The conditional generator is fed real historical states and judged on
//! `(state, next value)` pairs. The TCN generates `L + 2` consecutive
//! outputs per sample, which are split into a state of the first `L + 1`
//! and the value that follows, so both models face the same discriminator.

use rand::Rng as _;

use super::{check_finite, EvalHook, EvalRecord, Method, TrainConfig, TrainError, TrainLog, TrainOutcome};
use super::losses::{gan_losses, gradient_norms, r1_penalty, wgan_gp_losses};
use super::optim::Adam;
use crate::models::{Discriminator, Generator, ModelError, SimModel, TcnModel};
use crate::numerics::{concat, Graph, Tensor, Var};
use crate::panel::WindowSet;
use crate::rng::{derive_seed, normal_tensor, seeded, Rng};

/// The trainable side of the game.
trait GenSide {
    fn leaves<'g>(&self, g: &'g Graph) -> Vec<Var<'g>>;
    fn constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>>;
    /// Generated `(state, value)` rows, one per row of `real_states`.
    fn fake<'g>(&self, g: &'g Graph, params: &[Var<'g>], real_states: &Tensor, rng: &mut Rng) -> Result<(Var<'g>, Var<'g>), ModelError>;
    fn flatten(&self, grads: &[Tensor]) -> Vec<f64>;
    fn params_mut(&mut self) -> &mut [f64];
    fn after_update(&mut self) {}
    fn snapshot(&self) -> SimModel;
}

impl GenSide for Generator {
    fn leaves<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.mlp().param_leaves(g)
    }

    fn constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.mlp().param_constants(g)
    }

    fn fake<'g>(&self, g: &'g Graph, params: &[Var<'g>], real_states: &Tensor, rng: &mut Rng) -> Result<(Var<'g>, Var<'g>), ModelError> {
        let z = g.constant(normal_tensor(rng, &[real_states.rows(), self.noise_dim()]));
        let s = g.constant(real_states.clone());
        Ok((s, self.forward_graph(params, z, s)?))
    }

    fn flatten(&self, grads: &[Tensor]) -> Vec<f64> {
        self.mlp().flatten_grads(grads)
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.mlp_mut().params_mut()
    }

    fn after_update(&mut self) {
        if self.mlp().spec().spectral_norm {
            self.mlp_mut().power_iteration(1);
        }
    }

    fn snapshot(&self) -> SimModel {
        SimModel::Generator(self.clone())
    }
}

struct TcnSide<'m> {
    model: &'m mut TcnModel,
    lags: usize,
}

impl GenSide for TcnSide<'_> {
    fn leaves<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.model.param_leaves(g)
    }

    fn constants<'g>(&self, g: &'g Graph) -> Vec<Var<'g>> {
        self.model.param_constants(g)
    }

    /// The fake pairs are the `b` consecutive windows of one generated
    /// sequence, which costs `rf + lags + b` noise rows instead of
    /// `b · (rf + lags + 1)`.
    fn fake<'g>(&self, g: &'g Graph, params: &[Var<'g>], real_states: &Tensor, rng: &mut Rng) -> Result<(Var<'g>, Var<'g>), ModelError> {
        let b = real_states.rows();
        let len = self.model.receptive_field() + self.lags + b;
        let noise = g.constant(normal_tensor(rng, &[len, self.model.spec().noise_dim]));
        let out = self.model.forward_graph(params, noise, 1)?;
        let lagged = |k: usize| out.slice(0, self.lags - k, self.lags - k + b);
        let newest_first = (0..=self.lags).map(lagged).collect::<Result<Vec<_>, _>>()?;
        Ok((concat(&newest_first, 1)?, out.slice(0, self.lags + 1, self.lags + 1 + b)?))
    }

    fn flatten(&self, grads: &[Tensor]) -> Vec<f64> {
        self.model.flatten_grads(grads)
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.model.params_mut()
    }

    fn snapshot(&self) -> SimModel {
        SimModel::Tcn(self.model.clone())
    }
}

fn draw_batch(rng: &mut Rng, pool: &[usize], size: usize) -> Vec<usize> {
    (0..size).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn critic_step<G: GenSide>(
    gen: &G,
    disc: &mut Discriminator,
    opt: &mut Adam,
    windows: &WindowSet,
    pairs: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
    update: usize,
) -> Result<f64, TrainError> {
    let (states, targets) = windows.batch(pairs);
    let fake_features = {
        let g = Graph::new();
        let p = gen.constants(&g);
        let (s, x) = gen.fake(&g, &p, &states, rng)?;
        disc.features_graph(s, x)?.value()
    };
    let real_features = disc.features(&states, &targets)?;
    let g = Graph::new();
    let dp = disc.mlp().param_leaves(&g);
    let real = g.leaf(real_features.clone());
    let d_real = disc.logits_graph(&dp, real)?;
    let d_fake = disc.logits_graph(&dp, g.constant(fake_features.clone()))?;
    let loss = match cfg.method {
        Method::Gan => {
            let (loss_d, _) = gan_losses(d_real, d_fake, cfg.minimax);
            if cfg.r1_gamma > 0.0 {
                loss_d.add(r1_penalty(disc, &dp, real, cfg.r1_gamma)?)?
            } else {
                loss_d
            }
        }
        Method::WganGp => {
            let b = pairs.len();
            let norms = if cfg.gp_lambda > 0.0 {
                let eps: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
                let d = real_features.cols();
                let mut hat = real_features.clone();
                for i in 0..b {
                    for j in 0..d {
                        hat.set(i, j, eps[i] * real_features.get(i, j) + (1.0 - eps[i]) * fake_features.get(i, j));
                    }
                }
                gradient_norms(disc, &dp, g.leaf(hat))?
            } else {
                g.constant(Tensor::ones(&[b, 1]))
            };
            wgan_gp_losses(d_real, d_fake, norms, cfg.gp_lambda)?.0
        }
        Method::Qmle => return Err(TrainError::Config("method: qmle has no discriminator".into())),
    };
    let value = loss.item()?;
    check_finite(update, "discriminator loss", value, || gen.snapshot())?;
    let grads = g.grad(loss, &dp)?;
    let flat = disc.mlp().flatten_grads(&grads);
    opt.step(disc.mlp_mut().params_mut(), &flat);
    if disc.mlp().spec().spectral_norm {
        disc.mlp_mut().power_iteration(1);
    }
    Ok(value)
}

fn generator_step<G: GenSide>(
    gen: &mut G,
    disc: &Discriminator,
    opt: &mut Adam,
    windows: &WindowSet,
    pairs: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
    update: usize,
) -> Result<f64, TrainError> {
    let (states, _) = windows.batch(pairs);
    let g = Graph::new();
    let gp = gen.leaves(&g);
    let (s, x) = gen.fake(&g, &gp, &states, rng)?;
    let d_fake = disc.logits_graph(&disc.mlp().param_constants(&g), disc.features_graph(s, x)?)?;
    let loss = match (cfg.method, cfg.minimax) {
        (Method::WganGp, _) => d_fake.mean().neg(),
        (_, false) => d_fake.neg().softplus().mean(),
        (_, true) => d_fake.softplus().mean().neg(),
    };
    let value = loss.item()?;
    check_finite(update, "generator loss", value, || gen.snapshot())?;
    let grads = g.grad(loss, &gp)?;
    let flat = gen.flatten(&grads);
    if let Some(bad) = flat.iter().position(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite { update, what: format!("generator gradient entry {bad}"), snapshot: Box::new(gen.snapshot()) });
    }
    opt.step(gen.params_mut(), &flat);
    gen.after_update();
    Ok(value)
}

fn run<G: GenSide>(gen: &mut G, disc: &mut Discriminator, windows: &WindowSet, cfg: &TrainConfig, hook: &mut EvalHook<'_>) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if cfg.method == Method::Qmle {
        return Err(TrainError::Config("method: use train_qmle for qmle".into()));
    }
    let pool = windows.train_indices();
    if pool.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut batch_rng = seeded(derive_seed(cfg.seed, 1));
    let mut noise_rng = seeded(derive_seed(cfg.seed, 2));
    let mut opt_g = Adam::new(gen.params_mut().len(), cfg.lr_generator, cfg.beta1, cfg.beta2);
    let mut opt_d = Adam::new(disc.mlp().params().len(), cfg.lr_discriminator, cfg.beta1, cfg.beta2);
    let mut log = TrainLog::default();
    let mut snapshots = Vec::new();
    let mut ema: Option<Vec<f64>> = cfg.ema_decay.map(|_| gen.params_mut().to_vec());
    let mut evaluate = |log: &mut TrainLog, snapshots: &mut Vec<SimModel>, gen: &mut G, ema: &Option<Vec<f64>>, update: usize| {
        let snap = match ema {
            Some(avg) => with_params(gen, avg),
            None => gen.snapshot(),
        };
        let (scores, error) = match hook(&snap, update) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e)),
        };
        log.records.push(EvalRecord { update, loss_d: log.loss_d.last().copied(), loss_g: log.loss_g.last().copied(), val_nll: None, scores, error });
        snapshots.push(snap);
    };
    evaluate(&mut log, &mut snapshots, gen, &ema, 0);
    for update in 1..=cfg.max_updates {
        let mut loss_d = 0.0;
        for _ in 0..cfg.critic_steps() {
            let pairs = draw_batch(&mut batch_rng, &pool, cfg.batch_size);
            loss_d = critic_step(gen, disc, &mut opt_d, windows, &pairs, cfg, &mut noise_rng, update)?;
        }
        let pairs = draw_batch(&mut batch_rng, &pool, cfg.batch_size);
        let loss_g = generator_step(gen, disc, &mut opt_g, windows, &pairs, cfg, &mut noise_rng, update)?;
        if let (Some(avg), Some(d)) = (ema.as_mut(), cfg.ema_decay) {
            for (a, p) in avg.iter_mut().zip(gen.params_mut().iter()) {
                *a = d * *a + (1.0 - d) * p;
            }
        }
        log.loss_d.push(loss_d);
        log.loss_g.push(loss_g);
        log.updates = update;
        if update % cfg.eval_every == 0 || update == cfg.max_updates {
            evaluate(&mut log, &mut snapshots, gen, &ema, update);
        }
    }
    log.select_best();
    let last = match &ema {
        Some(avg) => with_params(gen, avg),
        None => gen.snapshot(),
    };
    let best = log.best.map(|i| snapshots[i].clone()).unwrap_or_else(|| last.clone());
    Ok(TrainOutcome { log, last, best, discriminator: Some(disc.clone()) })
}

/// Snapshot of `gen` with `params` swapped in.
fn with_params<G: GenSide>(gen: &mut G, params: &[f64]) -> SimModel {
    let current = gen.params_mut().to_vec();
    gen.params_mut().copy_from_slice(params);
    let snap = gen.snapshot();
    gen.params_mut().copy_from_slice(&current);
    snap
}

/// GAN or WGAN-GP calibration of a conditional generator on real
/// (state, next value) pairs. `hook` is called on a frozen snapshot at
/// update 0, every `cfg.eval_every` generator updates and at the end.
pub fn train_gan(
    gen: &mut Generator,
    disc: &mut Discriminator,
    windows: &WindowSet,
    cfg: &TrainConfig,
    hook: &mut EvalHook<'_>,
) -> Result<TrainOutcome, TrainError> {
    check_dims(disc, windows)?;
    if gen.state_dim() != windows.state_dim() || gen.value_dim() != windows.value_dim() {
        return Err(ModelError::Dimension { what: "generator state", expected: windows.state_dim(), got: gen.state_dim() }.into());
    }
    run(gen, disc, windows, cfg, hook)
}

/// Adversarial calibration of the unconditional TCN; the discriminator's
/// lag count is taken from `windows`.
pub fn train_tcn(
    model: &mut TcnModel,
    disc: &mut Discriminator,
    windows: &WindowSet,
    cfg: &TrainConfig,
    hook: &mut EvalHook<'_>,
) -> Result<TrainOutcome, TrainError> {
    check_dims(disc, windows)?;
    if model.spec().output_dim != windows.value_dim() {
        return Err(ModelError::Dimension { what: "TCN output", expected: windows.value_dim(), got: model.spec().output_dim }.into());
    }
    let lags = windows.lags();
    run(&mut TcnSide { model, lags }, disc, windows, cfg, hook)
}

fn check_dims(disc: &Discriminator, windows: &WindowSet) -> Result<(), TrainError> {
    let need = windows.state_dim() + windows.value_dim();
    if disc.input_dim() != need {
        return Err(ModelError::Dimension { what: "discriminator input", expected: need, got: disc.input_dim() }.into());
    }
    Ok(())
}
