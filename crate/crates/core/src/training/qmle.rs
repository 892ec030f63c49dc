//! Quasi-maximum-likelihood fit of the diagonal-Gaussian head with early
//! stopping on validation likelihood.

use rand::Rng as _;

use super::losses::{gaussian_nll, qmle_loss};
use super::optim::Adam;
use super::{check_finite, EvalHook, EvalRecord, Method, TrainConfig, TrainError, TrainLog, TrainOutcome};
use crate::models::{QmleHead, SimModel};
use crate::numerics::Graph;
use crate::panel::WindowSet;
use crate::rng::{derive_seed, seeded};

/// Mean NLL of `pairs` under the head.
pub fn nll_of(head: &QmleHead, windows: &WindowSet, pairs: &[usize]) -> Result<f64, TrainError> {
    let (s, x) = windows.batch(pairs);
    let (mu, var) = head.forward(&s)?;
    Ok(gaussian_nll(&mu, &var, &x))
}

/// Minimizes the training NLL with Adam. Validation NLL is checked every
/// `cfg.eval_every` updates; training stops after `cfg.early_stop_patience`
/// checks without improvement and keeps the best parameters. `hook` runs
/// once on the selected parameters.
pub fn train_qmle(head: &mut QmleHead, windows: &WindowSet, cfg: &TrainConfig, hook: &mut EvalHook<'_>) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if cfg.method != Method::Qmle {
        return Err(TrainError::Config("method: train_qmle requires qmle".into()));
    }
    let pool = windows.train_indices();
    if pool.is_empty() {
        return Err(TrainError::NoData);
    }
    let mut val = windows.validation_indices();
    if val.is_empty() {
        val = pool.clone();
    }
    if windows.state_dim() != head.normalizer().state_dim() || windows.value_dim() != head.value_dim() {
        return Err(crate::models::ModelError::Dimension { what: "qMLE state", expected: windows.state_dim(), got: head.normalizer().state_dim() }.into());
    }
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let mut opt = Adam::new(head.mlp().params().len(), cfg.lr_generator, cfg.beta1, cfg.beta2);
    let mut log = TrainLog::default();
    let mut best_nll = nll_of(head, windows, &val)?;
    let mut best = head.clone();
    let mut stale = 0;
    log.records.push(EvalRecord { update: 0, loss_d: None, loss_g: None, val_nll: Some(best_nll), scores: None, error: None });
    for update in 1..=cfg.max_updates {
        let pairs: Vec<usize> = (0..cfg.batch_size).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let (s, x) = windows.batch(&pairs);
        let g = Graph::new();
        let p = head.mlp().param_leaves(&g);
        let (mu, logvar) = head.forward_graph(&p, g.constant(s))?;
        let loss = qmle_loss(mu, logvar, g.constant(x))?;
        let value = loss.item()?;
        check_finite(update, "qMLE loss", value, || SimModel::Qmle(head.clone()))?;
        let grads = g.grad(loss, &p)?;
        let flat = head.mlp().flatten_grads(&grads);
        opt.step(head.mlp_mut().params_mut(), &flat);
        if head.mlp().spec().spectral_norm {
            head.mlp_mut().power_iteration(1);
        }
        log.loss_g.push(value);
        log.updates = update;
        if update % cfg.eval_every == 0 || update == cfg.max_updates {
            let v = nll_of(head, windows, &val)?;
            log.records.push(EvalRecord { update, loss_d: None, loss_g: Some(value), val_nll: Some(v), scores: None, error: None });
            if v < best_nll {
                best_nll = v;
                best = head.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    let snapshot = SimModel::Qmle(best.clone());
    let best_update = log.records.iter().filter(|r| r.val_nll == Some(best_nll)).map(|r| r.update).next().unwrap_or(0);
    let idx = log.records.iter().position(|r| r.update == best_update).expect("best record exists");
    match hook(&snapshot, best_update) {
        Ok(s) => log.records[idx].scores = Some(s),
        Err(e) => log.records[idx].error = Some(e),
    }
    log.best = Some(idx);
    log.per_metric_best = vec![Some(idx); 7];
    Ok(TrainOutcome { log, last: SimModel::Qmle(head.clone()), best: snapshot, discriminator: None })
}
