//! Calibration of the simulators: GAN, WGAN-GP and quasi-maximum
//! likelihood, with periodic evaluation and checkpoint selection.

pub mod adversarial;
pub mod losses;
pub mod optim;
pub mod qmle;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use adversarial::{train_gan, train_tcn};
pub use losses::{gan_losses, gaussian_nll, gradient_norms, input_gradients, qmle_loss, r1_penalty, wgan_gp_losses};
pub use optim::Adam;
pub use qmle::train_qmle;

use crate::metrics::ScoreReport;
use crate::models::{Discriminator, ModelError, SimModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gan,
    WganGp,
    Qmle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Generator updates (parameter updates for qMLE).
    pub max_updates: usize,
    /// Discriminator steps per generator step; 5 for WGAN-GP and 1 for GAN
    /// when unset.
    pub critic_updates: Option<usize>,
    pub gp_lambda: f64,
    /// R1 weight for the GAN method; 0 disables it.
    pub r1_gamma: f64,
    pub eval_every: usize,
    pub early_stop_patience: usize,
    /// Use the strict minimax generator loss instead of the non-saturating one.
    pub minimax: bool,
    /// Decay of an exponential moving average of the generator weights;
    /// evaluated snapshots use the average when set.
    pub ema_decay: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Gan,
            lr_generator: 1e-4,
            lr_discriminator: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            batch_size: 128,
            max_updates: 20_000,
            critic_updates: None,
            gp_lambda: 10.0,
            r1_gamma: 10.0,
            eval_every: 100,
            early_stop_patience: 10,
            minimax: false,
            ema_decay: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn critic_steps(&self) -> usize {
        self.critic_updates.unwrap_or(match self.method {
            Method::WganGp => 5,
            _ => 1,
        })
    }

    /// Whether the discriminator is trained with a gradient penalty.
    pub fn penalized(&self) -> bool {
        match self.method {
            Method::Gan => self.r1_gamma > 0.0,
            Method::WganGp => self.gp_lambda > 0.0,
            Method::Qmle => false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &str, msg: &str| Err(TrainError::Config(format!("{field}: {msg}")));
        if !(self.lr_generator > 0.0) {
            return bad("lr_generator", "must be positive");
        }
        if !(self.lr_discriminator > 0.0) {
            return bad("lr_discriminator", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1/beta2", "must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1");
        }
        if self.critic_steps() == 0 {
            return bad("critic_updates", "must be at least 1");
        }
        if self.gp_lambda < 0.0 || self.r1_gamma < 0.0 {
            return bad("gp_lambda/r1_gamma", "must be non-negative");
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return bad("ema_decay", "must lie in [0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite {what} at update {update}")]
    NonFinite { update: usize, what: String, snapshot: Box<SimModel> },
    #[error("no training pairs")]
    NoData,
}

impl From<crate::numerics::NumericsError> for TrainError {
    fn from(e: crate::numerics::NumericsError) -> Self {
        TrainError::Model(ModelError::Numerics(e))
    }
}

/// Evaluation callback: scores a frozen snapshot after `update` updates.
pub type EvalHook<'a> = dyn FnMut(&SimModel, usize) -> Result<ScoreReport, String> + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub update: usize,
    pub loss_d: Option<f64>,
    pub loss_g: Option<f64>,
    pub val_nll: Option<f64>,
    pub scores: Option<ScoreReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EvalRecord>,
    /// Discriminator loss after each generator update (last critic step).
    pub loss_d: Vec<f64>,
    /// Generator loss (NLL for qMLE) per update.
    pub loss_g: Vec<f64>,
    /// Index into `records` of the selected checkpoint.
    pub best: Option<usize>,
    /// Index of the best record for each of the seven scores.
    pub per_metric_best: Vec<Option<usize>>,
    pub updates: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    /// One JSON object per evaluation record.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Fills `best` and `per_metric_best` from the scored records.
    pub fn select_best(&mut self) {
        let (best, per) = select_best(&self.records);
        self.best = best;
        self.per_metric_best = per;
    }
}

/// Index minimizing the sum of min-max-normalized scores, and the argmin
/// of each score separately. Unscored records are skipped; ties go to the
/// earliest record.
pub fn select_best(records: &[EvalRecord]) -> (Option<usize>, Vec<Option<usize>>) {
    let scored: Vec<(usize, [f64; 7])> = records.iter().enumerate().filter_map(|(i, r)| r.scores.as_ref().map(|s| (i, s.values()))).collect();
    let mut per = vec![None; 7];
    if scored.is_empty() {
        return (None, per);
    }
    let mut lo = [f64::INFINITY; 7];
    let mut hi = [f64::NEG_INFINITY; 7];
    for (_, v) in &scored {
        for j in 0..7 {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
    }
    for (j, slot) in per.iter_mut().enumerate() {
        *slot = scored.iter().fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, b)) if b <= v[j] => acc,
            _ => Some((*i, v[j])),
        }).map(|(i, _)| i);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in &scored {
        let total: f64 = (0..7).map(|j| if hi[j] > lo[j] { (v[j] - lo[j]) / (hi[j] - lo[j]) } else { 0.0 }).sum();
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((*i, total));
        }
    }
    (best.map(|(i, _)| i), per)
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: TrainLog,
    /// Parameters after the last update.
    pub last: SimModel,
    /// Parameters of the selected record (the last ones when nothing was scored).
    pub best: SimModel,
    pub discriminator: Option<Discriminator>,
}

pub(crate) fn check_finite(update: usize, what: &str, v: f64, snapshot: impl FnOnce() -> SimModel) -> Result<(), TrainError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite { update, what: what.to_string(), snapshot: Box::new(snapshot()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(update: usize, s: Option<[f64; 7]>) -> EvalRecord {
        EvalRecord { update, loss_d: None, loss_g: None, val_nll: None, scores: s.map(ScoreReport::from_values), error: None }
    }

    #[test]
    fn best_uses_normalized_sum() {
        let records = vec![
            rec(0, Some([1.0, 10.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
            rec(100, None),
            rec(200, Some([0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
            rec(300, Some([0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0])),
        ];
        let (best, per) = select_best(&records);
        // normalized sums: 0 → 2.0, 200 → 0.9, 300 → 1.5
        assert_eq!(best, Some(2));
        assert_eq!(per[0], Some(2));
        assert_eq!(per[1], Some(3));
        assert_eq!(per[6], Some(0));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(c.critic_steps(), 1);
        let w = TrainConfig { method: Method::WganGp, ..c.clone() };
        assert_eq!(w.critic_steps(), 5);
        assert!(c.validate().is_ok());
        assert!(TrainConfig { eval_every: 0, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { lr_generator: 0.0, ..c.clone() }.validate().is_err());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), c);
        assert_eq!(serde_json::from_str::<TrainConfig>("{}").unwrap(), c);
    }
}
