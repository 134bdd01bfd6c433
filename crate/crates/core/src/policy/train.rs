use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{action_head, geo_loss, geo_loss_var, policy_step, Action, EpisodeContext, PolicyConfig};
use crate::autodiff::{apply_step, batch_gradients, Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geo::{normalize_deg, GeoPoint};
use crate::sim::error_metric;

/// A training sequence: per-step inputs built on a tape, target actions, and
/// the positions the actions start from.
pub trait Episode: Sync {
    fn targets(&self) -> &[Action];
    fn origins(&self) -> &[GeoPoint];
    /// Reward (`1 x 1`) and state (`1 x state_dim`) per step.
    fn inputs<'t>(&self, tape: &'t Tape, store: &ParamStore) -> Result<Vec<(Var<'t>, Var<'t>)>>;

    fn len(&self) -> usize {
        self.targets().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An episode with precomputed rewards and states.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEpisode {
    pub rewards: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub origins: Vec<GeoPoint>,
}

impl Episode for FixedEpisode {
    fn targets(&self) -> &[Action] {
        &self.actions
    }

    fn origins(&self) -> &[GeoPoint] {
        &self.origins
    }

    fn inputs<'t>(&self, tape: &'t Tape, _store: &ParamStore) -> Result<Vec<(Var<'t>, Var<'t>)>> {
        Ok(self
            .rewards
            .iter()
            .zip(&self.states)
            .map(|(r, s)| (tape.scalar(*r), tape.constant(Tensor::row(s.clone()))))
            .collect())
    }
}

/// Mean per-step loss of one episode unrolled from step 1, with the
/// predicted actions.
pub fn episode_loss<'t, E: Episode + ?Sized>(
    tape: &'t Tape,
    store: &ParamStore,
    cfg: &PolicyConfig,
    episode: &E,
    rng: &mut ChaCha8Rng,
) -> Result<(Var<'t>, Vec<Action>)> {
    let inputs = episode.inputs(tape, store)?;
    let targets = episode.targets();
    if inputs.len() != targets.len() || targets.is_empty() {
        return Err(Error::Argument(format!(
            "episode has {} inputs for {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let mut ctx = EpisodeContext::new(cfg);
    let mut total = tape.scalar(0.0);
    let mut preds = Vec::with_capacity(targets.len());
    for (t, ((r, s), truth)) in inputs.into_iter().zip(targets).enumerate() {
        let p = policy_step(tape, store, cfg, t + 1, r, s, &mut ctx, rng)?;
        let (dis, deg) = action_head(tape, store, p, cfg.dropout, rng)?;
        preds.push(Action {
            dis_norm: dis.item().clamp(0.0, 1.0),
            deg: normalize_deg(deg.item()),
        });
        total = total.add(geo_loss_var(dis, deg, *truth, cfg.loss_mode, cfg.angle_weight)?)?;
    }
    Ok((total.scale(1.0 / targets.len() as f64), preds))
}

/// Mean loss and mean Error (km) over every step of `episodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub error_km: f64,
    pub steps: usize,
}

pub fn evaluate_policy<E: Episode>(store: &ParamStore, cfg: &PolicyConfig, episodes: &[E]) -> Result<Evaluation> {
    let parts = episodes
        .par_iter()
        .map(|ep| {
            let tape = Tape::eval();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (_, preds) = episode_loss(&tape, store, cfg, ep, &mut rng)?;
            let mut loss = 0.0;
            let mut error = 0.0;
            for ((pred, truth), from) in preds.iter().zip(ep.targets()).zip(ep.origins()) {
                loss += geo_loss(*pred, *truth, cfg.loss_mode, cfg.angle_weight);
                error += error_metric(*pred, *truth, *from, cfg.r_max_km)?;
            }
            Ok((loss, error, preds.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (loss, error, steps) = parts
        .into_iter()
        .fold((0.0, 0.0, 0), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    if steps == 0 {
        return Err(Error::Config("no steps to evaluate".into()));
    }
    Ok(Evaluation {
        loss: loss / steps as f64,
        error_km: error / steps as f64,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Restore the parameters of the epoch with the lowest validation Error.
    pub keep_best: bool,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            keep_best: true,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMetrics {
    pub epoch: usize,
    pub step: u64,
    pub geo_loss: f64,
    pub val_loss: f64,
    pub val_error_km: f64,
}

/// Trains every unfrozen parameter the episodes touch, one Adam step per
/// minibatch, evaluating on `val` after each epoch. Writes
/// `epoch,step,geo_loss,val_loss,val_error_km` rows to `log` when given.
pub fn train_policy<E: Episode>(
    store: &mut ParamStore,
    cfg: &PolicyConfig,
    train: &[E],
    val: &[E],
    tc: &PolicyTrainConfig,
    log: Option<&Path>,
) -> Result<Vec<PolicyMetrics>> {
    cfg.validate()?;
    if train.is_empty() || train.iter().any(|e| e.is_empty()) {
        return Err(Error::Config("policy training needs non-empty episodes".into()));
    }
    if tc.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut writer = match log {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "epoch,step,geo_loss,val_loss,val_error_km").map_err(|e| Error::io(path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut adam = Adam::new(tc.adam);
    let mut rows = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let (loss, grads) = batch_gradients(store, batch, true, |tape, s, &i, _| {
                let mut drop_rng = ChaCha8Rng::seed_from_u64(tc.seed ^ ((epoch as u64) << 40) ^ ((b as u64) << 20) ^ i as u64);
                Ok(episode_loss(tape, s, cfg, &train[i], &mut drop_rng)?.0)
            })?;
            apply_step(store, &mut adam, &grads, 1.0 / batch.len() as f64)?;
            epoch_loss += loss;
        }
        let eval = if val.is_empty() {
            Evaluation {
                loss: f64::NAN,
                error_km: f64::NAN,
                steps: 0,
            }
        } else {
            evaluate_policy(store, cfg, val)?
        };
        let row = PolicyMetrics {
            epoch,
            step: adam.steps(),
            geo_loss: epoch_loss / train.len() as f64,
            val_loss: eval.loss,
            val_error_km: eval.error_km,
        };
        if let Some((f, path)) = writer.as_mut() {
            writeln!(f, "{},{},{},{},{}", row.epoch, row.step, row.geo_loss, row.val_loss, row.val_error_km)
                .map_err(|e| Error::io(*path, e))?;
        }
        log::debug!("policy epoch {epoch}: loss {:.4} val error {:.4} km", row.geo_loss, row.val_error_km);
        if tc.keep_best && eval.error_km.is_finite() && best.as_ref().is_none_or(|(e, _)| eval.error_km < *e) {
            best = Some((eval.error_km, store.clone()));
        }
        rows.push(row);
    }
    if let Some((_, params)) = best {
        *store = params;
    }
    Ok(rows)
}
