//! Driver-behavior probability, its contrastive pretraining, and the dynamic
//! reward that mixes it with future fares.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{apply_step, batch_gradients, sigmoid, Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 16;
pub const DEFAULT_ALPHA: f64 = 0.65;
const PROB_CLAMP: f64 = 1e-7;

const GRU_NAMES: [&str; 11] = [
    "gru.w_zx", "gru.w_zp", "gru.w_yx", "gru.w_yp", "gru.w_x", "gru.w_p", "gru.b_z", "gru.b_y", "gru.b", "gru.w_out",
    "gru.b_out",
];

/// Adds the gate weights for location embeddings of length `loc_dim` and a
/// `hidden`-wide probability vector, plus the scalar read-out.
pub fn init_gru(store: &mut ParamStore, loc_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<()> {
    let sx = (1.0 / loc_dim as f64).sqrt();
    let sh = (1.0 / hidden as f64).sqrt();
    for name in ["gru.w_zx", "gru.w_zp", "gru.w_yx", "gru.w_yp", "gru.w_x"] {
        store.insert_normal(name, loc_dim, hidden, sx, rng)?;
    }
    store.insert_normal("gru.w_p", hidden, hidden, sh, rng)?;
    for name in ["gru.b_z", "gru.b_y", "gru.b"] {
        store.insert(name, Tensor::zeros(1, hidden))?;
    }
    store.insert_normal("gru.w_out", hidden, 1, sh, rng)?;
    store.insert("gru.b_out", Tensor::zeros(1, 1))?;
    Ok(())
}

pub fn gru_hidden(store: &ParamStore) -> Result<usize> {
    Ok(store.value(store.require("gru.w_p")?).cols())
}

/// Checks the store holds a complete GRU.
pub fn require_gru(store: &ParamStore) -> Result<()> {
    for name in GRU_NAMES {
        store.require(name)?;
    }
    Ok(())
}

/// One gated step. `emb_loc` and `h_prev` are `1 x L`, `p_prev` is `1 x H`.
/// Returns the gated vector `p_t` and its sigmoid read-out in (0, 1).
pub fn gru_step<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    emb_loc: Var<'t>,
    h_prev: Var<'t>,
    p_prev: Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let w = |name: &str| tape.param_named(store, name);
    let z = emb_loc.matmul(w("gru.w_zx")?)?.add(h_prev.matmul(w("gru.w_zp")?)?)?.add(w("gru.b_z")?)?.sigmoid();
    let y = emb_loc.matmul(w("gru.w_yx")?)?.add(h_prev.matmul(w("gru.w_yp")?)?)?.add(w("gru.b_y")?)?.sigmoid();
    let candidate = emb_loc
        .matmul(w("gru.w_x")?)?
        .add(y.mul(p_prev.matmul(w("gru.w_p")?)?)?)?
        .add(w("gru.b")?)?
        .tanh();
    let p = z.mul(p_prev)?.add(z.one_minus().mul(candidate)?)?;
    let prob = p.matmul(w("gru.w_out")?)?.add(w("gru.b_out")?)?.sigmoid();
    Ok((p, prob))
}

/// Per-step probabilities that the trajectory `locations` (`T x L`) belongs
/// to the driver whose anchor embedding is `anchor`.
///
/// The recurrent input is the anchor at every step (only `h_0` is defined),
/// and `p_0` is zero.
pub fn behavior_trace<'t>(tape: &'t Tape, store: &ParamStore, anchor: &[f64], locations: &Tensor) -> Result<Vec<Var<'t>>> {
    if locations.cols() != anchor.len() {
        return Err(Error::shape("behavior", &[1, anchor.len()], locations.shape()));
    }
    let hidden = gru_hidden(store)?;
    let h = tape.constant(Tensor::row(anchor.to_vec()));
    let x = tape.constant(locations.clone());
    let mut p = tape.constant(Tensor::zeros(1, hidden));
    let mut out = Vec::with_capacity(locations.rows());
    for t in 0..locations.rows() {
        let (next, prob) = gru_step(tape, store, x.select_row(t)?, h, p)?;
        p = next;
        out.push(prob);
    }
    Ok(out)
}

/// Evaluation-mode probabilities as plain numbers.
pub fn behavior_probs(store: &ParamStore, anchor: &[f64], locations: &Tensor) -> Result<Vec<f64>> {
    let tape = Tape::eval();
    Ok(behavior_trace(&tape, store, anchor, locations)?.iter().map(|v| v.item()).collect())
}

/// Segment-level score: the mean per-step probability.
pub fn segment_score(store: &ParamStore, anchor: &[f64], locations: &Tensor) -> Result<f64> {
    let probs = behavior_probs(store, anchor, locations)?;
    if probs.is_empty() {
        return Err(Error::Argument("empty trajectory".into()));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BehaviorLoss {
    /// Binary cross-entropy over positives and negatives.
    #[default]
    Bce,
    /// `-sum q log p` only, which ignores negatives.
    Literal,
}

/// Mean per-step loss of one labeled trajectory.
pub fn sequence_loss<'t>(probs: &[Var<'t>], label: f64, loss: BehaviorLoss) -> Result<Var<'t>> {
    let first = probs.first().ok_or_else(|| Error::Argument("empty trajectory".into()))?;
    let tape = first.tape();
    let mut total = tape.scalar(0.0);
    for p in probs {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let mut term = p.ln().scale(-label);
        if loss == BehaviorLoss::Bce && label < 1.0 {
            term = term.add(p.one_minus().ln().scale(-(1.0 - label)))?;
        }
        total = total.add(term)?;
    }
    Ok(total.scale(1.0 / probs.len() as f64))
}

/// An empty-status trajectory of a known driver, as location embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverSegment {
    pub driver: usize,
    pub locations: Tensor,
}

/// One contrastive example: does `segment` belong to `anchor_driver`?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub anchor_driver: usize,
    pub segment: usize,
    pub label: f64,
}

/// Each segment as a positive for its own driver, plus one negative per
/// positive: the same driver's anchor with a segment of a uniformly drawn
/// other driver.
pub fn contrastive_pairs(segments: &[DriverSegment], rng: &mut impl Rng) -> Result<Vec<Pair>> {
    let mut by_driver: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in segments.iter().enumerate() {
        by_driver.entry(s.driver).or_default().push(i);
    }
    if by_driver.len() < 2 {
        return Err(Error::Config("contrastive pretraining needs at least two drivers".into()));
    }
    let drivers: Vec<usize> = by_driver.keys().copied().collect();
    let mut pairs = Vec::with_capacity(2 * segments.len());
    for (i, s) in segments.iter().enumerate() {
        pairs.push(Pair {
            anchor_driver: s.driver,
            segment: i,
            label: 1.0,
        });
        let others: Vec<usize> = drivers.iter().copied().filter(|&d| d != s.driver).collect();
        let other = *others.choose(rng).expect("two drivers");
        let segment = *by_driver[&other].choose(rng).expect("non-empty");
        pairs.push(Pair {
            anchor_driver: s.driver,
            segment,
            label: 0.0,
        });
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: BehaviorLoss,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: BehaviorLoss::Bce,
            seed: 0,
        }
    }
}

/// Trains the GRU parameters in `store` on contrastive pairs. `anchors[d]`
/// is the anchor embedding of driver `d`. Returns the mean loss per epoch.
pub fn pretrain_behavior(
    store: &mut ParamStore,
    segments: &[DriverSegment],
    anchors: &[Vec<f64>],
    config: &PretrainConfig,
) -> Result<Vec<f64>> {
    require_gru(store)?;
    if let Some(s) = segments.iter().find(|s| s.driver >= anchors.len()) {
        return Err(Error::Argument(format!("driver {} has no anchor", s.driver)));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut pairs = contrastive_pairs(segments, &mut rng)?;
        rand::seq::SliceRandom::shuffle(pairs.as_mut_slice(), &mut rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            let (loss, grads) = batch_gradients(store, batch, true, |tape, s, pair, _| {
                let seg = &segments[pair.segment];
                let probs = behavior_trace(tape, s, &anchors[pair.anchor_driver], &seg.locations)?;
                sequence_loss(&probs, pair.label, config.loss)
            })?;
            apply_step(store, &mut adam, &grads, 1.0 / batch.len() as f64)?;
            epoch_loss += loss;
        }
        history.push(epoch_loss / pairs.len() as f64);
    }
    Ok(history)
}

/// Area under the ROC curve of `(score, is_positive)` pairs, ties counted
/// as one half.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64> {
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|s| s.1).count() as f64;
    let n_neg = sorted.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::UndefinedMetric("AUC needs positives and negatives"));
    }
    // Mann-Whitney: sum of positive ranks with ties averaged.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid_rank * sorted[i..j].iter().filter(|s| s.1).count() as f64;
        i = j;
    }
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Returns-to-go: `out[t] = fares[t] + ... + fares[T-1]`.
pub fn fare_suffix_sum(fares: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fares.len()];
    let mut acc = 0.0;
    for (t, f) in fares.iter().enumerate().rev() {
        acc += f;
        out[t] = acc;
    }
    out
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Argument(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// `alpha * p + (1 - alpha) * sigmoid(w_fare * fare)`.
pub fn dynamic_reward(p: f64, fare: f64, w_fare: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * p + (1.0 - alpha) * sigmoid(w_fare * fare))
}

pub const FARE_WEIGHT: &str = "fare.w";

pub fn init_fare_weight(store: &mut ParamStore, value: f64) -> Result<()> {
    store.insert(FARE_WEIGHT, Tensor::scalar(value)).map(|_| ())
}

/// [`dynamic_reward`] on a tape, differentiable in the stored fare weight.
pub fn dynamic_reward_var<'t>(tape: &'t Tape, store: &ParamStore, p: f64, fare: f64, alpha: f64) -> Result<Var<'t>> {
    check_alpha(alpha)?;
    let w = tape.param_named(store, FARE_WEIGHT)?;
    Ok(w.scale(fare).sigmoid().scale(1.0 - alpha).add_scalar(alpha * p))
}
