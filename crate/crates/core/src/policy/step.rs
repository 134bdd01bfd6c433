use rand::{Rng, SeedableRng};

use super::attention::{decoder_layer, LayerCache};
use super::{Action, ContextMode, PolicyConfig};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geo::normalize_deg;

const BLOCKS: [&str; 2] = ["reward", "state"];

/// Adds input projections, both decoder stacks and the action head.
pub fn init_policy(store: &mut ParamStore, cfg: &PolicyConfig, rng: &mut impl Rng) -> Result<()> {
    cfg.validate()?;
    let d = cfg.d_model;
    let s = (1.0 / d as f64).sqrt();
    store.insert_normal("policy.in_p.w", d, d, s, rng)?;
    store.insert("policy.in_p.b", Tensor::zeros(1, d))?;
    store.insert_normal("policy.in_r.w", 1, d, 1.0, rng)?;
    store.insert("policy.in_r.b", Tensor::zeros(1, d))?;
    store.insert_normal("policy.in_s.w", cfg.state_dim, d, (1.0 / cfg.state_dim as f64).sqrt(), rng)?;
    store.insert("policy.in_s.b", Tensor::zeros(1, d))?;
    for block in BLOCKS {
        for l in 0..cfg.layers {
            for w in ["wx", "wy", "wz"] {
                store.insert_normal(format!("policy.{block}.{l}.{w}"), d, d, s, rng)?;
            }
        }
    }
    store.insert_normal("policy.head.w1", d, d, s, rng)?;
    store.insert("policy.head.b1", Tensor::zeros(1, d))?;
    store.insert_normal("policy.head.w2", d, 2, s, rng)?;
    store.insert("policy.head.b2", Tensor::zeros(1, 2))?;
    Ok(())
}

/// Running state of one episode on one tape.
#[derive(Debug, Clone)]
pub struct EpisodeContext<'t> {
    t: usize,
    prev_p: Option<Var<'t>>,
    caches: Vec<LayerCache<'t>>,
}

impl<'t> EpisodeContext<'t> {
    pub fn new(cfg: &PolicyConfig) -> Self {
        Self {
            t: 0,
            prev_p: None,
            caches: vec![LayerCache::default(); 2 * cfg.layers],
        }
    }

    /// Steps taken so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn detach(&self) -> FrozenContext {
        FrozenContext {
            t: self.t,
            prev_p: self.prev_p.map(|v| v.value().as_ref().clone()),
            caches: self
                .caches
                .iter()
                .map(|c| (c.keys.map(|k| k.value().as_ref().clone()), c.values.map(|v| v.value().as_ref().clone())))
                .collect(),
        }
    }
}

/// An episode context held as plain tensors between ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenContext {
    t: usize,
    prev_p: Option<Tensor>,
    caches: Vec<(Option<Tensor>, Option<Tensor>)>,
}

impl FrozenContext {
    pub fn new(cfg: &PolicyConfig) -> Self {
        Self {
            t: 0,
            prev_p: None,
            caches: vec![(None, None); 2 * cfg.layers],
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn attach<'t>(&self, tape: &'t Tape) -> EpisodeContext<'t> {
        EpisodeContext {
            t: self.t,
            prev_p: self.prev_p.clone().map(|p| tape.constant(p)),
            caches: self
                .caches
                .iter()
                .map(|(k, v)| LayerCache {
                    keys: k.clone().map(|k| tape.constant(k)),
                    values: v.clone().map(|v| tape.constant(v)),
                })
                .collect(),
        }
    }
}

fn linear<'t>(tape: &'t Tape, store: &ParamStore, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.matmul(tape.param_named(store, &format!("{prefix}.w"))?)?
        .add(tape.param_named(store, &format!("{prefix}.b"))?)
}

fn maybe_dropout<'t>(x: Var<'t>, rate: f64, rng: &mut impl Rng) -> Result<Var<'t>> {
    if rate > 0.0 {
        x.dropout(rate, rng)
    } else {
        Ok(x)
    }
}

/// Step `t` (from 1) of the episode: the reward stack reads the previous
/// action tensor against `r` (`1 x 1`), the state stack reads its output
/// against `s` (`1 x state_dim`). Each layer's output becomes the next
/// layer's `x`; `y` stays. Returns `P_{a_t}`.
#[allow(clippy::too_many_arguments)]
pub fn policy_step<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    cfg: &PolicyConfig,
    t: usize,
    r: Var<'t>,
    s: Var<'t>,
    ctx: &mut EpisodeContext<'t>,
    rng: &mut impl Rng,
) -> Result<Var<'t>> {
    if t != ctx.t + 1 {
        return Err(Error::State(format!("context is at step {}, asked for step {t}", ctx.t)));
    }
    if ctx.caches.len() != 2 * cfg.layers {
        return Err(Error::State("context built for a different depth".into()));
    }
    let d = cfg.d_model;
    let prev = ctx.prev_p.unwrap_or_else(|| tape.constant(Tensor::zeros(1, d)));
    let mut x = linear(tape, store, "policy.in_p", prev)?;
    let ys = [linear(tape, store, "policy.in_r", r)?, linear(tape, store, "policy.in_s", s)?];
    for (b, block) in BLOCKS.iter().enumerate() {
        for l in 0..cfg.layers {
            let cache = match cfg.context {
                ContextMode::Causal => Some(&mut ctx.caches[b * cfg.layers + l]),
                ContextMode::Step => None,
            };
            x = decoder_layer(tape, store, &format!("policy.{block}.{l}"), x, ys[b], t, cache)?;
            x = maybe_dropout(x, cfg.dropout, rng)?;
        }
    }
    ctx.prev_p = Some(x);
    ctx.t = t;
    Ok(x)
}

/// Two-layer head: `(sigmoid(o1), 360 sigmoid(o2))` as `1 x 1` vars.
pub fn action_head<'t>(tape: &'t Tape, store: &ParamStore, p: Var<'t>, dropout: f64, rng: &mut impl Rng) -> Result<(Var<'t>, Var<'t>)> {
    let hidden = p
        .matmul(tape.param_named(store, "policy.head.w1")?)?
        .add(tape.param_named(store, "policy.head.b1")?)?
        .gelu();
    let hidden = maybe_dropout(hidden, dropout, rng)?;
    let out = hidden
        .matmul(tape.param_named(store, "policy.head.w2")?)?
        .add(tape.param_named(store, "policy.head.b2")?)?;
    let dis = out.slice_cols(0, 1)?.sigmoid();
    let deg = out.slice_cols(1, 1)?.sigmoid().scale(360.0);
    Ok((dis, deg))
}

/// Greedy action for the next step of a running episode.
pub fn predict_action(store: &ParamStore, cfg: &PolicyConfig, ctx: &mut FrozenContext, r: f64, s: &[f64]) -> Result<Action> {
    if s.len() != cfg.state_dim {
        return Err(Error::shape("policy", &[1, cfg.state_dim], &[1, s.len()]));
    }
    let tape = Tape::eval();
    let mut live = ctx.attach(&tape);
    // Dropout is off at inference, so the generator is never drawn from.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let t = live.t() + 1;
    let p = policy_step(&tape, store, cfg, t, tape.scalar(r), tape.constant(Tensor::row(s.to_vec())), &mut live, &mut rng)?;
    let (dis, deg) = action_head(&tape, store, p, 0.0, &mut rng)?;
    *ctx = live.detach();
    Ok(Action {
        dis_norm: dis.item().clamp(0.0, 1.0),
        deg: normalize_deg(deg.item()),
    })
}
