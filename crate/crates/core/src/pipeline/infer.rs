//! Closed-loop dispatch: every tick each empty vehicle follows the policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::RunConfig;
use super::corpus::{anchor_param, bbox_from_store, point_data, BBOX_PARAM};
use super::records::vehicle_name;
use super::train::require_stage1;
use crate::autodiff::{sigmoid, ParamStore, Tape, Tensor};
use crate::behavior::{gru_hidden, gru_step, init_fare_weight, init_gru, FARE_WEIGHT};
use crate::error::{Error, Result};
use crate::geo::location_embedding;
use crate::hexgraph::{FeatureNormalizer, MultiviewGraph};
use crate::policy::{init_policy, predict_action, FrozenContext};
use crate::represent::{embed_aggregates, init_gcn};
use crate::sim::{error_metric, Metrics, Status, World};

struct Agent {
    ctx: FrozenContext,
    anchor: Vec<f64>,
    p: Tensor,
}

/// Runs `world` to its horizon with the model in `store` steering empty
/// vehicles; Error compares each prediction with the driver's own choice.
/// The policy context of a vehicle restarts every `cfg.leng` steps.
pub fn run_inference(store: &ParamStore, cfg: &RunConfig, world: &mut World) -> Result<Metrics> {
    require_stage1(store)?;
    store.require("policy.head.w1").map_err(|_| Error::Checkpoint("checkpoint holds no policy".into()))?;
    let pcfg = cfg.policy_config();
    let graph = MultiviewGraph::build(bbox_from_store(store)?, cfg.view_specs()?)?;
    let norm = FeatureNormalizer::read_from(store)?;
    let w_fare = store.value(store.require(FARE_WEIGHT)?).item();
    let hidden = gru_hidden(store)?;

    let mut agents: Vec<Agent> = world
        .vehicles()
        .iter()
        .map(|v| {
            let anchor = match store.id(&anchor_param(&vehicle_name(v.id))) {
                Some(id) => store.value(id).data().to_vec(),
                None => location_embedding(v.position, cfg.precision)?.into_vec(),
            };
            Ok(Agent { ctx: FrozenContext::new(&pcfg), anchor, p: Tensor::zeros(1, hidden) })
        })
        .collect::<Result<_>>()?;

    let mut error_sum = 0.0;
    let mut error_n = 0usize;
    while !world.is_finished() {
        let truth = world.driver_actions()?;
        let raw = graph.raw_features(world.snapshot())?;
        let tick = world.time_s().round() as i64;
        let fares: Vec<f64> = world.vehicles().iter().map(|v| world.regional_median_fare(v.position)).collect();
        let positions: Vec<_> = world.vehicles().iter().map(|v| v.position).collect();
        let preds = agents
            .par_iter_mut()
            .zip(positions.par_iter().zip(&fares))
            .map(|(agent, (&pos, &fare))| {
                if agent.ctx.t() >= cfg.leng {
                    agent.ctx = FrozenContext::new(&pcfg);
                    agent.p = Tensor::zeros(1, hidden);
                }
                let pt = point_data(&graph, &raw, pos, tick, &norm, cfg)?;
                let tape = Tape::eval();
                let emb = embed_aggregates(&tape, store, &pt.agg, cfg.views)?;
                let loc = tape.constant(Tensor::row(pt.loc.clone()));
                let s = tape.concat_cols(&[emb, loc])?;
                let (p, prob) = gru_step(
                    &tape,
                    store,
                    loc,
                    tape.constant(Tensor::row(agent.anchor.clone())),
                    tape.constant(agent.p.clone()),
                )?;
                agent.p = p.value().as_ref().clone();
                let r = cfg.alpha * prob.item() + (1.0 - cfg.alpha) * sigmoid(w_fare * fare);
                predict_action(store, &pcfg, &mut agent.ctx, r, s.value().data())
            })
            .collect::<Result<Vec<_>>>()?;

        let mut actions = vec![None; preds.len()];
        for (i, v) in world.vehicles().iter().enumerate() {
            if v.status == Status::Empty {
                actions[i] = Some(preds[i]);
                if let Some(t) = truth[i] {
                    error_sum += error_metric(preds[i], t, v.position, cfg.r_max_km)?;
                    error_n += 1;
                }
            }
        }
        world.step(&actions)?;
    }
    let mut m = world.metrics()?;
    m.error_km = (error_n > 0).then(|| error_sum / error_n as f64);
    Ok(m)
}

/// A checkpoint with freshly drawn weights and the same normalization,
/// grid extent and anchors as `trained`: the untrained control.
pub fn random_checkpoint(trained: &ParamStore, cfg: &RunConfig, seed: u64) -> Result<ParamStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    init_gcn(&mut store, cfg.d_g, &mut rng)?;
    init_gru(&mut store, 5 * cfg.precision, cfg.hidden, &mut rng)?;
    init_fare_weight(&mut store, 1.0)?;
    init_policy(&mut store, &cfg.policy_config(), &mut rng)?;
    for id in trained.ids() {
        let name = trained.name(id);
        if name.starts_with("stats.") || name.starts_with("anchor.") || name == BBOX_PARAM {
            store.insert(name.to_string(), trained.value(id).clone())?;
        }
    }
    Ok(store)
}
