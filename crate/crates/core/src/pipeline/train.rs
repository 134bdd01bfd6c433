//! Two-stage training: behavior pretraining and state/reward preparation,
//! then the policy with its graph and fare weights.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::RunConfig;
use super::corpus::{anchor_param, bbox_to_tensor, Corpus, PointData, BBOX_PARAM};
use super::records::Trajectory;
use super::segments::{chronological_split, segment_trajectories, Segment};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::behavior::{
    auc, behavior_probs, dynamic_reward_var, fare_suffix_sum, init_fare_weight, init_gru, pretrain_behavior,
    require_gru, segment_score, DriverSegment, PretrainConfig, FARE_WEIGHT,
};
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint};
use crate::hexgraph::FeatureNormalizer;
use crate::policy::{evaluate_policy, init_policy, train_policy, Action, Episode, Evaluation, PolicyMetrics, PolicyTrainConfig};
use crate::represent::{embed_aggregates, init_gcn, ViewMask};

const SEGMENT_STREAM: u64 = 0x5e9;
const BEHAVIOR_STREAM: u64 = 0xbe4;
const INIT_STREAM: u64 = 0x1a7;
const POLICY_STREAM: u64 = 0x901;

/// A corpus cut into policy episodes and behavior segments, with model
/// inputs for every record.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub points: Vec<Vec<PointData>>,
    pub normalizer: FeatureNormalizer,
    /// Last timestamp covered by a training segment.
    pub cutoff_s: i64,
    pub train: Vec<Segment>,
    pub val: Vec<Segment>,
    pub test: Vec<Segment>,
    pub anchors: Vec<Vec<f64>>,
}

fn segment_end(corpus: &Corpus, s: &Segment) -> i64 {
    corpus.trajectories[s.trajectory].records[s.start + s.len - 1].timestamp_s
}

/// Filters, featurizes and splits a corpus. Deterministic in `cfg`.
pub fn prepare(trajectories: &[Trajectory], cfg: &RunConfig, bbox: Option<BoundingBox>) -> Result<Prepared> {
    cfg.validate()?;
    let corpus = Corpus::build(trajectories, cfg, bbox)?;
    let (segs, _) = segment_trajectories(&corpus.trajectories, cfg.leng, cfg.segments, cfg.seed ^ SEGMENT_STREAM)?;
    let (train, val, test) = chronological_split(segs, cfg.split)?;
    let cutoff_s = train.iter().map(|s| segment_end(&corpus, s)).max().unwrap_or(i64::MIN);
    let normalizer = corpus.fit_normalizer(cutoff_s)?;
    let points = corpus.point_data(&normalizer, cfg)?;
    let anchors = (0..corpus.trajectories.len())
        .map(|i| corpus.anchor(i, cutoff_s, cfg.precision))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { corpus, points, normalizer, cutoff_s, train, val, test, anchors })
}

impl Prepared {
    fn locations(&self, trajectory: usize, range: std::ops::Range<usize>) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = self.points[trajectory][range].iter().map(|p| p.loc.clone()).collect();
        Tensor::from_rows(&rows)
    }

    /// Empty-status windows as behavior segments, split chronologically.
    pub fn behavior_segments(&self, cfg: &RunConfig) -> Result<(Vec<DriverSegment>, Vec<DriverSegment>)> {
        let mut runs = Vec::new();
        let mut owners = Vec::new();
        for (i, t) in self.corpus.trajectories.iter().enumerate() {
            let mut offset = 0;
            for run in t.empty_runs() {
                while t.records[offset].timestamp_s != run.records[0].timestamp_s {
                    offset += 1;
                }
                owners.push((i, offset));
                offset += run.len();
                runs.push(run);
            }
        }
        let (segs, _) = segment_trajectories(&runs, cfg.behavior_leng, cfg.behavior_segments, cfg.seed ^ BEHAVIOR_STREAM)?;
        let (train, val, test) = chronological_split(segs, cfg.split)?;
        let to_driver = |s: &Segment| -> Result<DriverSegment> {
            let (driver, offset) = owners[s.trajectory];
            Ok(DriverSegment {
                driver,
                locations: self.locations(driver, offset + s.start..offset + s.start + s.len)?,
            })
        };
        let train = train.iter().map(to_driver).collect::<Result<Vec<_>>>()?;
        let held_out = val.iter().chain(&test).map(to_driver).collect::<Result<Vec<_>>>()?;
        Ok((train, held_out))
    }

    /// Policy episodes for `segments` under the behavior model in `store`.
    pub fn episodes(&self, store: &ParamStore, segments: &[Segment], cfg: &RunConfig) -> Result<Vec<CorpusEpisode>> {
        segments
            .par_iter()
            .map(|s| {
                let steps = s.len - 1;
                let recs = &self.corpus.trajectories[s.trajectory].records[s.range()];
                let p = behavior_probs(store, &self.anchors[s.trajectory], &self.locations(s.trajectory, s.start..s.start + steps)?)?;
                let fares: Vec<f64> = recs.iter().map(|r| r.fare).collect();
                let fare_hat = fare_suffix_sum(&fares)[..steps].to_vec();
                let actions = recs.windows(2).map(|w| Action::between(w[0].position, w[1].position, cfg.r_max_km)).collect();
                let origins = recs[..steps].iter().map(|r| r.position).collect();
                Ok(CorpusEpisode {
                    p,
                    fare_hat,
                    points: self.points[s.trajectory][s.start..s.start + steps].to_vec(),
                    actions,
                    origins,
                    alpha: cfg.alpha,
                    views: cfg.views,
                })
            })
            .collect()
    }

    /// Mean returns-to-go over the training episodes' steps.
    fn mean_fare_hat(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for s in &self.train {
            let recs = &self.corpus.trajectories[s.trajectory].records[s.range()];
            let fares: Vec<f64> = recs.iter().map(|r| r.fare).collect();
            let hat = fare_suffix_sum(&fares);
            sum += hat[..s.len - 1].iter().sum::<f64>();
            n += s.len - 1;
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// A policy training sequence drawn from the corpus. Rewards and states are
/// rebuilt on each tape so the fare and graph weights receive gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEpisode {
    pub p: Vec<f64>,
    pub fare_hat: Vec<f64>,
    pub points: Vec<PointData>,
    pub actions: Vec<Action>,
    pub origins: Vec<GeoPoint>,
    pub alpha: f64,
    pub views: ViewMask,
}

impl Episode for CorpusEpisode {
    fn targets(&self) -> &[Action] {
        &self.actions
    }

    fn origins(&self) -> &[GeoPoint] {
        &self.origins
    }

    fn inputs<'t>(&self, tape: &'t Tape, store: &ParamStore) -> Result<Vec<(Var<'t>, Var<'t>)>> {
        self.points
            .iter()
            .zip(self.p.iter().zip(&self.fare_hat))
            .map(|(pt, (&p, &fare))| {
                let r = dynamic_reward_var(tape, store, p, fare, self.alpha)?;
                let emb = embed_aggregates(tape, store, &pt.agg, self.views)?;
                let s = tape.concat_cols(&[emb, tape.constant(Tensor::row(pt.loc.clone()))])?;
                Ok((r, s))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Report {
    pub pretrain_loss: Vec<f64>,
    pub held_out_auc: f64,
    pub behavior_train: usize,
    pub behavior_held_out: usize,
}

/// Held-out AUC: each segment scored against its own driver's anchor
/// (positive) and against a random other driver's anchor (negative).
pub fn behavior_auc(store: &ParamStore, segments: &[DriverSegment], anchors: &[Vec<f64>], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drivers: Vec<usize> = (0..anchors.len()).collect();
    let mut scored = Vec::with_capacity(2 * segments.len());
    for s in segments {
        scored.push((segment_score(store, &anchors[s.driver], &s.locations)?, true));
        let others: Vec<usize> = drivers.iter().copied().filter(|&d| d != s.driver).collect();
        let other = *others.choose(&mut rng).ok_or_else(|| Error::Config("AUC needs two drivers".into()))?;
        scored.push((segment_score(store, &anchors[other], &s.locations)?, false));
    }
    auc(&scored)
}

/// Stage 1: graph and fare weights initialized, behavior model pretrained,
/// normalization, grid extent and driver anchors stored.
pub fn run_stage1(prep: &Prepared, cfg: &RunConfig) -> Result<(ParamStore, Stage1Report)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ INIT_STREAM);
    let mut store = ParamStore::new();
    init_gcn(&mut store, cfg.d_g, &mut rng)?;
    init_gru(&mut store, 5 * cfg.precision, cfg.hidden, &mut rng)?;
    let mean_hat = prep.mean_fare_hat();
    init_fare_weight(&mut store, if mean_hat > 0.0 { 1.0 / mean_hat } else { 1.0 })?;
    prep.normalizer.write_to(&mut store)?;
    store.insert(BBOX_PARAM, bbox_to_tensor(&prep.corpus.graph.bbox()))?;
    for (t, a) in prep.corpus.trajectories.iter().zip(&prep.anchors) {
        store.insert(anchor_param(&t.vehicle_id), Tensor::row(a.clone()))?;
    }
    freeze_buffers(&mut store);

    let (train, held_out) = prep.behavior_segments(cfg)?;
    let pcfg = PretrainConfig {
        epochs: cfg.pretrain_epochs,
        batch_size: 32,
        adam: cfg.adam,
        loss: cfg.behavior_loss,
        seed: cfg.seed ^ BEHAVIOR_STREAM,
    };
    let pretrain_loss = pretrain_behavior(&mut store, &train, &prep.anchors, &pcfg)?;
    let held_out_auc = behavior_auc(&store, &held_out, &prep.anchors, cfg.seed)?;
    Ok((
        store,
        Stage1Report { pretrain_loss, held_out_auc, behavior_train: train.len(), behavior_held_out: held_out.len() },
    ))
}

fn freeze_buffers(store: &mut ParamStore) {
    for prefix in ["stats.", "anchor.", "graph."] {
        store.set_frozen_prefix(prefix, true);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Report {
    pub metrics: Vec<PolicyMetrics>,
    pub test: Evaluation,
}

pub fn policy_train_config(cfg: &RunConfig) -> PolicyTrainConfig {
    PolicyTrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        seed: cfg.seed ^ POLICY_STREAM,
        keep_best: cfg.keep_best,
    }
}

/// Stage 2 on a stage-1 store: adds fresh policy weights and trains them
/// with the graph and fare weights; the behavior model stays fixed.
pub fn run_stage2(stage1: &ParamStore, prep: &Prepared, cfg: &RunConfig, log: Option<&Path>) -> Result<(ParamStore, Stage2Report)> {
    require_stage1(stage1)?;
    let mut store = stage1.clone();
    let pcfg = cfg.policy_config();
    if store.id("policy.head.w1").is_none() {
        init_policy(&mut store, &pcfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ POLICY_STREAM))?;
    }
    store.set_frozen_prefix("gru.", true);
    freeze_buffers(&mut store);
    let train = prep.episodes(&store, &prep.train, cfg)?;
    let val = prep.episodes(&store, &prep.val, cfg)?;
    let test = prep.episodes(&store, &prep.test, cfg)?;
    let metrics = train_policy(&mut store, &pcfg, &train, &val, &policy_train_config(cfg), log)?;
    let test = evaluate_policy(&store, &pcfg, &test)?;
    Ok((store, Stage2Report { metrics, test }))
}

/// Fails with a dependency error unless `store` holds stage-1 results.
pub fn require_stage1(store: &ParamStore) -> Result<()> {
    let missing = |what: &str| Error::Dependency(format!("stage-1 checkpoint lacks {what}"));
    require_gru(store).map_err(|_| missing("the behavior model"))?;
    for name in [FARE_WEIGHT, BBOX_PARAM, "gcn.micro", "stats.micro.mean"] {
        store.require(name).map_err(|_| missing(name))?;
    }
    Ok(())
}

/// Loads a stage-1 checkpoint, mapping a missing file to a dependency error.
pub fn load_stage1(path: &Path) -> Result<ParamStore> {
    if !path.exists() {
        return Err(Error::Dependency(format!("stage-1 checkpoint {} not found", path.display())));
    }
    let store = crate::autodiff::checkpoint::load(path)?;
    require_stage1(&store)?;
    Ok(store)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub stage1: ParamStore,
    pub stage1_report: Stage1Report,
    pub model: ParamStore,
    pub stage2_report: Stage2Report,
}

/// Both stages on one corpus.
pub fn run_training(trajectories: &[Trajectory], cfg: &RunConfig, bbox: Option<BoundingBox>, log: Option<&Path>) -> Result<(Prepared, TrainingOutcome)> {
    let prep = prepare(trajectories, cfg, bbox)?;
    let (stage1, stage1_report) = run_stage1(&prep, cfg)?;
    let (model, stage2_report) = run_stage2(&stage1, &prep, cfg, log)?;
    Ok((prep, TrainingOutcome { stage1, stage1_report, model, stage2_report }))
}
