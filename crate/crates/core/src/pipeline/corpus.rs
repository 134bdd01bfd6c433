//! Stage-1 data preparation: per-tick features, ego aggregates and location
//! bits for every record of a trajectory corpus.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::config::RunConfig;
use super::records::{speed_filter, Trajectory};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::geo::{location_embedding, BoundingBox, GeoPoint};
use crate::hexgraph::{FeatureNormalizer, Level, MultiviewGraph, ViewFeatures, DEFAULT_TRIP_WINDOW_S};
use crate::represent::EgoAggregates;
use crate::sim::{SnapshotBuilder, Status, TickRecord};

pub const BBOX_PARAM: &str = "graph.bbox";

/// Free-flow speed the congestion column is measured against, km/h.
pub const FREE_FLOW_KMH: f64 = 60.0;

pub fn anchor_param(vehicle_id: &str) -> String {
    format!("anchor.{vehicle_id}")
}

/// Model inputs of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    pub agg: EgoAggregates,
    pub loc: Vec<f64>,
}

/// Speed-filtered trajectories on a shared hex graph with raw features per
/// tick.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub graph: MultiviewGraph,
    pub trajectories: Vec<Trajectory>,
    raw: BTreeMap<i64, ViewFeatures>,
}

/// Smallest box holding every record, padded by `pad` of its extent.
pub fn data_bbox(trajectories: &[Trajectory], pad: f64) -> Result<BoundingBox> {
    let pts = trajectories.iter().flat_map(|t| t.records.iter().map(|r| r.position));
    let (mut s, mut w, mut n, mut e) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        s = s.min(p.lat());
        n = n.max(p.lat());
        w = w.min(p.lon());
        e = e.max(p.lon());
    }
    if !s.is_finite() {
        return Err(Error::Config("no records to span a bounding box".into()));
    }
    let dlat = ((n - s) * pad).max(1e-4);
    let dlon = ((e - w) * pad).max(1e-4);
    BoundingBox::new(
        GeoPoint::new((s - dlat).max(-90.0), (w - dlon).max(-180.0))?,
        GeoPoint::new((n + dlat).min(90.0), (e + dlon).min(180.0))?,
    )
}

pub fn bbox_to_tensor(b: &BoundingBox) -> Tensor {
    Tensor::row(vec![b.south_west.lat(), b.south_west.lon(), b.north_east.lat(), b.north_east.lon()])
}

pub fn bbox_from_store(store: &ParamStore) -> Result<BoundingBox> {
    let v = store.value(store.require(BBOX_PARAM)?).data().to_vec();
    if v.len() != 4 {
        return Err(Error::Checkpoint("graph.bbox must hold 4 values".into()));
    }
    BoundingBox::new(GeoPoint::new(v[0], v[1])?, GeoPoint::new(v[2], v[3])?)
}

impl Corpus {
    /// Filters every trajectory, builds the graph over `bbox` (or the data
    /// extent) and computes raw features for every tick.
    pub fn build(trajectories: &[Trajectory], cfg: &RunConfig, bbox: Option<BoundingBox>) -> Result<Self> {
        let limit = cfg.speed_limit_kmh;
        let trajectories: Vec<Trajectory> = trajectories.iter().map(|t| speed_filter(t, &|_| limit)).collect();
        let bbox = match bbox {
            Some(b) => b,
            None => data_bbox(&trajectories, 0.01)?,
        };
        let graph = MultiviewGraph::build(bbox, cfg.view_specs()?)?;

        let mut ticks: BTreeMap<i64, Vec<TickRecord>> = BTreeMap::new();
        for (i, t) in trajectories.iter().enumerate() {
            for r in &t.records {
                ticks.entry(r.timestamp_s).or_default().push(TickRecord {
                    vehicle: i,
                    position: r.position,
                    status: r.status,
                    fare: r.fare,
                });
            }
        }
        let mut builder = SnapshotBuilder::new(FREE_FLOW_KMH, DEFAULT_TRIP_WINDOW_S);
        let mut snaps = Vec::with_capacity(ticks.len());
        for (&t, recs) in &ticks {
            snaps.push((t, builder.push(t as f64, recs)?));
        }
        let raw = snaps
            .par_iter()
            .map(|(t, s)| Ok((*t, graph.raw_features(s)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { graph, trajectories, raw })
    }

    /// Normalization fitted on ticks at or before `until_s`.
    pub fn fit_normalizer(&self, until_s: i64) -> Result<FeatureNormalizer> {
        FeatureNormalizer::fit(self.raw.range(..=until_s).map(|(_, f)| f))
    }

    /// Inputs of every record, trajectory by trajectory.
    pub fn point_data(&self, norm: &FeatureNormalizer, cfg: &RunConfig) -> Result<Vec<Vec<PointData>>> {
        self.trajectories
            .par_iter()
            .map(|t| {
                t.records
                    .iter()
                    .map(|r| {
                        let raw = &self.raw[&r.timestamp_s];
                        point_data(&self.graph, raw, r.position, r.timestamp_s, norm, cfg)
                    })
                    .collect()
            })
            .collect()
    }

    /// Most visited micro cell among a driver's empty records up to
    /// `until_s`, as a location embedding; all records if none qualify.
    pub fn anchor(&self, trajectory: usize, until_s: i64, precision: usize) -> Result<Vec<f64>> {
        let micro = self.graph.grid(Level::Micro);
        let t = &self.trajectories[trajectory];
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let empty = t.records.iter().filter(|r| r.status == Status::Empty && r.timestamp_s <= until_s);
        for r in empty {
            *counts.entry(micro.locate(self.graph.bbox().clamp(r.position))?).or_default() += 1;
        }
        if counts.is_empty() {
            for r in &t.records {
                *counts.entry(micro.locate(self.graph.bbox().clamp(r.position))?).or_default() += 1;
            }
        }
        let cell = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .ok_or_else(|| Error::Config(format!("vehicle {} has no records", t.vehicle_id)))?;
        Ok(location_embedding(micro.cells()[cell].center, precision)?.into_vec())
    }
}

/// Hop-masked, normalized ego aggregates and location bits at `position`.
pub fn point_data(
    graph: &MultiviewGraph,
    raw: &ViewFeatures,
    position: GeoPoint,
    tick: i64,
    norm: &FeatureNormalizer,
    cfg: &RunConfig,
) -> Result<PointData> {
    let ego = graph.locate_all(graph.bbox().clamp(position))?;
    let seen = if cfg.hops {
        graph.restrict_by_hops(raw, ego, &cfg.hop, cfg.seed ^ tick as u64)?
    } else {
        raw.clone()
    };
    let features = norm.normalize(&seen);
    Ok(PointData {
        agg: EgoAggregates::compute(graph, &features, ego, cfg.gcn)?,
        loc: location_embedding(position, cfg.precision)?.into_vec(),
    })
}
