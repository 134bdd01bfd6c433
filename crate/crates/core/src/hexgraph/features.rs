use super::{Level, MultiviewGraph};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::sim::{SimSnapshot, Status};

/// Trailing window for the macro travel-time column.
pub const DEFAULT_TRIP_WINDOW_S: f64 = 3600.0;

const HEADING_CHANGE_DEG: f64 = 45.0;

/// Feature matrices of all three views, micro, meso, macro.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures(pub [Tensor; 3]);

impl ViewFeatures {
    pub fn get(&self, level: Level) -> &Tensor {
        &self.0[level.index()]
    }

    pub fn get_mut(&mut self, level: Level) -> &mut Tensor {
        &mut self.0[level.index()]
    }
}

/// Row of a cell that holds no vehicles and no trips.
pub fn empty_row(graph: &MultiviewGraph, level: Level, cell: usize) -> Vec<f64> {
    match level {
        Level::Micro => vec![0.0, 0.0, 1.0],
        Level::Meso => vec![0.0; 4],
        Level::Macro => vec![0.0, graph.grid(level).degree(cell) as f64 / 6.0, 1.0],
    }
}

impl MultiviewGraph {
    /// Unnormalized features of every view.
    ///
    /// micro: vehicle count, mean speed (km/h), mean speed over free-flow speed.
    /// meso: vehicles that entered the cell this tick, mean speed, fraction
    /// that turned by at least 45 degrees, empty-vehicle count.
    /// macro: mean duration (s) of trips ending in the cell within the trailing
    /// window, degree / 6, mean micro congestion over the micro cells it holds.
    pub fn raw_features(&self, snap: &SimSnapshot) -> Result<ViewFeatures> {
        if !(snap.free_flow_kmh.is_finite() && snap.free_flow_kmh > 0.0) {
            return Err(Error::Argument(format!(
                "free-flow speed must be positive, got {}",
                snap.free_flow_kmh
            )));
        }
        if let Some(t) = snap.recent_trips.iter().find(|t| t.end_time_s > snap.time_s) {
            return Err(Error::State(format!(
                "trip ending at {} s is later than the snapshot at {} s",
                t.end_time_s, snap.time_s
            )));
        }
        let micro = self.grid(Level::Micro);
        let meso = self.grid(Level::Meso);
        let macro_ = self.grid(Level::Macro);

        let mut micro_count = vec![0.0; micro.len()];
        let mut micro_speed = vec![0.0; micro.len()];
        let mut meso_count = vec![0.0; meso.len()];
        let mut meso_speed = vec![0.0; meso.len()];
        let mut meso_entering = vec![0.0; meso.len()];
        let mut meso_turning = vec![0.0; meso.len()];
        let mut meso_idle = vec![0.0; meso.len()];
        for v in &snap.vehicles {
            if !self.bbox().contains(v.position) {
                continue;
            }
            let [mi, me, _] = self.locate_all(v.position)?;
            micro_count[mi] += 1.0;
            micro_speed[mi] += v.speed_kmh;
            meso_count[me] += 1.0;
            meso_speed[me] += v.speed_kmh;
            let entered = match v.previous {
                Some(prev) if self.bbox().contains(prev) => meso.locate(prev)? != me,
                Some(_) => true,
                None => false,
            };
            if entered {
                meso_entering[me] += 1.0;
            }
            if v.heading_change_deg.is_some_and(|d| d >= HEADING_CHANGE_DEG) {
                meso_turning[me] += 1.0;
            }
            if v.status == Status::Empty {
                meso_idle[me] += 1.0;
            }
        }

        let mut micro_x = Tensor::zeros(micro.len(), 3);
        let mut congestion = vec![1.0; micro.len()];
        for i in 0..micro.len() {
            let mean = if micro_count[i] > 0.0 {
                micro_speed[i] / micro_count[i]
            } else {
                0.0
            };
            if micro_count[i] > 0.0 {
                congestion[i] = mean / snap.free_flow_kmh;
            }
            micro_x.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&[
                micro_count[i],
                mean,
                congestion[i],
            ]);
        }

        let mut meso_x = Tensor::zeros(meso.len(), 4);
        for i in 0..meso.len() {
            let n = meso_count[i];
            let (mean, turning) = if n > 0.0 {
                (meso_speed[i] / n, meso_turning[i] / n)
            } else {
                (0.0, 0.0)
            };
            meso_x.data_mut()[i * 4..i * 4 + 4]
                .copy_from_slice(&[meso_entering[i], mean, turning, meso_idle[i]]);
        }

        let mut trip_sum = vec![0.0; macro_.len()];
        let mut trip_count = vec![0.0; macro_.len()];
        for trip in &snap.recent_trips {
            if trip.end_time_s <= snap.time_s - self.trip_window_s()
                || !self.bbox().contains(trip.end)
            {
                continue;
            }
            let c = macro_.locate(trip.end)?;
            trip_sum[c] += trip.duration_s;
            trip_count[c] += 1.0;
        }
        let mut cong_sum = vec![0.0; macro_.len()];
        let mut cong_count = vec![0.0; macro_.len()];
        for (i, &c) in self.micro_to_macro().iter().enumerate() {
            cong_sum[c] += congestion[i];
            cong_count[c] += 1.0;
        }
        let mut macro_x = Tensor::zeros(macro_.len(), 3);
        for i in 0..macro_.len() {
            let travel = if trip_count[i] > 0.0 {
                trip_sum[i] / trip_count[i]
            } else {
                0.0
            };
            let condition = if cong_count[i] > 0.0 {
                cong_sum[i] / cong_count[i]
            } else {
                1.0
            };
            macro_x.data_mut()[i * 3..i * 3 + 3].copy_from_slice(&[
                travel,
                macro_.degree(i) as f64 / 6.0,
                condition,
            ]);
        }
        Ok(ViewFeatures([micro_x, meso_x, macro_x]))
    }

    /// Unnormalized feature matrix of one view.
    pub fn compute_features(&self, snap: &SimSnapshot, level: Level) -> Result<Tensor> {
        let ViewFeatures(mut all) = self.raw_features(snap)?;
        Ok(std::mem::replace(&mut all[level.index()], Tensor::zeros(0, 0)))
    }
}

/// Per-view, per-column z-score statistics from training snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    mean: [Vec<f64>; 3],
    std: [Vec<f64>; 3],
}

impl FeatureNormalizer {
    pub fn identity() -> Self {
        let zeros = Level::ALL.map(|l| vec![0.0; l.feature_dim()]);
        let ones = Level::ALL.map(|l| vec![1.0; l.feature_dim()]);
        Self {
            mean: zeros,
            std: ones,
        }
    }

    /// Fits column statistics over every row of every sample. Constant
    /// columns get unit scale.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a ViewFeatures>) -> Result<Self> {
        let mut sum = Level::ALL.map(|l| vec![0.0; l.feature_dim()]);
        let mut sq = sum.clone();
        let mut rows = [0usize; 3];
        for s in samples {
            for level in Level::ALL {
                let x = s.get(level);
                let k = level.index();
                for r in 0..x.rows() {
                    for (c, &v) in x.row_slice(r).iter().enumerate() {
                        sum[k][c] += v;
                        sq[k][c] += v * v;
                    }
                }
                rows[k] += x.rows();
            }
        }
        if rows.iter().any(|&n| n == 0) {
            return Err(Error::Config("no feature rows to fit normalization".into()));
        }
        let mut out = Self::identity();
        for k in 0..3 {
            let n = rows[k] as f64;
            for c in 0..sum[k].len() {
                let mean = sum[k][c] / n;
                let var = (sq[k][c] / n - mean * mean).max(0.0);
                out.mean[k][c] = mean;
                out.std[k][c] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        Ok(out)
    }

    pub fn normalize_row(&self, level: Level, row: &mut [f64]) {
        let k = level.index();
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[k][c]) / self.std[k][c];
        }
    }

    pub fn normalize(&self, features: &ViewFeatures) -> ViewFeatures {
        let mut out = features.clone();
        for level in Level::ALL {
            let x = out.get_mut(level);
            let cols = level.feature_dim();
            for row in x.data_mut().chunks_mut(cols) {
                self.normalize_row(level, row);
            }
        }
        out
    }

    /// Stores the statistics as `stats.<level>.mean` / `.std` rows.
    pub fn write_to(&self, store: &mut ParamStore) -> Result<()> {
        for level in Level::ALL {
            let k = level.index();
            for (suffix, values) in [("mean", &self.mean[k]), ("std", &self.std[k])] {
                let name = format!("stats.{level}.{suffix}");
                let value = Tensor::row(values.clone());
                match store.id(&name) {
                    Some(id) => store.set_value(id, value)?,
                    None => {
                        store.insert(name, value)?;
                    }
                }
            }
        }
        store.set_frozen_prefix("stats.", true);
        Ok(())
    }

    pub fn read_from(store: &ParamStore) -> Result<Self> {
        let mut out = Self::identity();
        for level in Level::ALL {
            let k = level.index();
            out.mean[k] = store.value(store.require(&format!("stats.{level}.mean"))?).data().to_vec();
            out.std[k] = store.value(store.require(&format!("stats.{level}.std"))?).data().to_vec();
            if out.mean[k].len() != level.feature_dim() || out.std[k].len() != level.feature_dim() {
                return Err(Error::Checkpoint(format!("bad {level} statistics shape")));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BoundingBox, GeoPoint};
    use crate::hexgraph::ViewSpec;
    use crate::sim::{TripObs, VehicleObs};

    fn graph() -> MultiviewGraph {
        let bbox = BoundingBox::new(
            GeoPoint::new(30.0, 120.0).unwrap(),
            GeoPoint::new(30.2, 120.2).unwrap(),
        )
        .unwrap();
        MultiviewGraph::build(bbox, ViewSpec::defaults()).unwrap()
    }

    fn vehicle(id: usize, p: GeoPoint, speed: f64) -> VehicleObs {
        VehicleObs {
            id,
            position: p,
            previous: None,
            speed_kmh: speed,
            heading_change_deg: None,
            status: Status::Empty,
        }
    }

    #[test]
    fn empty_snapshot_gives_default_rows() {
        let g = graph();
        let f = g.raw_features(&SimSnapshot::empty(0.0, 60.0)).unwrap();
        for level in Level::ALL {
            let x = f.get(level);
            assert_eq!(x.shape(), &[g.grid(level).len(), level.feature_dim()]);
            for i in 0..x.rows() {
                assert_eq!(x.row_slice(i), empty_row(&g, level, i).as_slice());
            }
        }
    }

    #[test]
    fn one_vehicle_micro_row() {
        let g = graph();
        let p = GeoPoint::new(30.1, 120.1).unwrap();
        let mut snap = SimSnapshot::empty(0.0, 60.0);
        snap.vehicles.push(vehicle(0, p, 30.0));
        let x = g.compute_features(&snap, Level::Micro).unwrap();
        let cell = g.grid(Level::Micro).locate(p).unwrap();
        assert_eq!(x.row_slice(cell), &[1.0, 30.0, 0.5]);
    }

    #[test]
    fn interior_macro_connectivity_is_one() {
        let bbox = BoundingBox::new(
            GeoPoint::new(30.0, 120.0).unwrap(),
            GeoPoint::new(30.5, 120.5).unwrap(),
        )
        .unwrap();
        let g = MultiviewGraph::build(bbox, ViewSpec::defaults()).unwrap();
        let x = g.compute_features(&SimSnapshot::empty(0.0, 60.0), Level::Macro).unwrap();
        let grid = g.grid(Level::Macro);
        let interior = (0..grid.len()).find(|&i| grid.degree(i) == 6).unwrap();
        assert_eq!(x.get(interior, 1), 1.0);
    }

    #[test]
    fn meso_counts_entries_turns_and_idle() {
        let g = graph();
        let meso = g.grid(Level::Meso);
        let a = meso.cells()[0].center;
        let b = meso.cells()[meso.neighbors(0)[0]].center;
        let mut snap = SimSnapshot::empty(100.0, 60.0);
        let mut v = vehicle(0, a, 20.0);
        v.previous = Some(b);
        v.heading_change_deg = Some(90.0);
        snap.vehicles.push(v);
        let mut w = vehicle(1, a, 40.0);
        w.previous = Some(a);
        w.status = Status::Occupied;
        snap.vehicles.push(w);
        let x = g.compute_features(&snap, Level::Meso).unwrap();
        assert_eq!(x.row_slice(0), &[1.0, 30.0, 0.5, 1.0]);
    }

    #[test]
    fn macro_travel_time_uses_trailing_window() {
        let g = graph().with_trip_window(600.0);
        let end = g.grid(Level::Macro).cells()[0].center;
        let mut snap = SimSnapshot::empty(1000.0, 60.0);
        for (t, d) in [(300.0, 999.0), (500.0, 100.0), (1000.0, 300.0)] {
            snap.recent_trips.push(TripObs {
                end,
                end_time_s: t,
                duration_s: d,
                fare: 5.0,
            });
        }
        let x = g.compute_features(&snap, Level::Macro).unwrap();
        assert_eq!(x.get(0, 0), 200.0);
        snap.recent_trips.push(TripObs {
            end,
            end_time_s: 2000.0,
            duration_s: 1.0,
            fare: 1.0,
        });
        assert!(matches!(g.raw_features(&snap), Err(Error::State(_))));
    }

    #[test]
    fn normalizer_centers_columns_and_round_trips() {
        let g = graph();
        let mut snap = SimSnapshot::empty(0.0, 60.0);
        let p = GeoPoint::new(30.05, 120.05).unwrap();
        snap.vehicles.push(vehicle(0, p, 10.0));
        let raw = g.raw_features(&snap).unwrap();
        let norm = FeatureNormalizer::fit([&raw]).unwrap();
        let z = norm.normalize(&raw);
        for level in Level::ALL {
            let x = z.get(level);
            for c in 0..x.cols() {
                let mean: f64 = (0..x.rows()).map(|r| x.get(r, c)).sum::<f64>() / x.rows() as f64;
                assert!(mean.abs() < 1e-9);
            }
        }
        let mut store = ParamStore::new();
        norm.write_to(&mut store).unwrap();
        assert_eq!(FeatureNormalizer::read_from(&store).unwrap(), norm);
    }
}
