//! Trajectory files: `vehicle_id,timestamp_s,lat,lon,status,fare`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{haversine_km, GeoPoint};
use crate::sim::{Status, World};

pub const HEADER: [&str; 6] = ["vehicle_id", "timestamp_s", "lat", "lon", "status", "fare"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub vehicle_id: String,
    pub timestamp_s: i64,
    pub position: GeoPoint,
    pub status: Status,
    /// Booked at the drop-off row, else 0.
    pub fare: f64,
}

/// One vehicle's records in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start_time_s(&self) -> Option<i64> {
        self.records.first().map(|r| r.timestamp_s)
    }

    /// Maximal runs of empty-status records, each as its own trajectory.
    pub fn empty_runs(&self) -> Vec<Trajectory> {
        let mut out = Vec::new();
        let mut run: Vec<TrajectoryRecord> = Vec::new();
        for r in &self.records {
            if r.status == Status::Empty {
                run.push(r.clone());
            } else if !run.is_empty() {
                out.push(Trajectory { vehicle_id: self.vehicle_id.clone(), records: std::mem::take(&mut run) });
            }
        }
        if !run.is_empty() {
            out.push(Trajectory { vehicle_id: self.vehicle_id.clone(), records: run });
        }
        out
    }
}

fn record_error(line: u64, message: impl Into<String>) -> Error {
    Error::Record { line, message: message.into() }
}

/// Reads and validates a trajectory file, grouping rows by vehicle in id
/// order. Each vehicle's rows must be strictly increasing in time.
pub fn read_trajectories(reader: impl std::io::Read) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut groups: BTreeMap<String, Vec<TrajectoryRecord>> = BTreeMap::new();
    let mut header_seen = false;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if !header_seen {
            let got: Vec<&str> = row.iter().map(str::trim).collect();
            if got != HEADER {
                return Err(record_error(line, format!("expected header {}", HEADER.join(","))));
            }
            header_seen = true;
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(record_error(line, format!("expected {} fields, found {}", HEADER.len(), row.len())));
        }
        let field = |i: usize| row[i].trim();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| record_error(line, format!("{} is not a number: {:?}", HEADER[i], field(i))))
        };
        let vehicle_id = field(0).to_string();
        if vehicle_id.is_empty() {
            return Err(record_error(line, "empty vehicle_id"));
        }
        let timestamp_s: i64 = field(1)
            .parse()
            .map_err(|_| record_error(line, format!("timestamp_s is not an integer: {:?}", field(1))))?;
        let position = GeoPoint::new(num(2)?, num(3)?).map_err(|e| record_error(line, e.to_string()))?;
        let status = field(4)
            .parse::<u8>()
            .ok()
            .and_then(Status::from_code)
            .ok_or_else(|| record_error(line, format!("status must be 0 or 1, got {:?}", field(4))))?;
        let fare = num(5)?;
        if fare < 0.0 {
            return Err(record_error(line, format!("negative fare {fare}")));
        }
        let rows = groups.entry(vehicle_id.clone()).or_default();
        if rows.last().is_some_and(|r| r.timestamp_s >= timestamp_s) {
            return Err(Error::Ordering { vehicle: vehicle_id, line });
        }
        rows.push(TrajectoryRecord { vehicle_id, timestamp_s, position, status, fare });
    }
    if groups.is_empty() {
        log::warn!("trajectory input holds no records");
    }
    Ok(groups
        .into_iter()
        .map(|(vehicle_id, records)| Trajectory { vehicle_id, records })
        .collect())
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(std::io::BufReader::new(file))
}

pub fn write_trajectories(writer: impl std::io::Write, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for t in trajectories {
        for r in &t.records {
            w.write_record([
                r.vehicle_id.clone(),
                r.timestamp_s.to_string(),
                r.position.lat().to_string(),
                r.position.lon().to_string(),
                r.status.code().to_string(),
                r.fare.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io { path: "<trajectory writer>".into(), source: e })?;
    Ok(())
}

pub fn save_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectories(std::io::BufWriter::new(file), trajectories)
}

pub fn vehicle_name(id: usize) -> String {
    format!("v{id:04}")
}

/// The fixes a world has logged, one trajectory per vehicle.
pub fn trajectories_from_world(world: &World) -> Vec<Trajectory> {
    let mut out: Vec<Trajectory> = world
        .vehicles()
        .iter()
        .map(|v| Trajectory { vehicle_id: vehicle_name(v.id), records: Vec::new() })
        .collect();
    for (t, rec) in world.trajectory() {
        out[rec.vehicle].records.push(TrajectoryRecord {
            vehicle_id: vehicle_name(rec.vehicle),
            timestamp_s: t.round() as i64,
            position: rec.position,
            status: rec.status,
            fare: rec.fare,
        });
    }
    out
}

/// Drops fixes that imply an average speed above 1.2 times the local limit
/// (km/h at the later fix) relative to the last kept fix.
pub fn speed_filter(trajectory: &Trajectory, limit_kmh: &dyn Fn(GeoPoint) -> f64) -> Trajectory {
    let mut kept: Vec<TrajectoryRecord> = Vec::with_capacity(trajectory.len());
    for r in &trajectory.records {
        if let Some(last) = kept.last() {
            let hours = (r.timestamp_s - last.timestamp_s) as f64 / 3600.0;
            let speed = haversine_km(last.position, r.position) / hours;
            if speed > 1.2 * limit_kmh(r.position) {
                continue;
            }
        }
        kept.push(r.clone());
    }
    Trajectory { vehicle_id: trajectory.vehicle_id.clone(), records: kept }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::displace;

    fn traj(points: &[(i64, GeoPoint)]) -> Trajectory {
        Trajectory {
            vehicle_id: "a".into(),
            records: points
                .iter()
                .map(|&(t, p)| TrajectoryRecord { vehicle_id: "a".into(), timestamp_s: t, position: p, status: Status::Empty, fare: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn empty_and_header_only_inputs_are_empty() {
        assert!(read_trajectories("".as_bytes()).unwrap().is_empty());
        assert!(read_trajectories("vehicle_id,timestamp_s,lat,lon,status,fare\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn errors_name_the_line() {
        let text = "vehicle_id,timestamp_s,lat,lon,status,fare\na,0,30,120,0,0\na,30,91,120,0,0\n";
        match read_trajectories(text.as_bytes()).unwrap_err() {
            Error::Record { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "vehicle_id,timestamp_s,lat,lon,status,fare\na,30,30,120,0,0\nb,0,30,120,0,0\na,30,30,120,0,0\n";
        match read_trajectories(text.as_bytes()).unwrap_err() {
            Error::Ordering { vehicle, line } => assert_eq!((vehicle.as_str(), line), ("a", 4)),
            e => panic!("unexpected {e}"),
        }
        for bad in ["a,x,30,120,0,0", "a,0,30,120,2,0", "a,0,30,120,0,-1", "a,0,30,120,0", "a,0,30,abc,0,0"] {
            let text = format!("vehicle_id,timestamp_s,lat,lon,status,fare\n{bad}\n");
            assert!(matches!(read_trajectories(text.as_bytes()), Err(Error::Record { line: 2, .. })), "{bad}");
        }
        assert!(read_trajectories("id,t\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read_round_trips() {
        let p = GeoPoint::new(30.123456789, 120.987654321).unwrap();
        let mut t = traj(&[(0, p), (30, p)]);
        t.records[1].status = Status::Occupied;
        t.records[1].fare = 12.75;
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &[t.clone()]).unwrap();
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), vec![t]);
    }

    #[test]
    fn filter_drops_only_the_teleport() {
        let a = GeoPoint::new(30.0, 120.0).unwrap();
        let mut pts = Vec::new();
        for i in 0..6 {
            pts.push((30 * i, displace(a, 0.2 * i as f64, 90.0).unwrap()));
        }
        pts[3].1 = displace(a, 500.0, 0.0).unwrap();
        let t = traj(&pts);
        let f = speed_filter(&t, &|_| 60.0);
        assert_eq!(f.len(), 5);
        assert!(!f.records.iter().any(|r| r.timestamp_s == 90));
        assert_eq!(speed_filter(&f, &|_| 60.0), f);
    }

    #[test]
    fn filter_keeps_stationary_and_boundary_speeds() {
        let a = GeoPoint::new(30.0, 120.0).unwrap();
        let still = traj(&[(0, a), (30, a), (60, a)]);
        assert_eq!(speed_filter(&still, &|_| 60.0), still);
        // 72 km/h exactly: 0.6 km per 30 s.
        let b = displace(a, 0.6, 90.0).unwrap();
        let step = haversine_km(a, b) * 120.0;
        let edge = traj(&[(0, a), (30, b)]);
        assert_eq!(speed_filter(&edge, &|_| step / 1.2).len(), 2);
        assert_eq!(speed_filter(&edge, &|_| step / 1.2 - 1e-9).len(), 1);
    }

    #[test]
    fn empty_runs_split_on_occupied_rows() {
        let a = GeoPoint::new(30.0, 120.0).unwrap();
        let mut t = traj(&[(0, a), (30, a), (60, a), (90, a), (120, a)]);
        t.records[2].status = Status::Occupied;
        let runs = t.empty_runs();
        assert_eq!(runs.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![2, 2]);
    }
}
