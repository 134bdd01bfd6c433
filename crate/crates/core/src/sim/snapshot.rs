use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Empty,
    Occupied,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Empty => 0,
            Status::Occupied => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Status::Empty),
            1 => Some(Status::Occupied),
            _ => None,
        }
    }
}

/// What the feature extractor sees of one vehicle at a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleObs {
    pub id: usize,
    pub position: GeoPoint,
    /// Position at the previous tick, if the vehicle was observed then.
    pub previous: Option<GeoPoint>,
    /// Average speed over the last tick, km/h.
    pub speed_kmh: f64,
    /// Heading change between the last two moves, degrees in [0, 180].
    pub heading_change_deg: Option<f64>,
    pub status: Status,
}

/// A completed passenger trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripObs {
    pub end: GeoPoint,
    pub end_time_s: f64,
    pub duration_s: f64,
    pub fare: f64,
}

/// Immutable view of the world at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSnapshot {
    pub time_s: f64,
    pub free_flow_kmh: f64,
    pub vehicles: Vec<VehicleObs>,
    pub open_orders: Vec<GeoPoint>,
    /// Trips completed at or before `time_s`; older ones are ignored by the
    /// feature window.
    pub recent_trips: Vec<TripObs>,
}

impl SimSnapshot {
    pub fn empty(time_s: f64, free_flow_kmh: f64) -> Self {
        Self {
            time_s,
            free_flow_kmh,
            vehicles: Vec::new(),
            open_orders: Vec::new(),
            recent_trips: Vec::new(),
        }
    }
}

/// One vehicle's fix at a tick, as logged or as read from a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub vehicle: usize,
    pub position: GeoPoint,
    pub status: Status,
    /// Fare booked at this fix; positive only at a drop-off.
    pub fare: f64,
}

#[derive(Debug, Clone, Copy)]
struct Track {
    time_s: f64,
    position: GeoPoint,
    heading: Option<f64>,
    occupied_since: Option<f64>,
}

/// Turns a stream of per-tick fixes into snapshots, deriving speeds, heading
/// changes and completed trips the same way for live runs and logged data.
#[derive(Debug, Clone)]
pub struct SnapshotBuilder {
    free_flow_kmh: f64,
    trip_window_s: f64,
    tracks: std::collections::HashMap<usize, Track>,
    trips: std::collections::VecDeque<TripObs>,
}

/// Moves shorter than this carry no heading.
const MIN_MOVE_KM: f64 = 1e-6;

impl SnapshotBuilder {
    pub fn new(free_flow_kmh: f64, trip_window_s: f64) -> Self {
        Self {
            free_flow_kmh,
            trip_window_s,
            tracks: Default::default(),
            trips: Default::default(),
        }
    }

    /// Completed trips still inside the trailing window.
    pub fn trips(&self) -> impl Iterator<Item = &TripObs> {
        self.trips.iter()
    }

    /// Ingests the fixes of tick `time_s` and returns its snapshot. Vehicles
    /// missing from `records` are absent from the snapshot.
    pub fn push(&mut self, time_s: f64, records: &[TickRecord]) -> crate::Result<SimSnapshot> {
        use crate::geo::{azimuth_deg, haversine_km};
        let mut vehicles = Vec::with_capacity(records.len());
        for rec in records {
            let prev = self.tracks.get(&rec.vehicle).copied();
            if let Some(p) = prev {
                if p.time_s >= time_s {
                    return Err(crate::Error::State(format!(
                        "vehicle {} observed at {} s after {} s",
                        rec.vehicle, time_s, p.time_s
                    )));
                }
            }
            let (speed_kmh, heading, heading_change_deg) = match prev {
                Some(p) => {
                    let km = haversine_km(p.position, rec.position);
                    let speed = km / (time_s - p.time_s) * 3600.0;
                    if km > MIN_MOVE_KM {
                        let h = azimuth_deg(p.position, rec.position)?;
                        let change = p.heading.map(|old| {
                            let d = (h - old).rem_euclid(360.0);
                            d.min(360.0 - d)
                        });
                        (speed, Some(h), change)
                    } else {
                        (speed, p.heading, None)
                    }
                }
                None => (0.0, None, None),
            };
            let mut occupied_since = match (rec.status, prev.and_then(|p| p.occupied_since)) {
                (Status::Occupied, Some(t)) => Some(t),
                (Status::Occupied, None) => Some(time_s),
                (Status::Empty, _) => None,
            };
            if rec.fare > 0.0 {
                let start = occupied_since.or(prev.and_then(|p| p.occupied_since)).unwrap_or(time_s);
                self.trips.push_back(TripObs {
                    end: rec.position,
                    end_time_s: time_s,
                    duration_s: time_s - start,
                    fare: rec.fare,
                });
                occupied_since = None;
            }
            self.tracks.insert(
                rec.vehicle,
                Track {
                    time_s,
                    position: rec.position,
                    heading,
                    occupied_since,
                },
            );
            vehicles.push(VehicleObs {
                id: rec.vehicle,
                position: rec.position,
                previous: prev.map(|p| p.position),
                speed_kmh,
                heading_change_deg,
                status: rec.status,
            });
        }
        while self
            .trips
            .front()
            .is_some_and(|t| t.end_time_s <= time_s - self.trip_window_s)
        {
            self.trips.pop_front();
        }
        Ok(SimSnapshot {
            time_s,
            free_flow_kmh: self.free_flow_kmh,
            vehicles,
            open_orders: Vec::new(),
            recent_trips: self.trips.iter().copied().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(vehicle: usize, lat: f64, status: Status, fare: f64) -> TickRecord {
        TickRecord {
            vehicle,
            position: GeoPoint::new(lat, 120.0).unwrap(),
            status,
            fare,
        }
    }

    #[test]
    fn derives_speed_turns_and_trips() {
        let mut b = SnapshotBuilder::new(60.0, 3600.0);
        let s0 = b.push(0.0, &[rec(1, 30.0, Status::Empty, 0.0)]).unwrap();
        assert_eq!(s0.vehicles[0].speed_kmh, 0.0);
        assert!(s0.vehicles[0].previous.is_none());
        b.push(30.0, &[rec(1, 30.001, Status::Occupied, 0.0)]).unwrap();
        let s2 = b.push(60.0, &[rec(1, 30.0, Status::Occupied, 7.5)]).unwrap();
        let v = &s2.vehicles[0];
        let km = crate::geo::haversine_km(GeoPoint::new(30.0, 120.0).unwrap(), GeoPoint::new(30.001, 120.0).unwrap());
        assert!((v.speed_kmh - km * 120.0).abs() < 1e-9);
        assert!((v.heading_change_deg.unwrap() - 180.0).abs() < 1e-6);
        assert_eq!(s2.recent_trips.len(), 1);
        assert_eq!(s2.recent_trips[0].duration_s, 30.0);
        assert_eq!(s2.recent_trips[0].fare, 7.5);
        let late = b.push(60.0 + 3600.0, &[rec(1, 30.0, Status::Empty, 0.0)]).unwrap();
        assert!(late.recent_trips.is_empty());
    }

    #[test]
    fn rejects_time_going_backwards() {
        let mut b = SnapshotBuilder::new(60.0, 3600.0);
        b.push(30.0, &[rec(1, 30.0, Status::Empty, 0.0)]).unwrap();
        assert!(b.push(30.0, &[rec(1, 30.0, Status::Empty, 0.0)]).is_err());
    }
}
