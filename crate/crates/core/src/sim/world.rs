use std::collections::{HashSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::assign::{greedy_assign, FreeVehicle, OpenOrder};
use super::congestion::CongestionField;
use super::metrics::{empty_loaded_rate, order_acceptance_rate};
use super::snapshot::{SimSnapshot, SnapshotBuilder, Status, TickRecord};
use crate::error::{Error, Result};
use crate::geo::{azimuth_deg, displace, haversine_km, BoundingBox, GeoPoint};
use crate::hexgraph::{Level, MultiviewGraph, ViewSpec, DEFAULT_TRIP_WINDOW_S};
use crate::policy::{Action, DEFAULT_R_MAX_KM};

/// Gaussian demand bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    pub center: GeoPoint,
    pub sigma_km: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityConfig {
    pub bbox: BoundingBox,
    pub views: [ViewSpec; 3],
    pub n_vehicles: usize,
    /// Orders arrive as a Poisson process conditioned on this count, spread
    /// over `[0, horizon_s - deadline_s]` so every order resolves in time.
    pub n_orders: usize,
    pub horizon_s: f64,
    pub hotspots: Vec<Hotspot>,
    /// Weight of the uniform component of the demand mixture.
    pub background_weight: f64,
    pub dt_s: f64,
    pub cruise_kmh: f64,
    pub free_flow_kmh: f64,
    pub deadline_s: f64,
    pub fare_base: f64,
    pub fare_per_km: f64,
    pub r_max_km: f64,
    /// Micro cells in each driver's home cluster.
    pub cluster_cells: usize,
    /// Decay length of familiarity away from the home cluster.
    pub familiarity_scale_km: f64,
    /// Cruise-speed multiplier while wandering inside the home cluster.
    pub home_speed_factor: f64,
    /// Deepest slowdown of a single congestion dip.
    pub congestion_depth: f64,
    /// Fixed home-cluster seeds, vehicle `i` taking entry `i % len`. Empty
    /// means seeds are drawn from the demand mixture.
    pub home_seeds: Vec<GeoPoint>,
}

impl CityConfig {
    /// 15 x 15 km city with two demand hotspots.
    pub fn two_hotspot(n_vehicles: usize, n_orders: usize) -> Self {
        let sw = GeoPoint::new(30.2, 120.1).expect("valid corner");
        let ne = displace(displace(sw, 15.0, 0.0).expect("north"), 15.0, 90.0).expect("east");
        let bbox = BoundingBox::new(sw, ne).expect("valid bbox");
        let at = |north_km: f64, east_km: f64| {
            displace(displace(sw, north_km, 0.0).expect("north"), east_km, 90.0).expect("east")
        };
        Self {
            bbox,
            views: ViewSpec::defaults(),
            n_vehicles,
            n_orders,
            horizon_s: 7200.0,
            hotspots: vec![
                Hotspot { center: at(4.5, 4.5), sigma_km: 1.5, weight: 1.0 },
                Hotspot { center: at(10.5, 10.0), sigma_km: 1.5, weight: 1.0 },
            ],
            background_weight: 0.2,
            dt_s: 30.0,
            cruise_kmh: 40.0,
            free_flow_kmh: 60.0,
            deadline_s: 600.0,
            fare_base: 2.5,
            fare_per_km: 1.5,
            r_max_km: DEFAULT_R_MAX_KM,
            cluster_cells: 5,
            familiarity_scale_km: 1.0,
            home_speed_factor: 0.5,
            congestion_depth: 0.6,
            home_seeds: Vec::new(),
        }
    }

    /// Two drivers living at opposite hotspots with no orders, so each
    /// only ever cruises around its own home.
    pub fn two_driver() -> Self {
        let mut cfg = Self::two_hotspot(2, 0);
        cfg.home_seeds = cfg.hotspots.iter().map(|h| h.center).collect();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_vehicles >= 1
            && self.dt_s > 0.0
            && self.horizon_s > self.deadline_s
            && self.deadline_s > 0.0
            && self.cruise_kmh > 0.0
            && self.free_flow_kmh > 0.0
            && self.fare_base > 0.0
            && self.fare_per_km >= 0.0
            && self.r_max_km > 0.0
            && self.cluster_cells >= 1
            && self.familiarity_scale_km > 0.0
            && self.home_speed_factor > 0.0
            && (0.0..1.0).contains(&self.congestion_depth)
            && self.background_weight >= 0.0
            && self.hotspots.iter().all(|h| h.sigma_km > 0.0 && h.weight >= 0.0)
            && (self.background_weight > 0.0 || self.hotspots.iter().any(|h| h.weight > 0.0))
            && self.home_seeds.iter().all(|p| self.bbox.contains(*p));
        if !ok {
            return Err(Error::Argument(format!("invalid city configuration {self:?}")));
        }
        Ok(())
    }

    /// Samples a point from the demand mixture.
    pub fn sample_demand(&self, rng: &mut impl Rng) -> GeoPoint {
        let total = self.background_weight + self.hotspots.iter().map(|h| h.weight).sum::<f64>();
        let mut u = rng.random::<f64>() * total;
        for h in &self.hotspots {
            if u < h.weight {
                let n = Normal::new(0.0, h.sigma_km).expect("positive sigma");
                loop {
                    let (dn, de) = (n.sample(rng), n.sample(rng));
                    let p = displace(h.center, dn, 0.0).and_then(|p| displace(p, de, 90.0));
                    if let Ok(p) = p {
                        if self.bbox.contains(p) {
                            return p;
                        }
                    }
                }
            }
            u -= h.weight;
        }
        uniform_point(&self.bbox, rng)
    }
}

fn uniform_point(bbox: &BoundingBox, rng: &mut impl Rng) -> GeoPoint {
    let lat = rng.random_range(bbox.south_west.lat()..=bbox.north_east.lat());
    let lon = rng.random_range(bbox.south_west.lon()..=bbox.north_east.lon());
    GeoPoint::new(lat, lon).expect("inside bbox")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Order {
    pub id: usize,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub fare: f64,
    pub created_at_s: f64,
    pub pickup_deadline_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderState {
    /// Not yet created.
    Future,
    Waiting,
    Assigned { vehicle: usize, pickup_s: Option<f64> },
    Completed { vehicle: usize, pickup_s: f64, dropoff_s: f64 },
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Leg {
    None,
    Pickup(usize),
    Dropoff(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub position: GeoPoint,
    pub status: Status,
    /// Weight per micro cell, summing to 1.
    pub familiarity: Vec<f64>,
    /// Micro cells of the home cluster.
    pub home: Vec<usize>,
    /// Seconds without a passenger on board, including pickup drives.
    pub idle_s: f64,
    pub total_s: f64,
    leg: Leg,
    target: Option<usize>,
}

impl Vehicle {
    pub fn has_passenger(&self) -> bool {
        matches!(self.leg, Leg::Dropoff(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub error_km: Option<f64>,
    pub empty_loaded_rate: f64,
    pub order_acceptance_rate: f64,
}

/// One row of the per-tick run log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickLog {
    pub tick: usize,
    pub open_orders: usize,
    pub empty_loaded_rate: f64,
    pub acceptance_rate: f64,
}

const STREAM_FLEET: u64 = 1;
const STREAM_CONGESTION: u64 = 2;
const STREAM_ORDERS: u64 = 3;
const STREAM_DRIVERS: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: CityConfig,
    graph: MultiviewGraph,
    congestion: CongestionField,
    vehicles: Vec<Vehicle>,
    orders: Vec<Order>,
    states: Vec<OrderState>,
    next_order: usize,
    tick: usize,
    time_s: f64,
    drivers: ChaCha8Rng,
    builder: SnapshotBuilder,
    snapshot: SimSnapshot,
    /// `(completion time, origin micro cell, fare)` inside the fare window.
    fares: VecDeque<(f64, usize, f64)>,
    log: Vec<TickLog>,
    trajectory: Vec<(f64, TickRecord)>,
}

/// Builds a world whose fleet, congestion and orders all derive from `seed`.
pub fn generate_city(cfg: &CityConfig, seed: u64) -> Result<World> {
    World::generate(cfg, seed, seed)
}

impl World {
    /// Fleet, familiarity and congestion come from `fleet_seed`; the order
    /// stream and driver choices from `order_seed`, so one fleet can face
    /// several demand realizations.
    pub fn generate(cfg: &CityConfig, fleet_seed: u64, order_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let graph = MultiviewGraph::build(cfg.bbox, cfg.views)?;
        let micro = graph.grid(Level::Micro);

        let mut rng = stream(fleet_seed, STREAM_FLEET);
        let mut vehicles = Vec::with_capacity(cfg.n_vehicles);
        for id in 0..cfg.n_vehicles {
            let position = uniform_point(&cfg.bbox, &mut rng);
            let seed_point = match cfg.home_seeds.len() {
                0 => cfg.sample_demand(&mut rng),
                n => cfg.home_seeds[id % n],
            };
            let seed_cell = micro.locate(seed_point)?;
            let home = grow_cluster(&graph, seed_cell, cfg.cluster_cells, &mut rng);
            let familiarity = familiarity_map(&graph, &home, cfg.familiarity_scale_km, &mut rng);
            vehicles.push(Vehicle {
                id,
                position,
                status: Status::Empty,
                familiarity,
                home,
                idle_s: 0.0,
                total_s: 0.0,
                leg: Leg::None,
                target: None,
            });
        }

        let mut crng = stream(fleet_seed, STREAM_CONGESTION);
        let (a, b, c) = (cfg.views[0].cell_diameter_km, cfg.views[1].cell_diameter_km, cfg.views[2].cell_diameter_km);
        let congestion = CongestionField::generate(
            cfg.bbox,
            &[(a / 2.0, 4), (b / 2.0, 2), (c / 2.0, 1)],
            cfg.congestion_depth,
            6.0,
            &mut crng,
        );

        let orders = generate_orders(cfg, &mut stream(order_seed, STREAM_ORDERS));
        let states = vec![OrderState::Future; orders.len()];
        let mut world = Self {
            builder: SnapshotBuilder::new(cfg.free_flow_kmh, DEFAULT_TRIP_WINDOW_S),
            snapshot: SimSnapshot::empty(0.0, cfg.free_flow_kmh),
            cfg: cfg.clone(),
            graph,
            congestion,
            vehicles,
            orders,
            states,
            next_order: 0,
            tick: 0,
            time_s: 0.0,
            drivers: stream(order_seed, STREAM_DRIVERS),
            fares: VecDeque::new(),
            log: Vec::new(),
            trajectory: Vec::new(),
        };
        world.settle(&[])?;
        Ok(world)
    }

    pub fn config(&self) -> &CityConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &MultiviewGraph {
        &self.graph
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn order_states(&self) -> &[OrderState] {
        &self.states
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.time_s + 1e-9 >= self.cfg.horizon_s
    }

    /// Snapshot after the latest tick.
    pub fn snapshot(&self) -> &SimSnapshot {
        &self.snapshot
    }

    pub fn log(&self) -> &[TickLog] {
        &self.log
    }

    /// Every logged fix, tick by tick.
    pub fn trajectory(&self) -> &[(f64, TickRecord)] {
        &self.trajectory
    }

    /// Speed multiplier at `p` now.
    pub fn congestion(&self, p: GeoPoint) -> f64 {
        self.congestion.factor(p, self.time_s)
    }

    /// Top speed at `p` now, km/h.
    pub fn max_speed_kmh(&self, p: GeoPoint) -> f64 {
        self.cfg.cruise_kmh * self.congestion(p)
    }

    /// Median fare of trips that started in `p`'s micro cell and completed
    /// within the trailing hour; falls back to the city-wide median, then 0.
    pub fn regional_median_fare(&self, p: GeoPoint) -> f64 {
        let cell = self.graph.grid(Level::Micro).locate(self.cfg.bbox.clamp(p)).ok();
        let local: Vec<f64> = self
            .fares
            .iter()
            .filter(|(_, c, _)| Some(*c) == cell)
            .map(|(_, _, f)| *f)
            .collect();
        if !local.is_empty() {
            return median(local);
        }
        let all: Vec<f64> = self.fares.iter().map(|(_, _, f)| *f).collect();
        if all.is_empty() {
            0.0
        } else {
            median(all)
        }
    }

    /// What each empty driver would do on their own this tick: head for a
    /// neighboring micro cell drawn in proportion to familiarity, keeping
    /// that target until entering it. `None` for occupied vehicles.
    pub fn driver_actions(&mut self) -> Result<Vec<Option<Action>>> {
        let micro = self.graph.grid(Level::Micro);
        let mut out = Vec::with_capacity(self.vehicles.len());
        for v in &mut self.vehicles {
            if v.status != Status::Empty {
                out.push(None);
                continue;
            }
            let cell = micro.locate(v.position)?;
            if v.target.is_none_or(|t| t == cell) {
                let options: Vec<usize> = micro.neighbors(cell).to_vec();
                v.target = options
                    .choose_weighted(&mut self.drivers, |&n| v.familiarity[n])
                    .ok()
                    .copied();
            }
            let Some(target) = v.target else {
                out.push(Some(Action::STAY));
                continue;
            };
            let goal = micro.cells()[target].center;
            let factor = if v.home.contains(&cell) { self.cfg.home_speed_factor } else { 1.0 };
            let speed = self.cfg.cruise_kmh * self.congestion.factor(v.position, self.time_s) * factor;
            let step = (speed * self.cfg.dt_s / 3600.0).min(haversine_km(v.position, goal));
            if step < 1e-9 {
                out.push(Some(Action::STAY));
                continue;
            }
            let deg = azimuth_deg(v.position, goal)?;
            out.push(Some(Action::new((step / self.cfg.r_max_km).min(1.0), deg)?));
        }
        Ok(out)
    }

    /// Advances one tick. `actions[i]` moves vehicle `i` if it is empty;
    /// `None` leaves it in place. Actions for occupied vehicles are ignored.
    pub fn step(&mut self, actions: &[Option<Action>]) -> Result<()> {
        if actions.len() != self.vehicles.len() {
            return Err(Error::shape("step actions", &[self.vehicles.len()], &[actions.len()]));
        }
        let dt = self.cfg.dt_s;
        let t0 = self.time_s;
        let mut booked = vec![0.0; self.vehicles.len()];
        for i in 0..self.vehicles.len() {
            let (pos, status, leg) = {
                let v = &self.vehicles[i];
                (v.position, v.status, v.leg)
            };
            let vmax = self.cfg.cruise_kmh * self.congestion.factor(pos, t0);
            let reach_km = vmax * dt / 3600.0;
            {
                let v = &mut self.vehicles[i];
                v.total_s += dt;
                if !v.has_passenger() {
                    v.idle_s += dt;
                }
            }
            match (status, leg) {
                (Status::Empty, _) => {
                    let a = actions[i].unwrap_or(Action::STAY);
                    let km = a.distance_km(self.cfg.r_max_km).min(reach_km);
                    if km > 0.0 {
                        let next = self.cfg.bbox.clamp(displace(pos, km, a.deg)?);
                        self.vehicles[i].position = next;
                    }
                }
                (Status::Occupied, Leg::Pickup(o)) | (Status::Occupied, Leg::Dropoff(o)) => {
                    if actions[i].is_some() {
                        log::warn!("vehicle {i} is occupied; action ignored");
                    }
                    let order = self.orders[o];
                    let goal = if matches!(leg, Leg::Pickup(_)) { order.origin } else { order.destination };
                    let left = haversine_km(pos, goal);
                    if left <= reach_km {
                        let arrive = t0 + if vmax > 0.0 { left / vmax * 3600.0 } else { dt };
                        self.vehicles[i].position = goal;
                        if matches!(leg, Leg::Pickup(_)) {
                            self.vehicles[i].leg = Leg::Dropoff(o);
                            self.states[o] = OrderState::Assigned { vehicle: i, pickup_s: Some(arrive) };
                        } else {
                            let pickup_s = match self.states[o] {
                                OrderState::Assigned { pickup_s: Some(p), .. } => p,
                                _ => return Err(Error::State(format!("order {o} dropped off before pickup"))),
                            };
                            let v = &mut self.vehicles[i];
                            v.leg = Leg::None;
                            v.status = Status::Empty;
                            v.target = None;
                            booked[i] = order.fare;
                            self.states[o] = OrderState::Completed { vehicle: i, pickup_s, dropoff_s: t0 + dt };
                            let cell = self.graph.grid(Level::Micro).locate(order.origin)?;
                            self.fares.push_back((t0 + dt, cell, order.fare));
                        }
                    } else {
                        self.vehicles[i].position = self.cfg.bbox.clamp(displace(pos, reach_km, azimuth_deg(pos, goal)?)?);
                    }
                }
                (Status::Occupied, Leg::None) => {
                    return Err(Error::State(format!("vehicle {i} occupied without a trip")));
                }
            }
        }
        self.time_s = t0 + dt;
        self.tick += 1;
        self.settle(&booked)
    }

    /// Runs the world to its horizon with drivers acting on their own.
    /// Runs the driver behavior to the horizon.
    pub fn drive(&mut self) -> Result<()> {
        while !self.is_finished() {
            let actions = self.driver_actions()?;
            self.step(&actions)?;
        }
        Ok(())
    }

    pub fn run_drivers(&mut self) -> Result<Metrics> {
        self.drive()?;
        self.metrics()
    }

    /// Spawns, expires and assigns orders at the current time, then logs the
    /// tick.
    fn settle(&mut self, booked: &[f64]) -> Result<()> {
        let now = self.time_s;
        while self.next_order < self.orders.len() && self.orders[self.next_order].created_at_s <= now {
            self.states[self.next_order] = OrderState::Waiting;
            self.next_order += 1;
        }
        for (o, s) in self.states.iter_mut().enumerate() {
            if *s == OrderState::Waiting && self.orders[o].pickup_deadline_s < now {
                *s = OrderState::Expired;
            }
        }
        while self.fares.front().is_some_and(|f| f.0 <= now - DEFAULT_TRIP_WINDOW_S) {
            self.fares.pop_front();
        }

        let open: Vec<OpenOrder> = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == OrderState::Waiting)
            .map(|(o, _)| OpenOrder {
                id: o,
                created_at_s: self.orders[o].created_at_s,
                origin: self.orders[o].origin,
            })
            .collect();
        let free: Vec<FreeVehicle> = self
            .vehicles
            .iter()
            .filter(|v| v.status == Status::Empty)
            .map(|v| FreeVehicle { id: v.id, position: v.position })
            .collect();
        for (o, vid) in greedy_assign(&open, &free) {
            let v = &mut self.vehicles[vid];
            v.status = Status::Occupied;
            v.leg = Leg::Pickup(o);
            v.target = None;
            self.states[o] = OrderState::Assigned { vehicle: vid, pickup_s: None };
        }

        let records: Vec<TickRecord> = self
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| TickRecord {
                vehicle: v.id,
                position: v.position,
                status: v.status,
                fare: booked.get(i).copied().unwrap_or(0.0),
            })
            .collect();
        self.trajectory.extend(records.iter().map(|r| (now, *r)));
        let mut snap = self.builder.push(now, &records)?;
        snap.open_orders = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == OrderState::Waiting)
            .map(|(o, _)| self.orders[o].origin)
            .collect();
        self.snapshot = snap;

        let total: f64 = self.vehicles.iter().map(|v| v.total_s).sum();
        let idle: f64 = self.vehicles.iter().map(|v| v.idle_s).sum();
        let created = self.next_order;
        let accepted = self.states[..created]
            .iter()
            .zip(&self.orders)
            .filter(|(s, o)| Self::pickup_time(s).is_some_and(|p| p <= o.pickup_deadline_s))
            .count();
        self.log.push(TickLog {
            tick: self.tick,
            open_orders: self.snapshot.open_orders.len(),
            empty_loaded_rate: if total > 0.0 { idle / total } else { 0.0 },
            acceptance_rate: if created > 0 { accepted as f64 / created as f64 } else { 0.0 },
        });
        Ok(())
    }

    fn pickup_time(s: &OrderState) -> Option<f64> {
        match *s {
            OrderState::Assigned { pickup_s, .. } => pickup_s,
            OrderState::Completed { pickup_s, .. } => Some(pickup_s),
            _ => None,
        }
    }

    /// Fleet rates over the run so far; acceptance covers created orders.
    pub fn metrics(&self) -> Result<Metrics> {
        let idle: Vec<f64> = self.vehicles.iter().map(|v| v.idle_s).collect();
        let total: Vec<f64> = self.vehicles.iter().map(|v| v.total_s).collect();
        let created = &self.states[..self.next_order];
        let pickups: Vec<Option<f64>> = created.iter().map(Self::pickup_time).collect();
        let deadlines: Vec<f64> = self.orders[..self.next_order].iter().map(|o| o.pickup_deadline_s).collect();
        Ok(Metrics {
            error_km: None,
            empty_loaded_rate: empty_loaded_rate(&idle, &total)?,
            order_acceptance_rate: order_acceptance_rate(&pickups, &deadlines)?,
        })
    }

    /// Per-tick log as comma-separated text with a header row.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("tick,open_orders,empty_loaded_rate,acceptance_rate\n");
        for r in &self.log {
            out.push_str(&format!("{},{},{},{}\n", r.tick, r.open_orders, r.empty_loaded_rate, r.acceptance_rate));
        }
        out
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn generate_orders(cfg: &CityConfig, rng: &mut ChaCha8Rng) -> Vec<Order> {
    let last = cfg.horizon_s - cfg.deadline_s;
    let mut times: Vec<f64> = (0..cfg.n_orders).map(|_| rng.random_range(0.0..last)).collect();
    times.sort_by(f64::total_cmp);
    times
        .into_iter()
        .enumerate()
        .map(|(id, created_at_s)| {
            let origin = cfg.sample_demand(rng);
            let destination = cfg.sample_demand(rng);
            Order {
                id,
                origin,
                destination,
                fare: cfg.fare_base + cfg.fare_per_km * haversine_km(origin, destination),
                created_at_s,
                pickup_deadline_s: created_at_s + cfg.deadline_s,
            }
        })
        .collect()
}

/// Order origins from a Poisson process of `rate_per_s` over `seconds`
/// one-second slots, drawn from the demand mixture.
pub fn poisson_arrivals(cfg: &CityConfig, rate_per_s: f64, seconds: usize, seed: u64) -> Vec<GeoPoint> {
    let mut rng = stream(seed, STREAM_ORDERS);
    let poisson = Poisson::new(rate_per_s.max(1e-12)).expect("positive rate");
    let mut out = Vec::new();
    for _ in 0..seconds {
        let n = poisson.sample(&mut rng) as usize;
        for _ in 0..n {
            out.push(cfg.sample_demand(&mut rng));
        }
    }
    out
}

/// Grows a contiguous cluster of micro cells by random frontier expansion.
fn grow_cluster(graph: &MultiviewGraph, start: usize, size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let micro = graph.grid(Level::Micro);
    let mut cluster = vec![start];
    let mut inside: HashSet<usize> = HashSet::from([start]);
    while cluster.len() < size.min(micro.len()) {
        let frontier: Vec<usize> = cluster
            .iter()
            .flat_map(|&c| micro.neighbors(c).iter().copied())
            .filter(|n| !inside.contains(n))
            .collect();
        let Some(&next) = frontier.choose(rng) else { break };
        inside.insert(next);
        cluster.push(next);
    }
    cluster.sort_unstable();
    cluster
}

/// Weight decays with distance to the nearest home cell, jittered, and
/// normalized to sum 1.
fn familiarity_map(graph: &MultiviewGraph, home: &[usize], scale_km: f64, rng: &mut impl Rng) -> Vec<f64> {
    let cells = graph.grid(Level::Micro).cells();
    let mut w: Vec<f64> = cells
        .iter()
        .map(|c| {
            let d = home
                .iter()
                .map(|&h| haversine_km(c.center, cells[h].center))
                .fold(f64::INFINITY, f64::min);
            (-d / scale_km).exp() * rng.random_range(0.8..1.2)
        })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}
