//! Synthetic-city fleet simulator.

mod assign;
mod congestion;
mod metrics;
mod snapshot;
mod sweep;
mod world;

pub use assign::{greedy_assign, FreeVehicle, OpenOrder};
pub use congestion::CongestionField;
pub use metrics::{empty_loaded_rate, error_metric, order_acceptance_rate};
pub use snapshot::{SimSnapshot, SnapshotBuilder, Status, TickRecord, TripObs, VehicleObs};
pub use sweep::{ratio_sweep, RatioRow};
pub use world::{generate_city, poisson_arrivals, CityConfig, Hotspot, Metrics, Order, OrderState, TickLog, Vehicle, World};
