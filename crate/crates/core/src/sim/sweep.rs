use rayon::prelude::*;

use super::world::{CityConfig, World};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow {
    /// Vehicles per order.
    pub ratio: f64,
    pub n_vehicles: usize,
    pub n_orders: usize,
    pub empty_loaded_rate: f64,
    pub order_acceptance_rate: f64,
}

/// Runs the driver-only dispatch loop once per vehicles-per-order ratio,
/// keeping the order count of `template` and the seeds fixed.
pub fn ratio_sweep(template: &CityConfig, ratios: &[f64], seed: u64) -> Result<Vec<RatioRow>> {
    if template.n_orders == 0 {
        return Err(Error::Config("ratio sweep needs orders".into()));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Argument(format!("ratio must be positive, got {r}")));
    }
    ratios
        .par_iter()
        .map(|&ratio| {
            let mut cfg = template.clone();
            cfg.n_vehicles = ((ratio * template.n_orders as f64).round() as usize).max(1);
            let mut world = World::generate(&cfg, seed, seed)?;
            let m = world.run_drivers()?;
            Ok(RatioRow {
                ratio,
                n_vehicles: cfg.n_vehicles,
                n_orders: cfg.n_orders,
                empty_loaded_rate: m.empty_loaded_rate,
                order_acceptance_rate: m.order_acceptance_rate,
            })
        })
        .collect()
}
