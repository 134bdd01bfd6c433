use crate::error::{Error, Result};
use crate::geo::{displace, haversine_km, GeoPoint};
use crate::policy::Action;

/// Kilometers between the points the predicted and the true action reach
/// from `from`.
pub fn error_metric(pred: Action, truth: Action, from: GeoPoint, r_max_km: f64) -> Result<f64> {
    let a = displace(from, pred.distance_km(r_max_km), pred.deg)?;
    let b = displace(from, truth.distance_km(r_max_km), truth.deg)?;
    Ok(haversine_km(a, b))
}

/// Fleet idle seconds over fleet running seconds.
pub fn empty_loaded_rate(idle_s: &[f64], total_s: &[f64]) -> Result<f64> {
    let idle: f64 = idle_s.iter().sum();
    let total: f64 = total_s.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedMetric("empty-loaded rate with zero running time"));
    }
    Ok(idle / total)
}

/// Share of orders picked up by their deadline. `pickups[i]` is the pickup
/// time of order `i`, if any.
pub fn order_acceptance_rate(pickups: &[Option<f64>], deadlines: &[f64]) -> Result<f64> {
    if pickups.is_empty() {
        return Err(Error::UndefinedMetric("acceptance rate with no orders"));
    }
    if pickups.len() != deadlines.len() {
        return Err(Error::shape("acceptance", &[pickups.len()], &[deadlines.len()]));
    }
    let ok = pickups
        .iter()
        .zip(deadlines)
        .filter(|(p, d)| p.is_some_and(|p| p <= **d))
        .count();
    Ok(ok as f64 / pickups.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_examples() {
        let from = GeoPoint::new(30.0, 120.0).unwrap();
        let a = Action { dis_norm: 0.2, deg: 0.0 };
        let b = Action { dis_norm: 0.2, deg: 180.0 };
        assert_eq!(error_metric(a, a, from, 5.0).unwrap(), 0.0);
        assert!((error_metric(a, b, from, 5.0).unwrap() - 2.0).abs() < 1e-3);
        assert_eq!(error_metric(a, b, from, 5.0).unwrap(), error_metric(b, a, from, 5.0).unwrap());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(empty_loaded_rate(&[30.0], &[120.0]).unwrap(), 0.25);
        assert_eq!(empty_loaded_rate(&[10.0, 20.0], &[10.0, 20.0]).unwrap(), 1.0);
        assert_eq!(empty_loaded_rate(&[0.0], &[50.0]).unwrap(), 0.0);
        assert!(empty_loaded_rate(&[], &[]).is_err());
        let d = [600.0; 4];
        assert_eq!(order_acceptance_rate(&[Some(0.0), Some(10.0), Some(599.0), None], &d).unwrap(), 0.75);
        assert_eq!(order_acceptance_rate(&[Some(700.0)], &[600.0]).unwrap(), 0.0);
        assert!(order_acceptance_rate(&[], &[]).is_err());
    }
}
