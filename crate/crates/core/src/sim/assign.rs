use crate::geo::{haversine_km, GeoPoint};

/// Waiting order as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenOrder {
    pub id: usize,
    pub created_at_s: f64,
    pub origin: GeoPoint,
}

/// Empty vehicle as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeVehicle {
    pub id: usize,
    pub position: GeoPoint,
}

/// Matches orders in creation order (ties by id) to the nearest vehicle not
/// yet taken this round; equal distances go to the lower vehicle id.
/// Returns `(order id, vehicle id)` pairs.
pub fn greedy_assign(orders: &[OpenOrder], vehicles: &[FreeVehicle]) -> Vec<(usize, usize)> {
    let mut orders: Vec<&OpenOrder> = orders.iter().collect();
    orders.sort_by(|a, b| a.created_at_s.total_cmp(&b.created_at_s).then(a.id.cmp(&b.id)));
    let mut taken = vec![false; vehicles.len()];
    let mut out = Vec::new();
    for o in orders {
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, v) in vehicles.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let d = haversine_km(o.origin, v.position);
            let better = match best {
                None => true,
                Some((bd, bid, _)) => d < bd || (d == bd && v.id < bid),
            };
            if better {
                best = Some((d, v.id, k));
            }
        }
        match best {
            Some((_, id, k)) => {
                taken[k] = true;
                out.push((o.id, id));
            }
            None => break,
        }
    }
    out
}
