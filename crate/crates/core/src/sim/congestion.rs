use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geo::{BoundingBox, GeoPoint};
use crate::hexgraph::Projection;

/// A slowdown blob drifting across the city.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Jam {
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    sigma_km: f64,
    depth: f64,
}

/// Time-varying speed multiplier in (0, 1]: a product of drifting Gaussian
/// dips at several spatial scales, so it carries structure at every view
/// size.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionField {
    projection: Projection,
    half_w: f64,
    half_h: f64,
    jams: Vec<Jam>,
    floor: f64,
}

impl CongestionField {
    /// `scales` lists `(sigma_km, count)`; dips have depths in `[0.2, max_depth]`
    /// and drift at up to `drift_kmh`.
    pub fn generate(bbox: BoundingBox, scales: &[(f64, usize)], max_depth: f64, drift_kmh: f64, rng: &mut impl Rng) -> Self {
        let projection = Projection::new(bbox.center());
        let (x1, y1) = projection.to_xy(bbox.north_east);
        let (half_w, half_h) = (x1.abs(), y1.abs());
        let speed = Normal::new(0.0, drift_kmh.max(1e-9) / 3600.0).expect("finite");
        let mut jams = Vec::new();
        for &(sigma_km, count) in scales {
            for _ in 0..count {
                jams.push(Jam {
                    x0: rng.random_range(-half_w..=half_w),
                    y0: rng.random_range(-half_h..=half_h),
                    vx: speed.sample(rng),
                    vy: speed.sample(rng),
                    sigma_km,
                    depth: rng.random_range(0.2..=max_depth.max(0.2)),
                });
            }
        }
        Self {
            projection,
            half_w,
            half_h,
            jams,
            floor: 0.15,
        }
    }

    pub fn free() -> Self {
        Self {
            projection: Projection::new(GeoPoint::new(0.0, 0.0).expect("origin")),
            half_w: 1.0,
            half_h: 1.0,
            jams: Vec::new(),
            floor: 0.15,
        }
    }

    /// Reflects a drifting coordinate back into `[-half, half]`.
    fn bounce(x: f64, half: f64) -> f64 {
        let period = 4.0 * half;
        let m = (x + half).rem_euclid(period);
        if m <= 2.0 * half {
            m - half
        } else {
            3.0 * half - m
        }
    }

    pub fn factor(&self, p: GeoPoint, time_s: f64) -> f64 {
        let (x, y) = self.projection.to_xy(p);
        let mut c = 1.0;
        for j in &self.jams {
            let jx = Self::bounce(j.x0 + j.vx * time_s, self.half_w);
            let jy = Self::bounce(j.y0 + j.vy * time_s, self.half_h);
            let d2 = (x - jx).powi(2) + (y - jy).powi(2);
            c *= 1.0 - j.depth * (-d2 / (2.0 * j.sigma_km * j.sigma_km)).exp();
        }
        c.max(self.floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn factor_is_a_fraction_and_free_field_is_one() {
        let bbox = BoundingBox::new(GeoPoint::new(30.0, 120.0).unwrap(), GeoPoint::new(30.1, 120.1).unwrap()).unwrap();
        let field = CongestionField::generate(bbox, &[(1.0, 3), (5.0, 1)], 0.6, 10.0, &mut ChaCha8Rng::seed_from_u64(1));
        for i in 0..50 {
            let p = GeoPoint::new(30.0 + 0.002 * i as f64, 120.05).unwrap();
            let c = field.factor(p, 60.0 * i as f64);
            assert!(c > 0.0 && c <= 1.0);
        }
        assert_eq!(CongestionField::free().factor(bbox.center(), 10.0), 1.0);
    }

    #[test]
    fn bounce_stays_in_range() {
        for i in -100..100 {
            let x = CongestionField::bounce(i as f64 * 0.37, 2.0);
            assert!((-2.0..=2.0).contains(&x));
        }
    }
}
