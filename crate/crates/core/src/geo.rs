//! Spherical coordinate math and GeoHash encoding.
//!
//! Every location fed to the models goes through [`location_embedding`]: the
//! raw interleaved GeoHash bits as a 0/1 vector. Longer precisions extend the
//! vector without changing its prefix.

use std::fmt;

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

pub const MAX_PRECISION: usize = 16;

pub const DEFAULT_PRECISION: usize = 8;

const BASE32: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// A WGS-84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::Argument(format!(
                "non-finite coordinate ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Argument(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Argument(format!(
                "longitude {lon} outside [-180, 180]"
            )));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.lat, self.lon)
    }
}

/// Axis-aligned latitude/longitude box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub south_west: GeoPoint,
    pub north_east: GeoPoint,
}

impl BoundingBox {
    pub fn new(south_west: GeoPoint, north_east: GeoPoint) -> Result<Self> {
        if north_east.lat <= south_west.lat || north_east.lon <= south_west.lon {
            return Err(Error::Argument(format!(
                "degenerate bounding box {south_west} .. {north_east}"
            )));
        }
        Ok(Self {
            south_west,
            north_east,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.south_west.lat..=self.north_east.lat).contains(&p.lat)
            && (self.south_west.lon..=self.north_east.lon).contains(&p.lon)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: 0.5 * (self.south_west.lat + self.north_east.lat),
            lon: 0.5 * (self.south_west.lon + self.north_east.lon),
        }
    }

    /// Clamps a point onto the box.
    pub fn clamp(&self, p: GeoPoint) -> GeoPoint {
        GeoPoint {
            lat: p.lat.clamp(self.south_west.lat, self.north_east.lat),
            lon: p.lon.clamp(self.south_west.lon, self.north_east.lon),
        }
    }
}

/// A base-32 GeoHash string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GeoHashCode(String);

impl GeoHashCode {
    pub fn parse(code: &str) -> Result<Self> {
        if code.is_empty() || code.len() > MAX_PRECISION {
            return Err(Error::Parse(format!(
                "geohash length {} outside [1, {MAX_PRECISION}]",
                code.len()
            )));
        }
        if let Some(c) = code.bytes().find(|b| base32_value(*b).is_none()) {
            return Err(Error::Parse(format!(
                "character {:?} is not in the geohash alphabet",
                c as char
            )));
        }
        Ok(Self(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for GeoHashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Decoded cell: center and half-widths in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoHashCell {
    pub center: GeoPoint,
    pub lat_err: f64,
    pub lon_err: f64,
}

impl GeoHashCell {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (p.lat - self.center.lat).abs() <= self.lat_err
            && (p.lon - self.center.lon).abs() <= self.lon_err
    }
}

fn base32_value(b: u8) -> Option<u8> {
    BASE32.iter().position(|&c| c == b).map(|i| i as u8)
}

fn check_precision(precision: usize) -> Result<()> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(Error::Argument(format!(
            "geohash precision {precision} outside [1, {MAX_PRECISION}]"
        )));
    }
    Ok(())
}

/// Interleaved bisection bits, longitude first. A coordinate on a midpoint
/// goes to the upper half.
fn interleaved_bits(p: GeoPoint, n_bits: usize) -> impl Iterator<Item = bool> {
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    (0..n_bits).map(move |i| {
        let (value, lo, hi) = if i % 2 == 0 {
            (p.lon, &mut lon_lo, &mut lon_hi)
        } else {
            (p.lat, &mut lat_lo, &mut lat_hi)
        };
        let mid = 0.5 * (*lo + *hi);
        if value >= mid {
            *lo = mid;
            true
        } else {
            *hi = mid;
            false
        }
    })
}

pub fn geohash_encode(p: GeoPoint, precision: usize) -> Result<GeoHashCode> {
    check_precision(precision)?;
    let mut code = String::with_capacity(precision);
    let mut digit = 0u8;
    for (i, bit) in interleaved_bits(p, 5 * precision).enumerate() {
        digit = (digit << 1) | u8::from(bit);
        if i % 5 == 4 {
            code.push(BASE32[digit as usize] as char);
            digit = 0;
        }
    }
    Ok(GeoHashCode(code))
}

pub fn geohash_decode(code: &GeoHashCode) -> GeoHashCell {
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let mut even = true;
    for b in code.0.bytes() {
        // Validated at construction.
        let digit = base32_value(b).expect("geohash alphabet");
        for shift in (0..5).rev() {
            let bit = (digit >> shift) & 1 == 1;
            let (lo, hi) = if even {
                (&mut lon_lo, &mut lon_hi)
            } else {
                (&mut lat_lo, &mut lat_hi)
            };
            let mid = 0.5 * (*lo + *hi);
            if bit {
                *lo = mid;
            } else {
                *hi = mid;
            }
            even = !even;
        }
    }
    GeoHashCell {
        center: GeoPoint {
            lat: 0.5 * (lat_lo + lat_hi),
            lon: 0.5 * (lon_lo + lon_hi),
        },
        lat_err: 0.5 * (lat_hi - lat_lo),
        lon_err: 0.5 * (lon_hi - lon_lo),
    }
}

/// Interleaved GeoHash bits of `p` as a 0/1 vector of length `5 * precision`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationEmbedding(Vec<f64>);

impl LocationEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn location_embedding(p: GeoPoint, precision: usize) -> Result<LocationEmbedding> {
    check_precision(precision)?;
    Ok(LocationEmbedding(
        interleaved_bits(p, 5 * precision)
            .map(|b| if b { 1.0 } else { 0.0 })
            .collect(),
    ))
}

pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Initial great-circle bearing from `from` to `to`, clockwise from north.
pub fn azimuth_deg(from: GeoPoint, to: GeoPoint) -> Result<f64> {
    if from == to {
        return Err(Error::Degenerate(format!(
            "azimuth between coincident points {from}"
        )));
    }
    let (phi1, phi2) = (from.lat.to_radians(), to.lat.to_radians());
    let dlambda = (to.lon - from.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    Ok(normalize_deg(y.atan2(x).to_degrees()))
}

/// Wraps an angle into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Great-circle forward solution: the point `dis_km` away along bearing `deg`.
pub fn displace(from: GeoPoint, dis_km: f64, deg: f64) -> Result<GeoPoint> {
    if !(dis_km >= 0.0) || !dis_km.is_finite() {
        return Err(Error::Argument(format!("displacement {dis_km} km")));
    }
    if !deg.is_finite() {
        return Err(Error::Argument(format!("bearing {deg}")));
    }
    if dis_km == 0.0 {
        return Ok(from);
    }
    let delta = dis_km / EARTH_RADIUS_KM;
    let theta = deg.to_radians();
    let phi1 = from.lat.to_radians();
    let lambda1 = from.lon.to_radians();
    let sin_phi2 = phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos();
    let phi2 = sin_phi2.clamp(-1.0, 1.0).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint::new(phi2.to_degrees(), lon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn rejects_out_of_range_points() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn encode_reference_vectors() {
        assert_eq!(
            geohash_encode(pt(57.64911, 10.40744), 11).unwrap().as_str(),
            "u4pruydqqvj"
        );
        assert_eq!(geohash_encode(pt(90.0, 180.0), 4).unwrap().as_str(), "zzzz");
        assert_eq!(geohash_encode(pt(0.0, 0.0), 1).unwrap().as_str(), "s");
    }

    #[test]
    fn encode_rejects_bad_precision() {
        assert!(geohash_encode(pt(0.0, 0.0), 0).is_err());
        assert!(geohash_encode(pt(0.0, 0.0), 17).is_err());
    }

    #[test]
    fn decode_single_char() {
        let cell = geohash_decode(&GeoHashCode::parse("s").unwrap());
        assert_eq!(cell.center, pt(22.5, 22.5));
        assert_eq!(cell.lat_err, 22.5);
        assert_eq!(cell.lon_err, 22.5);
    }

    #[test]
    fn decode_max_corner() {
        let cell = geohash_decode(&GeoHashCode::parse("zzzz").unwrap());
        assert!(cell.center.lat() < 90.0 && cell.center.lat() > 90.0 - 2.0 * cell.lat_err);
        assert!(cell.center.lon() < 180.0 && cell.center.lon() > 180.0 - 2.0 * cell.lon_err);
        assert!(cell.contains(pt(90.0, 180.0)));
    }

    #[test]
    fn parse_rejects_foreign_characters() {
        assert!(matches!(GeoHashCode::parse("abc"), Err(Error::Parse(_))));
        assert!(GeoHashCode::parse("").is_err());
    }

    #[test]
    fn embedding_corners() {
        assert_eq!(
            location_embedding(pt(90.0, 180.0), 2).unwrap().as_slice(),
            &[1.0; 10]
        );
        assert_eq!(
            location_embedding(pt(-90.0, -180.0), 2).unwrap().as_slice(),
            &[0.0; 10]
        );
        assert_eq!(
            location_embedding(pt(0.0, 0.0), 1).unwrap().as_slice(),
            // lon 0 >= 0, lat 0 >= 0, then both fall in the lower halves: 11000 = 24 = 's'.
            &[1.0, 1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn haversine_examples() {
        let a = pt(0.0, 0.0);
        assert_eq!(haversine_km(a, a), 0.0);
        let d = haversine_km(a, pt(0.0, 1.0));
        assert!((d - EARTH_RADIUS_KM * 1f64.to_radians()).abs() < 1e-9);
        assert!((d - 111.195).abs() < 0.01);
    }

    #[test]
    fn azimuth_cardinals() {
        let o = pt(0.0, 0.0);
        assert!(azimuth_deg(o, pt(1.0, 0.0)).unwrap().abs() < 1e-12);
        assert!((azimuth_deg(o, pt(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-12);
        assert!((azimuth_deg(o, pt(-1.0, 0.0)).unwrap() - 180.0).abs() < 1e-12);
        assert!(matches!(azimuth_deg(o, o), Err(Error::Degenerate(_))));
    }

    #[test]
    fn displace_examples() {
        let o = pt(0.0, 0.0);
        assert_eq!(displace(o, 0.0, 123.0).unwrap(), o);
        let p = displace(o, 111.195, 0.0).unwrap();
        assert!((p.lat() - 1.0).abs() < 1e-4 && p.lon().abs() < 1e-12);
        assert!(displace(o, -1.0, 0.0).is_err());
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-90.0..=90.0f64, -180.0..=180.0f64).prop_map(|(a, b)| pt(a, b))
    }

    proptest! {
        #[test]
        fn decode_contains_encoded_point(p in point(), k in 1usize..=12) {
            let code = geohash_encode(p, k).unwrap();
            let cell = geohash_decode(&code);
            prop_assert!(cell.contains(p));
            prop_assert_eq!(geohash_encode(cell.center, k).unwrap(), code);
        }

        #[test]
        fn embedding_is_prefix_stable(p in point(), k in 1usize..MAX_PRECISION) {
            let short = location_embedding(p, k).unwrap();
            let long = location_embedding(p, k + 1).unwrap();
            prop_assert_eq!(short.as_slice(), &long.as_slice()[..5 * k]);
        }

        #[test]
        fn distance_is_symmetric(a in point(), b in point()) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
        }

        #[test]
        fn displace_inverts_distance_and_bearing(
            lat in -60.0..60.0f64,
            lon in -170.0..170.0f64,
            d in 0.01..50.0f64,
            deg in 0.0..360.0f64,
        ) {
            let from = pt(lat, lon);
            let to = displace(from, d, deg).unwrap();
            prop_assert!((haversine_km(from, to) - d).abs() < 1e-6);
            let back = azimuth_deg(from, to).unwrap();
            let diff = (back - deg).abs();
            prop_assert!(diff.min(360.0 - diff) < 1e-6);
            prop_assert!((0.0..360.0).contains(&back));
        }
    }
}
