//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hexfleet_core::geo::{BoundingBox, GeoPoint};
use hexfleet_core::hexgraph::HexGrid;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SQRT3: f64 = 1.732_050_807_568_877_2;

pub fn bbox(s: f64, w: f64, n: f64, e: f64) -> BoundingBox {
    BoundingBox::new(GeoPoint::new(s, w).unwrap(), GeoPoint::new(n, e).unwrap()).unwrap()
}

pub fn bboxes() -> [BoundingBox; 3] {
    [
        // 15 x 15 km city.
        bbox(30.2, 120.1, 30.334_9, 120.255_6),
        // Long thin strip.
        bbox(40.70, -74.02, 40.73, -73.80),
        // Smaller than one macro cell.
        bbox(-33.90, 151.20, -33.88, 151.22),
    ]
}

/// Pointy-top axial layout, corner radius `size`.
pub fn center(q: i32, r: i32, size: f64) -> (f64, f64) {
    (size * SQRT3 * (q as f64 + r as f64 / 2.0), size * 1.5 * r as f64)
}

pub fn corners(q: i32, r: i32, size: f64) -> Vec<(f64, f64)> {
    let (cx, cy) = center(q, r, size);
    (0..6)
        .map(|k| {
            let a = (30.0 + 60.0 * k as f64).to_radians();
            (cx + size * a.cos(), cy + size * a.sin())
        })
        .collect()
}

/// Separating-axis test: two convex polygons share positive area iff their
/// projections overlap by a positive length on every edge normal.
pub fn overlaps_with_area(hex: &[(f64, f64)], rect: [(f64, f64); 4]) -> bool {
    let mut axes: Vec<(f64, f64)> = vec![(1.0, 0.0), (0.0, 1.0)];
    for k in 0..3 {
        let a = (60.0 * k as f64).to_radians();
        axes.push((a.cos(), a.sin()));
    }
    axes.iter().all(|&(ax, ay)| {
        let proj = |pts: &[(f64, f64)]| {
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                let d = x * ax + y * ay;
                (lo.min(d), hi.max(d))
            })
        };
        let (a0, a1) = proj(hex);
        let (b0, b1) = proj(&rect);
        a1.min(b1) - a0.max(b0) > 1e-9
    })
}

pub fn rect_xy(grid: &HexGrid) -> [(f64, f64); 4] {
    let b = grid.bbox();
    let (x0, y0) = grid.projection().to_xy(b.south_west);
    let (x1, y1) = grid.projection().to_xy(b.north_east);
    [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

/// Every `(q, r)` whose hexagon overlaps the grid's box with positive area.
pub fn enumerate_cells(grid: &HexGrid) -> BTreeSet<(i32, i32)> {
    let size = grid.spec().cell_diameter_km / 2.0;
    let rect = rect_xy(grid);
    let mut out = BTreeSet::new();
    for q in -40..=40 {
        for r in -40..=40 {
            if overlaps_with_area(&corners(q, r, size), rect) {
                out.insert((q, r));
            }
        }
    }
    out
}

pub fn random_point(b: &BoundingBox, rng: &mut ChaCha8Rng) -> GeoPoint {
    GeoPoint::new(
        rng.random_range(b.south_west.lat()..b.north_east.lat()),
        rng.random_range(b.south_west.lon()..b.north_east.lon()),
    )
    .unwrap()
}

/// Index of the cell whose full-hexagon center is nearest to `p`.
pub fn nearest_cell(grid: &HexGrid, p: GeoPoint) -> usize {
    let size = grid.spec().cell_diameter_km / 2.0;
    let (x, y) = grid.projection().to_xy(p);
    let d = |q: i32, r: i32| {
        let (cx, cy) = center(q, r, size);
        (cx - x).hypot(cy - y)
    };
    (0..grid.len())
        .min_by(|&a, &b| {
            let (ca, cb) = (grid.cells()[a], grid.cells()[b]);
            d(ca.q, ca.r).total_cmp(&d(cb.q, cb.r))
        })
        .unwrap()
}

/// Cells whose hexagon contains `p`, by direct containment tests.
pub fn owners(grid: &HexGrid, p: GeoPoint) -> Vec<usize> {
    let (x, y) = grid.projection().to_xy(p);
    (0..grid.len())
        .filter(|&i| {
            let c = grid.cells()[i];
            grid.hex_contains_xy(c.q, c.r, x, y)
        })
        .collect()
}

/// Whether every corner of the cell's hexagon lies strictly inside the box.
pub fn fully_inside(grid: &HexGrid, cell: usize) -> bool {
    let c = grid.cells()[cell];
    let [(x0, y0), _, (x1, y1), _] = rect_xy(grid);
    corners(c.q, c.r, grid.spec().cell_diameter_km / 2.0)
        .iter()
        .all(|&(x, y)| x > x0 && x < x1 && y > y0 && y < y1)
}
