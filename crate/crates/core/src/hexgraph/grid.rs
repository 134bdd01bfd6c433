use std::collections::HashMap;

use super::{Level, ViewSpec};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint, EARTH_RADIUS_KM};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Axial offsets of the six side-sharing neighbors.
pub const AXIAL_DIRECTIONS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

/// Local equirectangular projection to kilometers around an origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    origin: GeoPoint,
    km_per_deg_lat: f64,
    km_per_deg_lon: f64,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        let km_per_deg_lat = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        Self {
            origin,
            km_per_deg_lat,
            km_per_deg_lon: km_per_deg_lat * origin.lat().to_radians().cos(),
        }
    }

    pub fn to_xy(&self, p: GeoPoint) -> (f64, f64) {
        (
            (p.lon() - self.origin.lon()) * self.km_per_deg_lon,
            (p.lat() - self.origin.lat()) * self.km_per_deg_lat,
        )
    }

    pub fn to_geo(&self, x: f64, y: f64) -> Result<GeoPoint> {
        GeoPoint::new(
            self.origin.lat() + y / self.km_per_deg_lat,
            self.origin.lon() + x / self.km_per_deg_lon,
        )
    }
}

/// One hexagon of a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexCell {
    pub view: Level,
    pub q: i32,
    pub r: i32,
    /// Representative point: centroid of the part of the hexagon inside the
    /// bounding box (equals the hexagon center for fully interior cells).
    pub center: GeoPoint,
}

/// Pointy-top hexagonal tiling of a bounding box at one view level.
///
/// The cell diameter is corner to corner; cell `(0, 0)` is centered on the
/// box center. Cells are the hexagons overlapping the box with positive area,
/// sorted by `(q, r)`.
#[derive(Debug, Clone)]
pub struct HexGrid {
    spec: ViewSpec,
    bbox: BoundingBox,
    projection: Projection,
    cells: Vec<HexCell>,
    index: HashMap<(i32, i32), usize>,
    neighbors: Vec<Vec<usize>>,
}

impl HexGrid {
    pub fn build(bbox: BoundingBox, spec: ViewSpec) -> Result<Self> {
        let projection = Projection::new(bbox.center());
        let size = spec.cell_diameter_km / 2.0;
        let (x0, y0) = projection.to_xy(bbox.south_west);
        let (x1, y1) = projection.to_xy(bbox.north_east);
        let rect = Rect { x0, y0, x1, y1 };

        let r_min = ((y0 - size) / (1.5 * size)).floor() as i32 - 1;
        let r_max = ((y1 + size) / (1.5 * size)).ceil() as i32 + 1;
        let mut cells = Vec::new();
        for r in r_min..=r_max {
            let shift = f64::from(r) / 2.0;
            let q_min = ((x0 - size) / (SQRT3 * size) - shift).floor() as i32 - 1;
            let q_max = ((x1 + size) / (SQRT3 * size) - shift).ceil() as i32 + 1;
            for q in q_min..=q_max {
                let polygon = clip_to_rect(&hexagon(axial_to_xy(q, r, size), size), rect);
                if let Some((cx, cy)) = centroid(&polygon) {
                    let center = bbox.clamp(projection.to_geo(cx, cy)?);
                    cells.push(HexCell {
                        view: spec.level,
                        q,
                        r,
                        center,
                    });
                }
            }
        }
        cells.sort_by_key(|c| (c.q, c.r));
        let index: HashMap<_, _> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.q, c.r), i))
            .collect();
        let neighbors = cells
            .iter()
            .map(|c| {
                let mut ns: Vec<usize> = AXIAL_DIRECTIONS
                    .iter()
                    .filter_map(|(dq, dr)| index.get(&(c.q + dq, c.r + dr)).copied())
                    .collect();
                ns.sort_unstable();
                ns
            })
            .collect();
        Ok(Self {
            spec,
            bbox,
            projection,
            cells,
            index,
            neighbors,
        })
    }

    /// Rebuilds a grid from explicit cells and edges (see [`super::io`]).
    pub(crate) fn from_parts(
        bbox: BoundingBox,
        spec: ViewSpec,
        cells: Vec<HexCell>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        let index: HashMap<_, _> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.q, c.r), i))
            .collect();
        if index.len() != cells.len() {
            return Err(Error::Parse("duplicate cell coordinates".into()));
        }
        let mut neighbors = vec![Vec::new(); cells.len()];
        for &(a, b) in edges {
            if a >= cells.len() || b >= cells.len() || a == b {
                return Err(Error::Parse(format!("invalid edge {a} {b}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for ns in &mut neighbors {
            ns.sort_unstable();
            ns.dedup();
        }
        Ok(Self {
            spec,
            bbox,
            projection: Projection::new(bbox.center()),
            cells,
            index,
            neighbors,
        })
    }

    pub fn spec(&self) -> ViewSpec {
        self.spec
    }

    pub fn level(&self) -> Level {
        self.spec.level
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn cells(&self) -> &[HexCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_index(&self, q: i32, r: i32) -> Option<usize> {
        self.index.get(&(q, r)).copied()
    }

    pub fn neighbors(&self, cell: usize) -> &[usize] {
        &self.neighbors[cell]
    }

    pub fn degree(&self, cell: usize) -> usize {
        self.neighbors[cell].len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            edges.extend(ns.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        edges
    }

    /// Symmetric 0/1 adjacency, plus the identity when `self_loops` is set.
    pub fn adjacency(&self, self_loops: bool) -> Tensor {
        let n = self.cells.len();
        let mut a = Tensor::zeros(n, n);
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                a.data_mut()[i * n + j] = 1.0;
            }
            if self_loops {
                a.data_mut()[i * n + i] = 1.0;
            }
        }
        a
    }

    /// Planar center of the full hexagon `(q, r)`, in kilometers.
    pub fn hex_center_xy(&self, q: i32, r: i32) -> (f64, f64) {
        axial_to_xy(q, r, self.spec.cell_diameter_km / 2.0)
    }

    /// Whether the hexagon `(q, r)` contains planar point `(x, y)`, with a
    /// small tolerance so shared edges belong to both sides.
    pub fn hex_contains_xy(&self, q: i32, r: i32, x: f64, y: f64) -> bool {
        let size = self.spec.cell_diameter_km / 2.0;
        let (cx, cy) = axial_to_xy(q, r, size);
        hex_contains(cx, cy, size, x, y, 1e-9)
    }

    /// Index of the cell containing `p`. Points on shared edges go to the
    /// lexicographically smallest `(q, r)`.
    pub fn locate(&self, p: GeoPoint) -> Result<usize> {
        if !self.bbox.contains(p) {
            return Err(Error::OutOfDomain(format!(
                "{p} outside the {:?} grid bounding box",
                self.spec.level
            )));
        }
        let (x, y) = self.projection.to_xy(p);
        let size = self.spec.cell_diameter_km / 2.0;
        let (q0, r0) = xy_to_axial_rounded(x, y, size);
        let candidates = std::iter::once((0, 0))
            .chain(AXIAL_DIRECTIONS)
            .map(|(dq, dr)| (q0 + dq, r0 + dr));
        let mut best: Option<(i32, i32)> = None;
        for (q, r) in candidates {
            if self.index.contains_key(&(q, r)) && self.hex_contains_xy(q, r, x, y) {
                best = Some(best.map_or((q, r), |b| b.min((q, r))));
            }
        }
        if let Some(key) = best {
            return Ok(self.index[&key]);
        }
        // Numerically outside every candidate (corner of the box on a cell
        // that only grazes it): fall back to the nearest listed center.
        let nearest = self
            .cells
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = dist2(axial_to_xy(a.q, a.r, size), (x, y));
                let db = dist2(axial_to_xy(b.q, b.r, size), (x, y));
                da.total_cmp(&db).then((a.q, a.r).cmp(&(b.q, b.r)))
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::OutOfDomain("empty grid".into()))?;
        Ok(nearest)
    }

    pub fn point_to_cell(&self, p: GeoPoint) -> Result<HexCell> {
        Ok(self.cells[self.locate(p)?])
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

pub(crate) fn axial_to_xy(q: i32, r: i32, size: f64) -> (f64, f64) {
    let (q, r) = (f64::from(q), f64::from(r));
    (size * SQRT3 * (q + r / 2.0), size * 1.5 * r)
}

fn xy_to_axial_rounded(x: f64, y: f64, size: f64) -> (i32, i32) {
    let q = (SQRT3 / 3.0 * x - y / 3.0) / size;
    let r = (2.0 / 3.0 * y) / size;
    // cube rounding
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    (rq as i32, rr as i32)
}

pub(crate) fn hexagon(center: (f64, f64), size: f64) -> Vec<(f64, f64)> {
    (0..6)
        .map(|i| {
            let angle = (30.0 + 60.0 * f64::from(i)).to_radians();
            (center.0 + size * angle.cos(), center.1 + size * angle.sin())
        })
        .collect()
}

/// Pointy-top hexagon containment: inside all three slab pairs.
fn hex_contains(cx: f64, cy: f64, size: f64, x: f64, y: f64, tol: f64) -> bool {
    let (dx, dy) = (x - cx, y - cy);
    let apothem = size * SQRT3 / 2.0;
    // Edge normals at 0, 60, 120 degrees.
    [(1.0, 0.0), (0.5, SQRT3 / 2.0), (-0.5, SQRT3 / 2.0)]
        .iter()
        .all(|(nx, ny)| (dx * nx + dy * ny).abs() <= apothem + tol)
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

/// Sutherland-Hodgman clip of a convex polygon against an axis-aligned box.
fn clip_to_rect(polygon: &[(f64, f64)], rect: Rect) -> Vec<(f64, f64)> {
    let planes: [(fn((f64, f64), Rect) -> f64, (f64, f64)); 4] = [
        (|p, r| p.0 - r.x0, (1.0, 0.0)),
        (|p, r| r.x1 - p.0, (-1.0, 0.0)),
        (|p, r| p.1 - r.y0, (0.0, 1.0)),
        (|p, r| r.y1 - p.1, (0.0, -1.0)),
    ];
    let mut poly = polygon.to_vec();
    for (inside, _) in planes {
        if poly.is_empty() {
            break;
        }
        let mut out = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let cur = poly[i];
            let prev = poly[(i + poly.len() - 1) % poly.len()];
            let (dc, dp) = (inside(cur, rect), inside(prev, rect));
            if dc >= 0.0 {
                if dp < 0.0 {
                    out.push(lerp(prev, cur, dp / (dp - dc)));
                }
                out.push(cur);
            } else if dp >= 0.0 {
                out.push(lerp(prev, cur, dp / (dp - dc)));
            }
        }
        poly = out;
    }
    poly
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}

/// Area-weighted centroid; `None` for polygons of (near) zero area.
fn centroid(poly: &[(f64, f64)]) -> Option<(f64, f64)> {
    if poly.len() < 3 {
        return None;
    }
    let (mut area2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        let cross = x0 * y1 - x1 * y0;
        area2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if area2.abs() < 1e-9 {
        return None;
    }
    Some((cx / (3.0 * area2), cy / (3.0 * area2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(s: f64, w: f64, n: f64, e: f64) -> BoundingBox {
        BoundingBox::new(GeoPoint::new(s, w).unwrap(), GeoPoint::new(n, e).unwrap()).unwrap()
    }

    #[test]
    fn tiny_box_is_one_cell() {
        let spec = ViewSpec::new(Level::Meso, 5.0).unwrap();
        let grid = HexGrid::build(bbox(30.0, 120.0, 30.001, 120.001), spec).unwrap();
        assert_eq!(grid.len(), 1);
        assert!(grid.edges().is_empty());
        assert_eq!((grid.cells()[0].q, grid.cells()[0].r), (0, 0));
    }

    #[test]
    fn interior_cells_have_six_neighbors() {
        let spec = ViewSpec::new(Level::Micro, 2.0).unwrap();
        let grid = HexGrid::build(bbox(30.0, 120.0, 30.2, 120.2), spec).unwrap();
        let mut interior = 0;
        for (i, c) in grid.cells().iter().enumerate() {
            let surrounded = AXIAL_DIRECTIONS
                .iter()
                .all(|(dq, dr)| grid.cell_index(c.q + dq, c.r + dr).is_some());
            if surrounded {
                interior += 1;
                assert_eq!(grid.degree(i), 6);
            }
            assert!(grid.degree(i) <= 6);
        }
        assert!(interior > 10);
    }

    #[test]
    fn adjacency_is_symmetric_with_zero_diagonal() {
        let spec = ViewSpec::new(Level::Micro, 2.0).unwrap();
        let grid = HexGrid::build(bbox(30.0, 120.0, 30.1, 120.1), spec).unwrap();
        let a = grid.adjacency(false);
        let n = grid.len();
        for i in 0..n {
            assert_eq!(a.get(i, i), 0.0);
            for j in 0..n {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        let with_loops = grid.adjacency(true);
        assert!((0..n).all(|i| with_loops.get(i, i) == 1.0));
    }

    #[test]
    fn cell_centers_locate_to_their_cell() {
        let spec = ViewSpec::new(Level::Micro, 2.0).unwrap();
        let grid = HexGrid::build(bbox(30.0, 120.0, 30.1, 120.1), spec).unwrap();
        for (i, c) in grid.cells().iter().enumerate() {
            assert!(grid.bbox().contains(c.center));
            assert_eq!(grid.locate(c.center).unwrap(), i);
        }
    }

    #[test]
    fn outside_point_is_out_of_domain() {
        let spec = ViewSpec::new(Level::Micro, 2.0).unwrap();
        let grid = HexGrid::build(bbox(30.0, 120.0, 30.1, 120.1), spec).unwrap();
        let p = GeoPoint::new(31.0, 120.05).unwrap();
        assert!(matches!(grid.locate(p), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn clipping_keeps_interior_hexagon() {
        let hex = hexagon((0.0, 0.0), 1.0);
        let clipped = clip_to_rect(
            &hex,
            Rect {
                x0: -5.0,
                y0: -5.0,
                x1: 5.0,
                y1: 5.0,
            },
        );
        let (cx, cy) = centroid(&clipped).unwrap();
        assert!(cx.abs() < 1e-12 && cy.abs() < 1e-12);
    }
}
