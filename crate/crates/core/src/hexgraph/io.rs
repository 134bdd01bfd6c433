//! Plain-text grid format.
//!
//! ```text
//! hexgrid 1
//! bbox <south> <west> <north> <east>
//! view <level> <diameter_km>
//! cell <q> <r> <lat> <lon>
//! edge <i> <j>
//! ```
//!
//! One `view` line starts each level, in micro, meso, macro order; `cell` and
//! `edge` lines that follow belong to it. Edge endpoints index the view's
//! cells in listed order. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{HexCell, HexGrid, Level, MultiviewGraph, ViewSpec};
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint};

pub fn to_text(graph: &MultiviewGraph) -> String {
    let mut out = String::from("hexgrid 1\n");
    let bbox = graph.bbox();
    let _ = writeln!(
        out,
        "bbox {} {} {} {}",
        bbox.south_west.lat(),
        bbox.south_west.lon(),
        bbox.north_east.lat(),
        bbox.north_east.lon()
    );
    for grid in graph.grids() {
        let _ = writeln!(out, "view {} {}", grid.level(), grid.spec().cell_diameter_km);
        for c in grid.cells() {
            let _ = writeln!(out, "cell {} {} {} {}", c.q, c.r, c.center.lat(), c.center.lon());
        }
        for (a, b) in grid.edges() {
            let _ = writeln!(out, "edge {a} {b}");
        }
    }
    out
}

struct View {
    spec: ViewSpec,
    cells: Vec<HexCell>,
    edges: Vec<(usize, usize)>,
}

pub fn from_text(text: &str) -> Result<MultiviewGraph> {
    let mut bbox = None;
    let mut views: Vec<View> = Vec::new();
    let mut header = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse(format!("line {}: {m}", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("expected a number"))
        };
        let int = |i: usize| -> Result<i64> {
            fields
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("expected an integer"))
        };
        match fields[0] {
            "hexgrid" if !header => {
                if fields.get(1) != Some(&"1") {
                    return Err(err("unsupported grid format version"));
                }
                header = true;
            }
            _ if !header => return Err(err("missing `hexgrid 1` header")),
            "bbox" => {
                let sw = GeoPoint::new(num(1)?, num(2)?)?;
                let ne = GeoPoint::new(num(3)?, num(4)?)?;
                bbox = Some(BoundingBox::new(sw, ne)?);
            }
            "view" => {
                let level: Level = fields.get(1).ok_or_else(|| err("missing level"))?.parse()?;
                views.push(View {
                    spec: ViewSpec::new(level, num(2)?)?,
                    cells: Vec::new(),
                    edges: Vec::new(),
                });
            }
            "cell" => {
                let view = views.last_mut().ok_or_else(|| err("cell before view"))?;
                let coord = |i| i32::try_from(int(i)?).map_err(|_| err("coordinate out of range"));
                view.cells.push(HexCell {
                    view: view.spec.level,
                    q: coord(1)?,
                    r: coord(2)?,
                    center: GeoPoint::new(num(3)?, num(4)?)?,
                });
            }
            "edge" => {
                let view = views.last_mut().ok_or_else(|| err("edge before view"))?;
                let index = |i| usize::try_from(int(i)?).map_err(|_| err("negative index"));
                view.edges.push((index(1)?, index(2)?));
            }
            other => return Err(err(&format!("unknown record {other:?}"))),
        }
    }
    let bbox = bbox.ok_or_else(|| Error::Parse("missing bbox line".into()))?;
    let [a, b, c]: [View; 3] = views
        .try_into()
        .map_err(|v: Vec<View>| Error::Parse(format!("expected 3 views, found {}", v.len())))?;
    let grids = [a, b, c].map(|v| HexGrid::from_parts(bbox, v.spec, v.cells, &v.edges));
    let [ga, gb, gc] = grids;
    let grids = [ga?, gb?, gc?];
    for (g, level) in grids.iter().zip(Level::ALL) {
        if g.level() != level {
            return Err(Error::Parse("views must be listed micro, meso, macro".into()));
        }
    }
    MultiviewGraph::from_grids(grids)
}

pub fn save(graph: &MultiviewGraph, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(graph)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<MultiviewGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let bbox = BoundingBox::new(
            GeoPoint::new(30.0, 120.0).unwrap(),
            GeoPoint::new(30.13, 120.17).unwrap(),
        )
        .unwrap();
        let g = MultiviewGraph::build(bbox, ViewSpec::defaults()).unwrap();
        let text = to_text(&g);
        let back = from_text(&text).unwrap();
        assert_eq!(to_text(&back), text);
        for level in Level::ALL {
            assert_eq!(back.grid(level).cells(), g.grid(level).cells());
            assert_eq!(back.grid(level).edges(), g.grid(level).edges());
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(from_text("").is_err());
        assert!(from_text("hexgrid 2\n").is_err());
        assert!(from_text("hexgrid 1\nbbox 0 0 1 1\nview micro 2\ncell 0 x 0 0\n").is_err());
        assert!(from_text("hexgrid 1\nbbox 0 0 1 1\nview micro 2\n").is_err());
    }
}
