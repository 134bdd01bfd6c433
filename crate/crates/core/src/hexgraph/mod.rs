//! Multiview honeycomb graphs and their per-cell traffic features.

mod features;
mod grid;
mod hops;
pub mod io;

use std::fmt;
use std::str::FromStr;

pub use features::{empty_row, FeatureNormalizer, ViewFeatures, DEFAULT_TRIP_WINDOW_S};
pub use grid::{HexCell, HexGrid, Projection, AXIAL_DIRECTIONS};
pub use hops::{visible_cells, HopVisibility};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geo::{BoundingBox, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Micro,
    Meso,
    Macro,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Micro, Level::Meso, Level::Macro];

    pub fn feature_dim(self) -> usize {
        match self {
            Level::Micro => 3,
            Level::Meso => 4,
            Level::Macro => 3,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Micro => "micro",
            Level::Meso => "meso",
            Level::Macro => "macro",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Level::Micro),
            "meso" => Ok(Level::Meso),
            "macro" => Ok(Level::Macro),
            other => Err(Error::Parse(format!("unknown view level {other:?}"))),
        }
    }
}

/// Level and cell size of one view.
///
/// Levels are banded by cell radius (half the diameter): micro at most 1 km,
/// meso strictly between 1 and 5 km, macro at least 5 km. The default 2, 5
/// and 10 km diameters sit in the three bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    pub level: Level,
    pub cell_diameter_km: f64,
}

impl ViewSpec {
    pub fn new(level: Level, cell_diameter_km: f64) -> Result<Self> {
        if !(cell_diameter_km.is_finite() && cell_diameter_km > 0.0) {
            return Err(Error::Argument(format!(
                "cell diameter must be positive, got {cell_diameter_km}"
            )));
        }
        let radius = cell_diameter_km / 2.0;
        let in_band = match level {
            Level::Micro => radius <= 1.0,
            Level::Meso => radius > 1.0 && radius < 5.0,
            Level::Macro => radius >= 5.0,
        };
        if !in_band {
            return Err(Error::Argument(format!(
                "{cell_diameter_km} km cells are outside the {level} radius band"
            )));
        }
        Ok(Self {
            level,
            cell_diameter_km,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.level.feature_dim()
    }

    pub fn defaults() -> [ViewSpec; 3] {
        [
            ViewSpec::new(Level::Micro, 2.0).expect("default"),
            ViewSpec::new(Level::Meso, 5.0).expect("default"),
            ViewSpec::new(Level::Macro, 10.0).expect("default"),
        ]
    }
}

/// The three views over one bounding box, in micro, meso, macro order.
#[derive(Debug, Clone)]
pub struct MultiviewGraph {
    grids: [HexGrid; 3],
    /// Macro cell of each micro cell's representative point.
    micro_to_macro: Vec<usize>,
    trip_window_s: f64,
}

impl MultiviewGraph {
    pub fn build(bbox: BoundingBox, specs: [ViewSpec; 3]) -> Result<Self> {
        for (spec, level) in specs.iter().zip(Level::ALL) {
            if spec.level != level {
                return Err(Error::Argument(format!(
                    "view specs must be ordered micro, meso, macro; found {} in the {level} slot",
                    spec.level
                )));
            }
        }
        let grids = [
            HexGrid::build(bbox, specs[0])?,
            HexGrid::build(bbox, specs[1])?,
            HexGrid::build(bbox, specs[2])?,
        ];
        Self::from_grids(grids)
    }

    pub(crate) fn from_grids(grids: [HexGrid; 3]) -> Result<Self> {
        let micro_to_macro = grids[0]
            .cells()
            .iter()
            .map(|c| grids[2].locate(c.center))
            .collect::<Result<_>>()?;
        Ok(Self {
            grids,
            micro_to_macro,
            trip_window_s: DEFAULT_TRIP_WINDOW_S,
        })
    }

    pub fn with_trip_window(mut self, seconds: f64) -> Self {
        self.trip_window_s = seconds;
        self
    }

    pub fn trip_window_s(&self) -> f64 {
        self.trip_window_s
    }

    pub fn bbox(&self) -> BoundingBox {
        self.grids[0].bbox()
    }

    pub fn grid(&self, level: Level) -> &HexGrid {
        &self.grids[level.index()]
    }

    pub fn grids(&self) -> &[HexGrid; 3] {
        &self.grids
    }

    pub fn specs(&self) -> [ViewSpec; 3] {
        [
            self.grids[0].spec(),
            self.grids[1].spec(),
            self.grids[2].spec(),
        ]
    }

    pub(crate) fn micro_to_macro(&self) -> &[usize] {
        &self.micro_to_macro
    }

    pub fn point_to_cell(&self, p: GeoPoint, level: Level) -> Result<HexCell> {
        self.grid(level).point_to_cell(p)
    }

    /// Cell index of `p` in every view.
    pub fn locate_all(&self, p: GeoPoint) -> Result<[usize; 3]> {
        Ok([
            self.grids[0].locate(p)?,
            self.grids[1].locate(p)?,
            self.grids[2].locate(p)?,
        ])
    }

    pub fn adjacency(&self, level: Level, self_loops: bool) -> Tensor {
        self.grid(level).adjacency(self_loops)
    }
}
