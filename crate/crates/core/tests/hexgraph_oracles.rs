//! Hex tilings checked against brute-force enumeration and nearest-center
//! search that share no code with the grid builder.

mod common;

use common::{bboxes, center, enumerate_cells, fully_inside, nearest_cell, owners, random_point};
use hexfleet_core::hexgraph::{HexGrid, ViewSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn layout_matches_the_axial_formula() {
    for spec in ViewSpec::defaults() {
        let grid = HexGrid::build(bboxes()[0], spec).unwrap();
        for (q, r) in [(0, 0), (1, 0), (0, 1), (-2, 3)] {
            let (x, y) = grid.hex_center_xy(q, r);
            let (ex, ey) = center(q, r, spec.cell_diameter_km / 2.0);
            assert!((x - ex).abs() < 1e-9 && (y - ey).abs() < 1e-9, "({q},{r})");
        }
    }
}

#[test]
fn node_sets_match_enumeration() {
    for b in bboxes() {
        for spec in ViewSpec::defaults() {
            let grid = HexGrid::build(b, spec).unwrap();
            let got: std::collections::BTreeSet<(i32, i32)> = grid.cells().iter().map(|c| (c.q, c.r)).collect();
            assert_eq!(got, enumerate_cells(&grid), "{b:?} at {} km", spec.cell_diameter_km);
        }
    }
}

#[test]
fn locate_returns_the_nearest_center() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for b in bboxes() {
        for spec in ViewSpec::defaults() {
            let grid = HexGrid::build(b, spec).unwrap();
            for _ in 0..1000 {
                let p = random_point(&b, &mut rng);
                assert_eq!(grid.locate(p).unwrap(), nearest_cell(&grid, p));
            }
        }
    }
}

#[test]
fn every_point_falls_in_exactly_one_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let b = bboxes()[0];
    for spec in ViewSpec::defaults() {
        let grid = HexGrid::build(b, spec).unwrap();
        for _ in 0..10_000 {
            let p = random_point(&b, &mut rng);
            // Random points land on a shared edge with probability zero.
            assert_eq!(owners(&grid, p), vec![grid.locate(p).unwrap()]);
        }
    }
}

#[test]
fn cells_inside_the_box_have_six_neighbors() {
    for b in bboxes() {
        for spec in ViewSpec::defaults() {
            let grid = HexGrid::build(b, spec).unwrap();
            for i in 0..grid.len() {
                if fully_inside(&grid, i) {
                    assert_eq!(grid.degree(i), 6);
                }
                assert!(grid.degree(i) <= 6);
            }
        }
    }
}
