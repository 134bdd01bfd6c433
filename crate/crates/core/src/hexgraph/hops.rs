use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{empty_row, HexGrid, Level, MultiviewGraph, ViewFeatures};
use crate::error::{Error, Result};

/// Multi-hop relay channel between cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopVisibility {
    pub delay_min_ms: f64,
    pub delay_max_ms: f64,
    pub budget_ms: f64,
}

impl Default for HopVisibility {
    fn default() -> Self {
        Self {
            delay_min_ms: 50.0,
            delay_max_ms: 200.0,
            budget_ms: 1000.0,
        }
    }
}

impl HopVisibility {
    /// Hops that always fit the budget, even at the worst per-hop delay.
    pub fn max_hops(&self) -> usize {
        (self.budget_ms / self.delay_max_ms).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.delay_min_ms && self.delay_min_ms <= self.delay_max_ms)
            || !self.budget_ms.is_finite()
        {
            return Err(Error::Argument(format!("invalid hop channel {self:?}")));
        }
        Ok(())
    }
}

/// Which cells of `grid` the vehicle in `ego` hears from.
///
/// Each edge gets a delay drawn from the channel range (same draws for every
/// ego under one seed); a cell is visible when the summed delay along its
/// breadth-first path from the ego fits the budget.
pub fn visible_cells(grid: &HexGrid, ego: usize, vis: &HopVisibility, seed: u64) -> Result<Vec<bool>> {
    vis.validate()?;
    if ego >= grid.len() {
        return Err(Error::OutOfDomain(format!("ego cell {ego} not in grid")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = grid.edges();
    let mut delay = std::collections::HashMap::with_capacity(edges.len());
    for (a, b) in edges {
        let d = if vis.delay_max_ms > vis.delay_min_ms {
            rng.random_range(vis.delay_min_ms..=vis.delay_max_ms)
        } else {
            vis.delay_min_ms
        };
        delay.insert((a, b), d);
    }

    let mut total = vec![f64::INFINITY; grid.len()];
    total[ego] = 0.0;
    let mut queue = VecDeque::from([ego]);
    let mut seen = vec![false; grid.len()];
    seen[ego] = true;
    while let Some(u) = queue.pop_front() {
        for &v in grid.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                total[v] = total[u] + delay[&(u.min(v), u.max(v))];
                queue.push_back(v);
            }
        }
    }
    Ok(total
        .iter()
        .enumerate()
        .map(|(i, &t)| i == ego || t <= vis.budget_ms)
        .collect())
}

impl MultiviewGraph {
    /// Replaces rows of cells the ego cannot hear from with empty-cell
    /// defaults. `ego` holds the ego cell index per view.
    pub fn restrict_by_hops(
        &self,
        raw: &ViewFeatures,
        ego: [usize; 3],
        vis: &HopVisibility,
        seed: u64,
    ) -> Result<ViewFeatures> {
        let mut out = raw.clone();
        for level in Level::ALL {
            let k = level.index();
            let visible = visible_cells(self.grid(level), ego[k], vis, seed.wrapping_add(k as u64))?;
            let x = out.get_mut(level);
            let cols = level.feature_dim();
            for (i, _) in visible.iter().enumerate().filter(|(_, v)| !**v) {
                x.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(&empty_row(self, level, i));
            }
        }
        Ok(out)
    }
}
