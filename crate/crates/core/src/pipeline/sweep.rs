use super::config::RunConfig;
use super::train::{run_stage2, Prepared};
use crate::autodiff::ParamStore;
use crate::error::Result;
use crate::represent::ViewMask;

/// Test Error (km) of a stage-2 run per α, all from the same stage-1 store.
pub fn alpha_sweep(stage1: &ParamStore, prep: &Prepared, cfg: &RunConfig, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&alpha| {
            let run = RunConfig { alpha, ..cfg.clone() };
            let (_, report) = run_stage2(stage1, prep, &run, None)?;
            Ok((alpha, report.test.error_km))
        })
        .collect()
}

/// Test Error per view configuration and repetition; repetition `r` uses
/// seed `cfg.seed + r` for every configuration, so runs pair across
/// configurations.
pub fn view_ablation(stage1: &ParamStore, prep: &Prepared, cfg: &RunConfig, configs: &[ViewMask], reps: usize) -> Result<Vec<Vec<f64>>> {
    configs
        .iter()
        .map(|&views| {
            (0..reps)
                .map(|r| {
                    let run = RunConfig { views, seed: cfg.seed + r as u64, ..cfg.clone() };
                    Ok(run_stage2(stage1, prep, &run, None)?.1.test.error_km)
                })
                .collect()
        })
        .collect()
}
