use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hexfleet_core::autodiff::checkpoint;
use hexfleet_core::pipeline::{
    alpha_sweep, gradient_suite, load_stage1, load_trajectories, prepare, random_checkpoint, run_inference, run_stage1,
    run_stage2, save_trajectories, trajectories_from_world, view_ablation, Manifest, RunConfig,
};
use hexfleet_core::pipeline::gradients::TOLERANCE;
use hexfleet_core::sim::{generate_city, ratio_sweep, CityConfig, Metrics, World};

#[derive(Parser)]
#[command(name = "hexfleet", version, about = "Vehicle dispatching on multiview hex graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the two-hotspot city under driver behavior and write its trajectories.
    GenData,
    /// Stage 1: graph statistics, anchors and the behavior model.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
    },
    /// Stage 2 from a stage-1 checkpoint, or both stages without one.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        stage1: Option<PathBuf>,
    },
    /// Closed-loop dispatch on a generated city with a trained checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Also run a freshly initialized control with the same seeds.
        #[arg(long)]
        control: bool,
    },
    /// Policy-free baseline: drivers follow their own habits.
    Simulate,
    /// Empty-loaded and acceptance rates across vehicle-to-order ratios.
    SweepRatio {
        /// Vehicles per order.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1,2,5,10")]
        ratios: Vec<f64>,
    },
    /// Test Error of stage 2 for each reward mixing weight.
    SweepAlpha {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        alphas: Vec<f64>,
    },
    /// Test Error of stage 2 for each single view and for all views together.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        stage1: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Finite-difference check of every primitive and model block.
    GradCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Simulate => "simulate",
            Command::SweepRatio { .. } => "sweep-ratio",
            Command::SweepAlpha { .. } => "sweep-alpha",
            Command::Ablate { .. } => "ablate",
            Command::GradCheck => "grad-check",
        }
    }
}

fn city(cfg: &RunConfig) -> CityConfig {
    CityConfig { horizon_s: cfg.horizon_s, ..CityConfig::two_hotspot(cfg.vehicles, cfg.orders) }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn metrics_csv(rows: &[(&str, Metrics)]) -> String {
    let mut out = String::from("run,error_km,empty_loaded_rate,order_acceptance_rate\n");
    for (name, m) in rows {
        let err = m.error_km.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(out, "{name},{err},{},{}", m.empty_loaded_rate, m.order_acceptance_rate);
    }
    out
}

fn print_metrics(name: &str, m: &Metrics) {
    let err = m.error_km.map_or("n/a".to_string(), |e| format!("{e:.4} km"));
    println!(
        "{name}: error {err}, empty-loaded {:.4}, acceptance {:.4}",
        m.empty_loaded_rate, m.order_acceptance_rate
    );
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Manifest::new(cli.command.name(), &cfg).write(out)?;

    match cli.command {
        Command::GenData => {
            let mut world = generate_city(&city(&cfg), cfg.seed)?;
            world.drive()?;
            save_trajectories(&out.join("trajectories.csv"), &trajectories_from_world(&world))?;
            write(out, "sim_log.csv", &world.log_csv())?;
            println!("{} vehicles, {} orders, {} ticks", cfg.vehicles, cfg.orders, world.tick());
        }
        Command::Pretrain { data } => {
            let prep = prepare(&load_trajectories(&data)?, &cfg, None)?;
            let (store, report) = run_stage1(&prep, &cfg)?;
            checkpoint::save(&store, &out.join("stage1.ckpt"))?;
            let mut log = String::from("epoch,loss\n");
            for (e, l) in report.pretrain_loss.iter().enumerate() {
                let _ = writeln!(log, "{e},{l}");
            }
            write(out, "pretrain_log.csv", &log)?;
            println!("behavior model held-out AUC {:.4}", report.held_out_auc);
        }
        Command::Train { data, stage1 } => {
            let loaded = stage1.as_deref().map(load_stage1).transpose()?;
            let prep = prepare(&load_trajectories(&data)?, &cfg, None)?;
            let store = match loaded {
                Some(store) => store,
                None => {
                    let (store, report) = run_stage1(&prep, &cfg)?;
                    checkpoint::save(&store, &out.join("stage1.ckpt"))?;
                    println!("behavior model held-out AUC {:.4}", report.held_out_auc);
                    store
                }
            };
            let (model, report) = run_stage2(&store, &prep, &cfg, Some(&out.join("train_log.csv")))?;
            checkpoint::save(&model, &out.join("model.ckpt"))?;
            println!("test Error {:.4} km over {} steps", report.test.error_km, report.test.steps);
        }
        Command::Eval { model, control } => {
            let store = checkpoint::load(&model)?;
            let mut rows = Vec::new();
            let mut world = generate_city(&city(&cfg), cfg.seed)?;
            let trained = run_inference(&store, &cfg, &mut world)?;
            write(out, "eval_log.csv", &world.log_csv())?;
            rows.push(("trained", trained));
            if control {
                let random = random_checkpoint(&store, &cfg, cfg.seed)?;
                let mut world: World = generate_city(&city(&cfg), cfg.seed)?;
                rows.push(("control", run_inference(&random, &cfg, &mut world)?));
                write(out, "control_log.csv", &world.log_csv())?;
            }
            for (name, m) in &rows {
                print_metrics(name, m);
            }
            write(out, "metrics.csv", &metrics_csv(&rows))?;
        }
        Command::Simulate => {
            let mut world = generate_city(&city(&cfg), cfg.seed)?;
            let m = world.run_drivers()?;
            write(out, "sim_log.csv", &world.log_csv())?;
            write(out, "metrics.csv", &metrics_csv(&[("drivers", m)]))?;
            print_metrics("drivers", &m);
        }
        Command::SweepRatio { ratios } => {
            let rows = ratio_sweep(&city(&cfg), &ratios, cfg.seed)?;
            let mut csv = String::from("ratio,vehicles,orders,empty_loaded_rate,order_acceptance_rate\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    r.ratio, r.n_vehicles, r.n_orders, r.empty_loaded_rate, r.order_acceptance_rate
                );
                println!(
                    "ratio {:>5}: empty-loaded {:.4}, acceptance {:.4}",
                    r.ratio, r.empty_loaded_rate, r.order_acceptance_rate
                );
            }
            write(out, "ratio_sweep.csv", &csv)?;
        }
        Command::SweepAlpha { data, stage1, alphas } => {
            let prep = prepare(&load_trajectories(&data)?, &cfg, None)?;
            let rows = alpha_sweep(&load_stage1(&stage1)?, &prep, &cfg, &alphas)?;
            let mut csv = String::from("alpha,test_error_km\n");
            for (a, e) in &rows {
                let _ = writeln!(csv, "{a},{e}");
                println!("alpha {a:.2}: Error {e:.4} km");
            }
            write(out, "alpha_sweep.csv", &csv)?;
        }
        Command::Ablate { data, stage1, reps } => {
            let prep = prepare(&load_trajectories(&data)?, &cfg, None)?;
            let masks = [[true; 3], [true, false, false], [false, true, false], [false, false, true]];
            let names = ["all", "micro", "meso", "macro"];
            let rows = view_ablation(&load_stage1(&stage1)?, &prep, &cfg, &masks, reps)?;
            let mut csv = String::from("views,rep,test_error_km\n");
            for (name, errs) in names.iter().zip(&rows) {
                for (r, e) in errs.iter().enumerate() {
                    let _ = writeln!(csv, "{name},{r},{e}");
                }
                println!("{name}: mean Error {:.4} km", errs.iter().sum::<f64>() / errs.len().max(1) as f64);
            }
            write(out, "ablation.csv", &csv)?;
        }
        Command::GradCheck => {
            let mut csv = String::from("check,max_rel_error,entries,passed\n");
            let mut failed = Vec::new();
            for (name, report) in gradient_suite(cfg.seed)? {
                let ok = report.passes(TOLERANCE);
                let _ = writeln!(csv, "{name},{},{},{ok}", report.max_rel_error, report.entries);
                println!("{:<24} {:.2e} {}", name, report.max_rel_error, if ok { "ok" } else { "FAIL" });
                if !ok {
                    failed.push(name);
                }
            }
            write(out, "grad_check.csv", &csv)?;
            if !failed.is_empty() {
                bail!("gradient check failed for {}", failed.join(", "));
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
