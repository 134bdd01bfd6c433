//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use hexfleet_core::autodiff::{checkpoint, ParamStore};
use hexfleet_core::behavior::{init_gru, pretrain_behavior, DriverSegment, PretrainConfig};
use hexfleet_core::geo::{geohash_decode, geohash_encode, GeoPoint};
use hexfleet_core::hexgraph::{HexGrid, ViewSpec};
use hexfleet_core::pipeline::gradients::TOLERANCE;
use hexfleet_core::pipeline::train::behavior_auc;
use hexfleet_core::pipeline::{
    alpha_sweep, gradient_suite, prepare, random_checkpoint, run_inference, run_stage1, run_training,
    trajectories_from_world, view_ablation, Prepared, RunConfig, Trajectory,
};
use hexfleet_core::policy::{geo_loss, Action, GeoLossMode};
use hexfleet_core::sim::{generate_city, ratio_sweep, CityConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn desk() -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf")).expect("desk config")
}

fn corpus(city: &CityConfig, seed: u64) -> Vec<Trajectory> {
    let mut world = generate_city(city, seed).expect("city");
    world.drive().expect("drive");
    trajectories_from_world(&world)
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let suite = gradient_suite(0).expect("suite");
    let elapsed = t.elapsed();
    let failed: Vec<&str> = suite.iter().filter(|(_, r)| !r.passes(TOLERANCE)).map(|(n, _)| n.as_str()).collect();
    let worst = suite.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    (
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} checks, worst relative error {worst:.1e}, failed {failed:?}, {:.1} s",
            suite.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn geoloss() -> Outcome {
    let a = |dis: f64, deg: f64| Action { dis_norm: dis, deg };
    let literal = geo_loss(a(0.3, 1.0), a(0.3, 359.0), GeoLossMode::Literal, 1.0);
    let sym_fwd = geo_loss(a(0.3, 1.0), a(0.3, 359.0), GeoLossMode::Symmetric, 1.0);
    let sym_back = geo_loss(a(0.3, 359.0), a(0.3, 1.0), GeoLossMode::Symmetric, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut negative = 0;
    let mut zero_mismatch = 0;
    // Headings on a 1/64 degree grid, so a full turn is exact in floating point.
    let heading = |rng: &mut ChaCha8Rng| rng.random_range(0..360 * 64) as f64 / 64.0;
    for _ in 0..100_000 {
        let p = a(rng.random_range(0.0..=1.0), heading(&mut rng));
        let q = if rng.random_bool(0.1) {
            p
        } else {
            a(rng.random_range(0.0..=1.0), heading(&mut rng))
        };
        for mode in [GeoLossMode::Symmetric, GeoLossMode::Literal] {
            let l = geo_loss(p, q, mode, 1.0);
            negative += usize::from(l < 0.0);
            zero_mismatch += usize::from((l == 0.0) != (p == q));
        }
        // A full turn apart is the same heading.
        let turned = a(p.dis_norm, p.deg + 360.0);
        zero_mismatch += usize::from(geo_loss(turned, p, GeoLossMode::Symmetric, 1.0) != 0.0);
    }
    (
        literal == 4.0 && sym_fwd == 4.0 && sym_back == 4.0 && negative == 0 && zero_mismatch == 0,
        format!(
            "literal wrap {literal}, symmetric {sym_fwd}/{sym_back}, {negative} negative, {zero_mismatch} zero mismatches over 1e5 pairs"
        ),
    )
}

fn geohash() -> Outcome {
    let p = GeoPoint::new(57.64911, 10.40744).unwrap();
    let ours = geohash_encode(p, 11).unwrap();
    let theirs = geohash::encode(geohash::Coord { x: p.lon(), y: p.lat() }, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..10_000 {
        let p = GeoPoint::new(rng.random_range(-90.0..90.0), rng.random_range(-180.0..180.0)).unwrap();
        for precision in 1..=12 {
            let code = geohash_encode(p, precision).unwrap();
            let agrees = geohash::encode(geohash::Coord { x: p.lon(), y: p.lat() }, precision).unwrap() == code.as_str();
            failures += usize::from(!geohash_decode(&code).contains(p) || !agrees);
        }
    }
    (
        ours.as_str() == "u4pruydqqvj" && theirs == "u4pruydqqvj" && failures == 0,
        format!("reference {} (oracle {theirs}), {failures} failures over 1e4 points x 12 precisions", ours.as_str()),
    )
}

fn hexgraph() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut count_mismatch = 0;
    let mut degree_violations = 0;
    let mut partition_violations = 0;
    let mut interior = 0;
    for b in common::bboxes() {
        for spec in ViewSpec::defaults() {
            let grid = HexGrid::build(b, spec).unwrap();
            count_mismatch += usize::from(grid.len() != common::enumerate_cells(&grid).len());
            for i in 0..grid.len() {
                if common::fully_inside(&grid, i) {
                    interior += 1;
                    degree_violations += usize::from(grid.degree(i) != 6);
                }
            }
        }
    }
    let b = common::bboxes()[0];
    for spec in ViewSpec::defaults() {
        let grid = HexGrid::build(b, spec).unwrap();
        for _ in 0..10_000 {
            let p = common::random_point(&b, &mut rng);
            partition_violations += usize::from(common::owners(&grid, p) != vec![grid.locate(p).unwrap()]);
        }
    }
    (
        count_mismatch == 0 && degree_violations == 0 && partition_violations == 0 && interior > 0,
        format!(
            "{count_mismatch} node-count mismatches over 9 grids, {degree_violations} of {interior} interior cells not degree 6, {partition_violations} partition violations over 3e4 points"
        ),
    )
}

/// Relabels exactly half of each driver's segments as each driver, so labels
/// carry no information about who drove.
fn stratified_shuffle(segments: &[DriverSegment], seed: u64) -> Vec<DriverSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = segments.to_vec();
    let drivers: std::collections::BTreeSet<usize> = segments.iter().map(|s| s.driver).collect();
    let drivers: Vec<usize> = drivers.into_iter().collect();
    for &d in &drivers {
        let mut idx: Vec<usize> = (0..segments.len()).filter(|&i| segments[i].driver == d).collect();
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            out[i].driver = drivers[k * drivers.len() / idx.len()];
        }
    }
    out
}

fn behavior() -> Outcome {
    let mut cfg = desk();
    cfg.behavior_segments = 400;
    let city = CityConfig::two_driver();
    let t = Instant::now();
    let prep = prepare(&corpus(&city, 1), &cfg, Some(city.bbox)).unwrap();
    let (_, report) = run_stage1(&prep, &cfg).unwrap();
    let elapsed = t.elapsed();
    let (train, held_out) = prep.behavior_segments(&cfg).unwrap();
    let controls: Vec<f64> = (0..5)
        .map(|seed| {
            let mut store = ParamStore::new();
            init_gru(&mut store, 5 * cfg.precision, cfg.hidden, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let pc = PretrainConfig { epochs: cfg.pretrain_epochs, adam: cfg.adam, seed, ..PretrainConfig::default() };
            pretrain_behavior(&mut store, &stratified_shuffle(&train, seed), &prep.anchors, &pc).unwrap();
            behavior_auc(&store, &held_out, &prep.anchors, cfg.seed).unwrap()
        })
        .collect();
    let control = controls.iter().sum::<f64>() / controls.len() as f64;
    (
        report.held_out_auc >= 0.9 && elapsed < Duration::from_secs(300) && (control - 0.5).abs() <= 0.1,
        format!(
            "held-out AUC {:.3} in {:.1} s ({} train / {} held-out segments), shuffled-label control {control:.3} over {controls:.3?}",
            report.held_out_auc,
            elapsed.as_secs_f64(),
            train.len(),
            held_out.len()
        ),
    )
}

struct Hotspot {
    cfg: RunConfig,
    prep: Prepared,
    stage1: ParamStore,
}

fn end_to_end(cfg: &RunConfig) -> (Outcome, Hotspot) {
    let city = CityConfig::two_hotspot(20, 200);
    let t = Instant::now();
    let (prep, outcome) = run_training(&corpus(&city, 1), cfg, Some(city.bbox), None).unwrap();
    let mut trained_world = generate_city(&city, 2).unwrap();
    let trained = run_inference(&outcome.model, cfg, &mut trained_world).unwrap();
    let control_store = random_checkpoint(&outcome.model, cfg, cfg.seed + 1).unwrap();
    let mut control_world = generate_city(&city, 2).unwrap();
    let control = run_inference(&control_store, cfg, &mut control_world).unwrap();
    let elapsed = t.elapsed();
    let (te, ce) = (trained.error_km.unwrap(), control.error_km.unwrap());
    let reduction = 1.0 - te / ce;
    let ok = reduction >= 0.3 && trained.empty_loaded_rate < control.empty_loaded_rate && elapsed < Duration::from_secs(900);
    let line = format!(
        "Error {te:.3} vs control {ce:.3} km ({:.0}% lower), empty-loaded {:.4} vs {:.4}, {:.1} s",
        100.0 * reduction,
        trained.empty_loaded_rate,
        control.empty_loaded_rate,
        elapsed.as_secs_f64()
    );
    ((ok, line), Hotspot { cfg: cfg.clone(), prep, stage1: outcome.stage1 })
}

fn alpha(h: &Hotspot) -> Outcome {
    let alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let curve = alpha_sweep(&h.stage1, &h.prep, &h.cfg, &alphas).unwrap();
    let (best, _) = curve.iter().copied().fold((f64::NAN, f64::INFINITY), |acc, (a, e)| if e < acc.1 { (a, e) } else { acc });
    let shown: Vec<String> = curve.iter().map(|(a, e)| format!("{a:.1}:{e:.3}")).collect();
    ((0.4 - 1e-9..=0.7 + 1e-9).contains(&best), format!("minimum at alpha {best:.1}; curve {}", shown.join(" ")))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ratio() -> Outcome {
    let ratios = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
    let rows = ratio_sweep(&CityConfig::two_hotspot(1, 100), &ratios, 1).unwrap();
    let empty: Vec<f64> = rows.iter().map(|r| r.empty_loaded_rate).collect();
    let accept: Vec<f64> = rows.iter().map(|r| r.order_acceptance_rate).collect();
    let (re, ra) = (spearman(&ratios, &empty), spearman(&ratios, &accept));
    let last = *accept.last().unwrap();
    (
        re > 0.9 && ra > 0.9 && last >= 0.95,
        format!("rho empty-loaded {re:.3}, rho acceptance {ra:.3}, acceptance at 10:1 {last:.3}; empty-loaded {empty:.3?}"),
    )
}

/// One-sided sign test p-value for `wins` successes out of `n` at p = 1/2.
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let choose = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}

fn ablation(h: &Hotspot) -> Outcome {
    let masks = [[true; 3], [true, false, false], [false, true, false], [false, false, true]];
    let names = ["micro", "meso", "macro"];
    let errors = view_ablation(&h.stage1, &h.prep, &h.cfg, &masks, 5).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let multi = &errors[0];
    let mut ok = true;
    let mut parts = vec![format!("multiview mean {:.3}", mean(multi))];
    for (name, single) in names.iter().zip(&errors[1..]) {
        let wins = single.iter().zip(multi).filter(|(s, m)| s > m).count();
        let p = sign_test_p(wins, multi.len());
        ok &= p < 0.05 && mean(single) >= mean(multi);
        parts.push(format!("{name} mean {:.3} worse in {wins}/5 (p {p:.3})", mean(single)));
    }
    (ok, parts.join(", "))
}

fn determinism() -> Outcome {
    let mut cfg = desk();
    cfg.d_g = 8;
    cfg.d_model = 16;
    cfg.leng = 16;
    cfg.segments = 40;
    cfg.epochs = 2;
    cfg.behavior_segments = 40;
    cfg.behavior_leng = 16;
    cfg.pretrain_epochs = 2;
    let city = CityConfig::two_hotspot(6, 30);
    let data = corpus(&city, 5);
    let run = || checkpoint::encode(&run_training(&data, &cfg, Some(city.bbox), None).unwrap().1.model);
    let (a, b) = (run(), run());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    std::fs::write(&path, &a).unwrap();
    let again = checkpoint::encode(&checkpoint::load(&path).unwrap());
    (a == b && a == again, format!("reruns identical: {}, save/load/save identical: {}, {} bytes", a == b, a == again, a.len()))
}

fn report(results: &mut Vec<(usize, bool)>, n: usize, name: &str, (ok, detail): Outcome) {
    println!("criterion {n:>2} {name}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
    results.push((n, ok));
}

fn main() {
    let t = Instant::now();
    let cfg = desk();
    let mut results = Vec::new();
    report(&mut results, 1, "gradient suite", gradients());
    report(&mut results, 2, "GeoLoss exactness", geoloss());
    report(&mut results, 3, "GeoHash", geohash());
    report(&mut results, 4, "hex graph", hexgraph());
    report(&mut results, 5, "behavior learning", behavior());
    let (e2e, hotspot) = end_to_end(&cfg);
    report(&mut results, 6, "end-to-end learning signal", e2e);
    report(&mut results, 7, "alpha sweep", alpha(&hotspot));
    report(&mut results, 8, "ratio sweep", ratio());
    report(&mut results, 9, "multiview ablation", ablation(&hotspot));
    report(&mut results, 10, "determinism and serialization", determinism());
    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {} of 10 passed in {:.0} s", 10 - failed.len(), t.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
