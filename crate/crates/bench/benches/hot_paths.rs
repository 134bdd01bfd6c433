use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hexfleet_core::autodiff::{ParamStore, Tape};
use hexfleet_core::geo::{geohash_encode, location_embedding, GeoPoint};
use hexfleet_core::hexgraph::MultiviewGraph;
use hexfleet_core::policy::{init_policy, predict_action, FrozenContext, PolicyConfig};
use hexfleet_core::sim::{generate_city, greedy_assign, CityConfig, FreeVehicle, OpenOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(n: usize, cfg: &CityConfig, seed: u64) -> Vec<GeoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| cfg.sample_demand(&mut rng)).collect()
}

fn geo(c: &mut Criterion) {
    let city = CityConfig::two_hotspot(1, 0);
    let pts = points(1000, &city, 0);
    c.bench_function("geohash_encode_1k", |b| {
        b.iter(|| pts.iter().map(|&p| geohash_encode(black_box(p), 11).unwrap()).count())
    });
    c.bench_function("location_embedding_1k", |b| {
        b.iter(|| pts.iter().map(|&p| location_embedding(black_box(p), 11).unwrap()).count())
    });
    let graph = MultiviewGraph::build(city.bbox, city.views).unwrap();
    c.bench_function("hex_locate_all_1k", |b| {
        b.iter(|| pts.iter().map(|&p| graph.locate_all(black_box(p)).unwrap()).count())
    });
}

fn sim(c: &mut Criterion) {
    let city = CityConfig::two_hotspot(20, 200);
    c.bench_function("world_tick_20_vehicles", |b| {
        let mut world = generate_city(&city, 0).unwrap();
        b.iter(|| {
            if world.is_finished() {
                world = generate_city(&city, 0).unwrap();
            }
            let a = world.driver_actions().unwrap();
            world.step(&a).unwrap();
        })
    });
    c.bench_function("features_one_snapshot", |b| {
        let mut world = generate_city(&city, 0).unwrap();
        for _ in 0..20 {
            let a = world.driver_actions().unwrap();
            world.step(&a).unwrap();
        }
        b.iter(|| world.graph().raw_features(black_box(world.snapshot())).unwrap())
    });
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = points(400, &city, 2);
    let orders: Vec<OpenOrder> = pts[..200]
        .iter()
        .enumerate()
        .map(|(id, &origin)| OpenOrder { id, created_at_s: rng.random_range(0.0..600.0), origin })
        .collect();
    let free: Vec<FreeVehicle> = pts[200..].iter().enumerate().map(|(id, &position)| FreeVehicle { id, position }).collect();
    c.bench_function("greedy_assign_200x200", |b| b.iter(|| greedy_assign(black_box(&orders), black_box(&free))));
}

fn model(c: &mut Criterion) {
    let cfg = PolicyConfig { d_model: 64, layers: 2, ..PolicyConfig::new(103) };
    let mut store = ParamStore::new();
    init_policy(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let s: Vec<f64> = (0..103).map(|i| (i as f64 * 0.37).sin()).collect();
    c.bench_function("policy_inference_64_steps", |b| {
        b.iter(|| {
            let mut ctx = FrozenContext::new(&cfg);
            for _ in 0..64 {
                black_box(predict_action(&store, &cfg, &mut ctx, 0.5, &s).unwrap());
            }
        })
    });
    c.bench_function("tape_matmul_64", |b| {
        let x: Vec<f64> = (0..64 * 64).map(|i| (i as f64).cos()).collect();
        let t = hexfleet_core::autodiff::Tensor::new(vec![64, 64], x).unwrap();
        b.iter(|| {
            let tape = Tape::eval();
            let v = tape.constant(t.clone());
            black_box(v.matmul(v).unwrap().sum().item())
        })
    });
}

criterion_group!(benches, geo, sim, model);
criterion_main!(benches);
