//! Finite-difference checks of every primitive and model block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::gradcheck::primitive_suite;
use crate::autodiff::{check_gradients, GradCheckReport, ParamStore, Tensor, Var};
use crate::behavior::{gru_step, init_gru};
use crate::error::Result;
use crate::policy::{action_head, attention, decoder_layer, geo_loss_var, init_policy, policy_step, Action, EpisodeContext, GeoLossMode, PolicyConfig};
use crate::represent::gcn_view;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    let data = (0..r * c).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(vec![r, c], data).expect("shape matches data")
}

/// `sum(out * probe)`: a scalar that weighs every output entry differently.
fn project<'t>(out: Var<'t>, probe: &Tensor) -> Result<Var<'t>> {
    Ok(out.mul(out.tape().constant(probe.clone()))?.sum())
}

/// Primitive checks followed by the composite blocks, on random shapes of
/// at most 8x8 drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out: Vec<(String, GradCheckReport)> = primitive_suite(seed, STEP)?
        .into_iter()
        .map(|(n, r)| (n.to_string(), r))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10c);
    let g = &mut rng;
    let dim = |g: &mut ChaCha8Rng| g.random_range(2..=8usize);

    // Graph convolution over a random symmetric adjacency.
    let (n, m, d) = (dim(g), dim(g), dim(g));
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if g.random_bool(0.4) {
                a.data_mut()[i * n + j] = 1.0;
                a.data_mut()[j * n + i] = 1.0;
            }
        }
    }
    let x = uniform(g, n, m, 1.0);
    let probe = uniform(g, n, d, 1.0);
    let mut store = ParamStore::new();
    store.insert("w", uniform(g, m, d, 1.0))?;
    out.push((
        "gcn_layer".into(),
        check_gradients(&store, STEP, |tape, s| {
            project(gcn_view(&a, &x, tape.param_named(s, "w")?, Default::default())?, &probe)
        })?,
    ));

    // GRU cell, one step from a nonzero hidden state.
    let (l, h) = (dim(g), dim(g));
    let mut store = ParamStore::new();
    init_gru(&mut store, l, h, g)?;
    let loc = uniform(g, 1, l, 1.0).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let anchor = uniform(g, 1, l, 1.0);
    let p0 = uniform(g, 1, h, 0.5);
    let probe = uniform(g, 1, h, 1.0);
    out.push((
        "gru_cell".into(),
        check_gradients(&store, STEP, |tape, s| {
            let (p, prob) = gru_step(tape, s, tape.constant(loc.clone()), tape.constant(anchor.clone()), tape.constant(p0.clone()))?;
            Ok(project(p, &probe)?.add(prob)?)
        })?,
    ));

    // Attention block with every input trainable.
    let (nq, nk, a_in, b_in, c_in, dk, dv) = (dim(g), dim(g), dim(g), dim(g), dim(g), dim(g), dim(g));
    let mut store = ParamStore::new();
    store.insert("x", uniform(g, nq, a_in, 1.0))?;
    store.insert("y", uniform(g, nk, b_in, 1.0))?;
    store.insert("z", uniform(g, nk, c_in, 1.0))?;
    store.insert("wx", uniform(g, a_in, dk, 0.7))?;
    store.insert("wy", uniform(g, b_in, dk, 0.7))?;
    store.insert("wz", uniform(g, c_in, dv, 0.7))?;
    let probe = uniform(g, nq, dv, 1.0);
    out.push((
        "attention".into(),
        check_gradients(&store, STEP, |tape, s| {
            let p = |n: &str| tape.param_named(s, n);
            project(attention(p("x")?, p("y")?, p("z")?, p("wx")?, p("wy")?, p("wz")?)?, &probe)
        })?,
    ));

    // Decoder layer over three cached steps.
    let d = dim(g);
    let mut store = ParamStore::new();
    for w in ["wx", "wy", "wz"] {
        store.insert(format!("dec.{w}"), uniform(g, d, d, 0.7))?;
    }
    let xs: Vec<Tensor> = (0..3).map(|_| uniform(g, 1, d, 1.0)).collect();
    let ys: Vec<Tensor> = (0..3).map(|_| uniform(g, 1, d, 1.0)).collect();
    let probe = uniform(g, 1, d, 1.0);
    out.push((
        "decoder_layer".into(),
        check_gradients(&store, STEP, |tape, s| {
            let mut cache = Default::default();
            let mut total = tape.scalar(0.0);
            for t in 0..3 {
                let o = decoder_layer(tape, s, "dec", tape.constant(xs[t].clone()), tape.constant(ys[t].clone()), t + 1, Some(&mut cache))?;
                total = total.add(project(o, &probe)?)?;
            }
            Ok(total)
        })?,
    ));

    // Action head and the whole policy step, with GeoLoss on top.
    let d = dim(g);
    let state_dim = dim(g);
    let cfg = PolicyConfig { d_model: d, layers: 2, ..PolicyConfig::new(state_dim) };
    let mut store = ParamStore::new();
    init_policy(&mut store, &cfg, g)?;
    let input = uniform(g, 1, d, 1.0);
    let head_only: ParamStore = {
        let mut s = store.clone();
        s.set_frozen_prefix("policy.", true);
        s.set_frozen_prefix("policy.head.", false);
        s
    };
    out.push((
        "action_mlp".into(),
        check_gradients(&head_only, STEP, |tape, s| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let (dis, deg) = action_head(tape, s, tape.constant(input.clone()), 0.0, &mut r)?;
            Ok(dis.add(deg.scale(1e-2))?)
        })?,
    ));
    let states: Vec<Tensor> = (0..3).map(|_| uniform(g, 1, state_dim, 1.0)).collect();
    let truth = Action { dis_norm: g.random_range(0.0..1.0), deg: g.random_range(0.0..360.0) };
    out.push((
        "policy_step".into(),
        check_gradients(&store, STEP, |tape, s| {
            let mut ctx = EpisodeContext::new(&cfg);
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let mut total = tape.scalar(0.0);
            for (t, st) in states.iter().enumerate() {
                let p = policy_step(tape, s, &cfg, t + 1, tape.scalar(0.2 + 0.3 * t as f64), tape.constant(st.clone()), &mut ctx, &mut r)?;
                let (dis, deg) = action_head(tape, s, p, 0.0, &mut r)?;
                total = total.add(geo_loss_var(dis, deg, truth, GeoLossMode::Symmetric, 1e-3)?)?;
            }
            Ok(total)
        })?,
    ));

    // GeoLoss in both modes, away from the wrap switch points.
    for (name, mode) in [("geo_loss_symmetric", GeoLossMode::Symmetric), ("geo_loss_literal", GeoLossMode::Literal)] {
        let mut store = ParamStore::new();
        store.insert("dis", Tensor::scalar(g.random_range(0.05..0.95)))?;
        store.insert("deg", Tensor::scalar(g.random_range(20.0..160.0)))?;
        let truth = Action { dis_norm: g.random_range(0.0..1.0), deg: g.random_range(200.0..340.0) };
        out.push((
            name.into(),
            check_gradients(&store, STEP, |tape, s| {
                geo_loss_var(tape.param_named(s, "dis")?, tape.param_named(s, "deg")?, truth, mode, 1.0)
            })?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_block_passes() {
        for seed in 0..3 {
            for (name, report) in gradient_suite(seed).unwrap() {
                assert!(report.passes(TOLERANCE), "seed {seed} {name}: {report:?}");
                assert!(report.entries > 0, "{name}");
            }
        }
    }
}
