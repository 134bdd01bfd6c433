//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: usize,
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, floor)` where
    /// `floor = 1e-3 * max(1, |loss|)`.
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares reverse-mode gradients of `loss_fn` with central differences of
/// step `h` for every unfrozen parameter entry in `store`.
///
/// `loss_fn` is evaluated on evaluation-mode tapes and must be deterministic.
pub fn check_gradients<F>(store: &ParamStore, h: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    check_gradients_in_mode(store, h, false, loss_fn)
}

/// As [`check_gradients`], on training tapes when `training` is set. Any
/// randomness inside `loss_fn` (dropout masks) must be reseeded per call.
pub fn check_gradients_in_mode<F>(
    store: &ParamStore,
    h: f64,
    training: bool,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::with_mode(training);
    let loss = loss_fn(&tape, store)?;
    let base = loss.item();
    let analytic = tape.gradients(loss)?;
    let floor = 1e-3 * base.abs().max(1.0);

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        entries: 0,
        max_rel_error: 0.0,
        worst_param: None,
    };
    for id in store.ids() {
        if store.is_frozen(id) {
            continue;
        }
        for k in 0..store.value(id).numel() {
            let original = store.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = original + h;
            let plus = eval(&probe, training, &loss_fn)?;
            probe.value_mut(id).data_mut()[k] = original - h;
            let minus = eval(&probe, training, &loss_fn)?;
            probe.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.entries += 1;
            if rel > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = rel;
                report.worst_param = Some(store.name(id).to_owned());
            }
        }
    }
    Ok(report)
}

fn eval<F>(store: &ParamStore, training: bool, loss_fn: &F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::with_mode(training);
    Ok(loss_fn(&tape, store)?.item())
}

/// Gradient checks of every differentiable primitive on random shapes of at
/// most 8x8, seeded by `seed`.
pub fn primitive_suite(seed: u64, h: f64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let dim = |rng: &mut ChaCha8Rng| rng.random_range(1..=8usize);
    let (r, k, c) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
    let g = &mut rng;

    out.push(("matmul", binary(h, uniform(g, r, k, 1.0), uniform(g, k, c, 1.0), uniform(g, r, c, 1.0), |a, b| a.matmul(b))?));
    out.push(("add", binary(h, uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), |a, b| a.add(b))?));
    out.push(("sub", binary(h, uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), |a, b| a.sub(b))?));
    out.push(("mul", binary(h, uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), |a, b| a.mul(b))?));
    out.push(("add_row", binary(h, uniform(g, r, c, 1.0), uniform(g, 1, c, 1.0), uniform(g, r, c, 1.0), |a, b| a.add_row(b))?));
    out.push(("concat_cols", binary(h, uniform(g, r, k, 1.0), uniform(g, r, c, 1.0), uniform(g, r, k + c, 1.0), |a, b| a.tape().concat_cols(&[a, b]))?));
    out.push(("concat_rows", binary(h, uniform(g, k, c, 1.0), uniform(g, r, c, 1.0), uniform(g, k + r, c, 1.0), |a, b| a.tape().concat_rows(&[a, b]))?));
    out.push(("scale", unary(h, uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), |a| Ok(a.scale(-1.7)))?));
    out.push(("add_scalar", unary(h, uniform(g, r, c, 1.0), uniform(g, r, c, 1.0), |a| Ok(a.add_scalar(0.3)))?));
    out.push(("sigmoid", unary(h, uniform(g, r, c, 3.0), uniform(g, r, c, 1.0), |a| Ok(a.sigmoid()))?));
    out.push(("tanh", unary(h, uniform(g, r, c, 3.0), uniform(g, r, c, 1.0), |a| Ok(a.tanh()))?));
    out.push(("gelu", unary(h, uniform(g, r, c, 3.0), uniform(g, r, c, 1.0), |a| Ok(a.gelu()))?));
    out.push(("ln", unary(h, uniform(g, r, c, 1.0).map(|x| x.abs() + 0.2), uniform(g, r, c, 1.0), |a| Ok(a.ln()))?));
    out.push(("square", unary(h, uniform(g, r, c, 2.0), uniform(g, r, c, 1.0), |a| Ok(a.square()))?));
    out.push(("clamp", unary(h, uniform(g, r, c, 0.5), uniform(g, r, c, 1.0), |a| Ok(a.clamp(-1.0, 1.0)))?));
    out.push(("softmax", unary(h, uniform(g, r, c, 2.0), uniform(g, r, c, 1.0), |a| Ok(a.softmax()))?));
    out.push(("transpose", unary(h, uniform(g, c, r, 1.0), uniform(g, r, c, 1.0), |a| Ok(a.transpose()))?));
    out.push(("slice_cols", unary(h, uniform(g, r, c + 2, 1.0), uniform(g, r, c, 1.0), move |a| a.slice_cols(1, c))?));
    out.push(("select_row", unary(h, uniform(g, r, c, 1.0), uniform(g, 1, c, 1.0), move |a| a.select_row(r - 1))?));
    out.push(("sum", unary(h, uniform(g, r, c, 1.0), uniform(g, 1, 1, 1.0), |a| Ok(a.sum()))?));
    out.push(("mean", unary(h, uniform(g, r, c, 1.0), uniform(g, 1, 1, 1.0), |a| Ok(a.mean()))?));

    // Training-mode dropout with a mask reseeded identically on every call.
    let mut store = ParamStore::new();
    store.insert("a", uniform(g, r, c, 1.0))?;
    let weights = uniform(g, r, c, 1.0);
    let report = check_gradients_in_mode(&store, h, true, |tape, s| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd40);
        let a = tape.param_named(s, "a")?;
        let w = tape.constant(weights.clone());
        Ok(a.dropout(0.5, &mut mask_rng)?.mul(w)?.sum())
    })?;
    out.push(("dropout", report));
    Ok(out)
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, half_width: f64) -> Tensor {
    let data = (0..r * c)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect();
    Tensor::new(vec![r, c], data).expect("shape")
}

/// Loss is `sum(op(a) * weights)`, a generic linear functional of the output.
fn unary<F>(h: f64, a: Tensor, weights: Tensor, op: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
{
    let mut store = ParamStore::new();
    store.insert("a", a)?;
    check_gradients(&store, h, |tape, s| {
        let out = op(tape.param_named(s, "a")?)?;
        out.mul(tape.constant(weights.clone()))
            .map(|v| v.sum())
    })
}

fn binary<F>(h: f64, a: Tensor, b: Tensor, weights: Tensor, op: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(Var<'t>, Var<'t>) -> Result<Var<'t>>,
{
    let mut store = ParamStore::new();
    store.insert("a", a)?;
    store.insert("b", b)?;
    check_gradients(&store, h, |tape, s| {
        let out = op(tape.param_named(s, "a")?, tape.param_named(s, "b")?)?;
        out.mul(tape.constant(weights.clone()))
            .map(|v| v.sum())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_matches_finite_differences() {
        for seed in 0..5 {
            for (name, report) in primitive_suite(seed, 1e-5).unwrap() {
                assert!(
                    report.passes(1e-4),
                    "seed {seed} {name}: {report:?}"
                );
                assert!(report.entries > 0);
            }
        }
    }
}
