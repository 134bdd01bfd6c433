use rayon::prelude::*;

use super::{Adam, Gradients, ParamStore, Tape, Var};
use crate::error::Result;

/// Runs `loss_fn` on every item with its own tape, in parallel, and sums the
/// losses and gradients in item order so results do not depend on thread
/// scheduling.
pub fn batch_gradients<T, F>(store: &ParamStore, items: &[T], training: bool, loss_fn: F) -> Result<(f64, Gradients)>
where
    T: Sync,
    F: for<'t> Fn(&'t Tape, &ParamStore, &T, usize) -> Result<Var<'t>> + Sync,
{
    let parts = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let tape = Tape::with_mode(training);
            let loss = loss_fn(&tape, store, item, i)?;
            let value = loss.item();
            Ok((value, tape.gradients(loss)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    let mut grads = Gradients::default();
    for (value, g) in parts {
        total += value;
        grads.merge(g)?;
    }
    Ok((total, grads))
}

/// Replaces the stored gradients with `grads * scale` and takes one Adam step.
pub fn apply_step(store: &mut ParamStore, adam: &mut Adam, grads: &Gradients, scale: f64) -> Result<()> {
    store.zero_grad();
    store.accumulate(grads)?;
    store.scale_grads(scale);
    adam.step(store)
}
