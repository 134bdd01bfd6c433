use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Sinusoidal embedding of step `t`: `sin(t / 10000^(2i/d))` in even slots,
/// the matching cosine in odd ones.
pub fn positional_embedding(t: usize, d: usize) -> Tensor {
    let row = (0..d)
        .map(|j| {
            let freq = 10000f64.powf(-((j / 2 * 2) as f64) / d as f64);
            let angle = t as f64 * freq;
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect();
    Tensor::row(row)
}

fn attend<'t>(q: Var<'t>, k: Var<'t>, v: Var<'t>) -> Result<Var<'t>> {
    let d = k.shape()[1] as f64;
    q.matmul(k.transpose())?.scale(1.0 / d.sqrt()).softmax().matmul(v)
}

/// Single-head attention with GeLU on every projection:
/// `softmax(gelu(x Wx) gelu(y Wy)^T / sqrt(d)) gelu(z Wz)`.
pub fn attention<'t>(x: Var<'t>, y: Var<'t>, z: Var<'t>, wx: Var<'t>, wy: Var<'t>, wz: Var<'t>) -> Result<Var<'t>> {
    attend(x.matmul(wx)?.gelu(), y.matmul(wy)?.gelu(), z.matmul(wz)?.gelu())
}

/// Projected keys and values of the steps a layer has already seen.
#[derive(Debug, Clone, Copy, Default)]
pub struct LayerCache<'t> {
    pub keys: Option<Var<'t>>,
    pub values: Option<Var<'t>>,
}

impl LayerCache<'_> {
    pub fn len(&self) -> usize {
        self.keys.map_or(0, |k| k.shape()[0])
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn extend<'t>(old: Option<Var<'t>>, new: Var<'t>) -> Result<Var<'t>> {
    match old {
        Some(old) => new.tape().concat_rows(&[old, new]),
        None => Ok(new),
    }
}

/// One decoder layer at step `t` (from 1): the positional embedding is
/// added to `x` and `y`, `x` supplies query and key, `y` the value.
///
/// With a cache the query attends over every cached step plus this one and
/// the new key and value are appended; without one it sees only itself.
pub fn decoder_layer<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    prefix: &str,
    x: Var<'t>,
    y: Var<'t>,
    t: usize,
    cache: Option<&mut LayerCache<'t>>,
) -> Result<Var<'t>> {
    if t < 1 {
        return Err(Error::Argument("decoder steps start at 1".into()));
    }
    let d = x.shape()[1];
    let pos = tape.constant(positional_embedding(t, d));
    let (xp, yp) = (x.add(pos)?, y.add(pos)?);
    let w = |name: &str| tape.param_named(store, &format!("{prefix}.{name}"));
    let q = xp.matmul(w("wx")?)?.gelu();
    let k = xp.matmul(w("wy")?)?.gelu();
    let v = yp.matmul(w("wz")?)?.gelu();
    match cache {
        Some(cache) => {
            let keys = extend(cache.keys, k)?;
            let values = extend(cache.values, v)?;
            cache.keys = Some(keys);
            cache.values = Some(values);
            attend(q, keys, values)
        }
        None => attend(q, k, v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gelu;

    #[test]
    fn positional_entries_are_bounded() {
        for t in [1, 7, 1000] {
            let pe = positional_embedding(t, 16);
            assert!(pe.data().iter().all(|v| v.abs() <= 1.0));
        }
        assert_eq!(positional_embedding(0, 4).data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn single_key_returns_the_value_projection() {
        let tape = Tape::eval();
        let i = tape.constant(Tensor::identity(2));
        let x = tape.constant(Tensor::row(vec![0.3, -1.0]));
        let z = tape.constant(Tensor::row(vec![2.0, -0.5]));
        let out = attention(x, x, z, i, i, i).unwrap();
        assert_eq!(out.value().data(), &[gelu(2.0), gelu(-0.5)]);
    }

    #[test]
    fn identical_keys_average_values() {
        let tape = Tape::eval();
        let i = tape.constant(Tensor::identity(2));
        let q = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let keys = tape.constant(Tensor::from_rows(&vec![vec![0.5, 0.5]; 3]).unwrap());
        let values = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]).unwrap());
        let out = attention(q, keys, values, i, i, i).unwrap();
        let expected = [(gelu(1.0) + gelu(2.0)) / 3.0, (gelu(1.0) + gelu(2.0)) / 3.0];
        for (a, b) in out.value().data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_hand_case() {
        let tape = Tape::eval();
        let i = tape.constant(Tensor::identity(2));
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let z = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let out = attention(x, x, z, i, i, i).unwrap();
        // q = k = gelu(I) = g1 * I, so each row's logits are (g1^2, 0)/sqrt 2
        // in its own slot first.
        let g1 = gelu(1.0);
        let s = g1 * g1 / 2f64.sqrt();
        let w_self = s.exp() / (s.exp() + 1.0);
        let v = [[gelu(1.0), gelu(2.0)], [gelu(3.0), gelu(4.0)]];
        let expected = [
            w_self * v[0][0] + (1.0 - w_self) * v[1][0],
            w_self * v[0][1] + (1.0 - w_self) * v[1][1],
            (1.0 - w_self) * v[0][0] + w_self * v[1][0],
            (1.0 - w_self) * v[0][1] + w_self * v[1][1],
        ];
        for (a, b) in out.value().data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn step_zero_is_rejected() {
        let tape = Tape::eval();
        let store = ParamStore::new();
        let x = tape.constant(Tensor::zeros(1, 2));
        assert!(matches!(decoder_layer(&tape, &store, "p", x, x, 0, None), Err(Error::Argument(_))));
    }
}
