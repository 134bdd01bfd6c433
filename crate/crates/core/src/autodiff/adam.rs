use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients stored in `store`, skipping
    /// frozen parameters.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.is_empty() {
            for id in store.ids() {
                let shape = store.value(id).shape().to_vec();
                let n = store.value(id).numel();
                self.m.push(Tensor::new(shape.clone(), vec![0.0; n])?);
                self.v.push(Tensor::new(shape, vec![0.0; n])?);
            }
        }
        if self.m.len() != store.len() {
            return Err(Error::shape("adam", &[self.m.len()], &[store.len()]));
        }
        self.step += 1;
        let t = self.step as f64;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        for id in store.ids() {
            if store.is_frozen(id) {
                continue;
            }
            let i = id.index();
            let grad = store.grad(id).clone();
            let param = store.value_mut(id);
            adam_update(param, &grad, &mut self.m[i], &mut self.v[i], c, bias1, bias2)?;
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of a single tensor.
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    c: AdamConfig,
    bias1: f64,
    bias2: f64,
) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::shape("adam", param.shape(), grad.shape()));
    }
    if param.shape() != m.shape() || param.shape() != v.shape() {
        return Err(Error::shape("adam moments", param.shape(), m.shape()));
    }
    for (((p, g), mi), vi) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
        *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
        let m_hat = *mi / bias1;
        let v_hat = *vi / bias2;
        *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![1.0, -2.0])).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(w).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // After one step m_hat = g and v_hat = g^2, so the update is
        // lr * g / (|g| + eps).
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![1.0, 1.0, 1.0])).unwrap();
        let tape = Tape::new();
        let wv = tape.param(&store, w);
        let coeffs = tape.constant(Tensor::row(vec![3.0, -0.5, 1e-3]));
        let loss = wv.mul(coeffs).unwrap().sum();
        tape.backward(loss, &mut store).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut store).unwrap();
        let expected: Vec<f64> = [3.0, -0.5, 1e-3]
            .iter()
            .map(|g: &f64| 1.0 - 1e-3 * g / (g.abs() + 1e-8))
            .collect();
        for (a, b) in store.value(w).data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn minimizes_squared_norm() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::row(vec![1.0; 4])).unwrap();
        let mut adam = Adam::new(AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        });
        for _ in 0..200 {
            store.zero_grad();
            let tape = Tape::new();
            let wv = tape.param(&store, w);
            let loss = wv.square().sum();
            tape.backward(loss, &mut store).unwrap();
            adam.step(&mut store).unwrap();
        }
        let norm = store.value(w).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.1, "norm {norm}");
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        let a = store.insert("frozen.a", Tensor::row(vec![1.0])).unwrap();
        let b = store.insert("live.b", Tensor::row(vec![1.0])).unwrap();
        store.set_frozen_prefix("frozen.", true);
        let tape = Tape::new();
        let loss = tape
            .param(&store, a)
            .add(tape.param(&store, b))
            .unwrap()
            .sum();
        tape.backward(loss, &mut store).unwrap();
        Adam::new(AdamConfig::default()).step(&mut store).unwrap();
        assert_eq!(store.value(a).data(), &[1.0]);
        assert!(store.value(b).data()[0] < 1.0);
    }

    #[test]
    fn update_checks_shapes() {
        let mut p = Tensor::zeros(1, 2);
        let g = Tensor::zeros(1, 3);
        let mut m = Tensor::zeros(1, 2);
        let mut v = Tensor::zeros(1, 2);
        assert!(adam_update(&mut p, &g, &mut m, &mut v, AdamConfig::default(), 0.1, 0.1).is_err());
    }
}
