//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| (0.0..1.0).contains(&b);
        if !ok(self.beta1) || !ok(self.beta2) || !(self.eps > 0.0) {
            return domain_err!("invalid adam settings {:?}", self);
        }
        Ok(())
    }
}

/// First and second moments keyed like the parameters, plus the step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParameterStore,
    pub v: ParameterStore,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update of every parameter named in `grads`. Parameters without a
/// gradient are left alone.
pub fn adam_step(params: &mut ParameterStore, grads: &ParameterStore, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    for (name, g) in grads.iter() {
        let Some(p) = params.get(name) else {
            return domain_err!("gradient for unknown parameter `{}`", name);
        };
        if p.shape() != g.shape() {
            return domain_err!("gradient of `{}` has shape {:?}, parameter {:?}", name, g.shape(), p.shape());
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    // lr·m̂/(√v̂ + eps) rewritten on the raw moments.
    let step = (lr * c2.sqrt() / c1) as f32;
    let eps = (cfg.eps * c2.sqrt()) as f32;
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    for (name, g) in grads.iter() {
        let shape = g.shape().to_vec();
        if state.m.get(name).is_none() {
            state.m.insert(name, Tensor::zeros(&shape));
            state.v.insert(name, Tensor::zeros(&shape));
        }
        let m = state.m.get_mut(name).expect("moment inserted above").data_mut();
        let v = state.v.get_mut(name).expect("moment inserted above").data_mut();
        let p = params.get_mut(name).expect("checked above").data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f32) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::full(&[3], v));
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = store(0.25);
        let mut st = AdamState::new();
        for _ in 0..5 {
            adam_step(&mut p, &store(0.0), &mut st, 1e-3, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, store(0.25));
        assert!(st.m.get("w").unwrap().data().iter().all(|&x| x == 0.0));
        assert!(st.v.get("w").unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gradient_steps_by_lr() {
        let mut p = store(0.0);
        let mut st = AdamState::new();
        let lr = 1e-3;
        let mut prev = 0.0f32;
        for k in 0..200 {
            adam_step(&mut p, &store(-0.3), &mut st, lr, &AdamConfig::default()).unwrap();
            let now = p.get("w").unwrap().data()[0];
            let step = (now - prev) as f64;
            if k > 0 {
                assert!((step - lr).abs() < 1e-6 * 1e3 * lr, "step {step}");
            }
            prev = now;
        }
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = store(0.0);
        let mut g = ParameterStore::new();
        g.insert("w", Tensor::zeros(&[4]));
        assert!(adam_step(&mut p, &g, &mut AdamState::new(), 1e-3, &AdamConfig::default()).is_err());
    }
}
