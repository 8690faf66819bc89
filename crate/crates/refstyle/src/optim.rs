//! Adam optimizer over named parameter sets. State is keyed by parameter
//! name (not node identity) so it can be checkpointed and rebound to a
//! freshly constructed network.

use crate::autograd::{Gradients, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-5, beta1: 0.0, beta2: 0.99, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

pub struct Adam<S: Scalar> {
    pub cfg: AdamConfig,
    t: u64,
    m: HashMap<String, Tensor<S>>,
    v: HashMap<String, Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, m: HashMap::new(), v: HashMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over `params`. Parameters absent from `grads` are
    /// treated as having zero gradient (their moments still decay).
    pub fn step(&mut self, params: &[(String, Var<S>)], grads: &Gradients<S>) {
        self.t += 1;
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let one = S::from_f64(1.0);
        let lr = S::from_f64(self.cfg.lr);
        let eps = S::from_f64(self.cfg.eps);
        let bc1 = S::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = S::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        for (name, p) in params {
            let g = grads
                .value_of(p)
                .unwrap_or_else(|| Tensor::zeros(p.value().raw_dim()));
            debug_assert_eq!(
                g.shape(),
                p.shape().as_slice(),
                "gradient shape mismatch for {name}"
            );
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *m).and(&g).for_each(|m, &g| {
                *m = b1 * *m + (one - b1) * g;
            });
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.raw_dim()));
            ndarray::Zip::from(&mut *v).and(&g).for_each(|v, &g| {
                *v = b2 * *v + (one - b2) * g * g;
            });
            let mut theta = p.value_clone();
            ndarray::Zip::from(&mut theta).and(&*m).and(&*v).for_each(|t, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *t = *t - lr * m_hat / (v_hat.sqrt() + eps);
            });
            p.set_value(theta);
        }
    }

    /// Serializable state, moment pairs sorted by parameter name.
    pub fn export_state(&self) -> (u64, Vec<(String, Tensor<S>, Tensor<S>)>) {
        let mut names: Vec<&String> = self.m.keys().collect();
        names.sort();
        let entries = names
            .into_iter()
            .map(|n| (n.clone(), self.m[n].clone(), self.v[n].clone()))
            .collect();
        (self.t, entries)
    }

    pub fn load_state(&mut self, t: u64, entries: Vec<(String, Tensor<S>, Tensor<S>)>) {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (name, m, v) in entries {
            self.m.insert(name.clone(), m);
            self.v.insert(name, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::backward;
    use ndarray::IxDyn;

    fn leaf(vals: &[f64]) -> Var<f64> {
        Var::leaf(Tensor::from_shape_vec(IxDyn(&[vals.len()]), vals.to_vec()).unwrap())
    }

    #[test]
    fn first_step_matches_the_closed_form() {
        let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.9, eps: 1e-8 };
        let p = leaf(&[2.0, -3.0]);
        let params = vec![("p".to_string(), p.clone())];
        // loss = sum(p * [1, 2]) → gradient [1, 2]
        let w = Var::constant(Tensor::from_shape_vec(IxDyn(&[2]), vec![1.0, 2.0]).unwrap());
        let grads = backward(&p.mul(&w).sum_all());
        let mut opt = Adam::new(cfg);
        opt.step(&params, &grads);
        // t=1: m̂ = g, v̂ = g² → θ −= lr·g/(|g|+ε)
        for (i, &(theta0, g)) in [(2.0f64, 1.0f64), (-3.0, 2.0)].iter().enumerate() {
            let expect = theta0 - 0.1 * g / (g.abs() + 1e-8);
            let got = p.value()[[i]];
            assert!((got - expect).abs() < 1e-12, "param {i}: {got} vs {expect}");
        }
    }

    #[test]
    fn quadratic_objective_decreases_monotonically() {
        let p = leaf(&[5.0]);
        let params = vec![("p".to_string(), p.clone())];
        let mut opt = Adam::new(AdamConfig { lr: 0.05, ..AdamConfig::default() });
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let loss = p.sqr().sum_all();
            let val = loss.scalar_value();
            assert!(val <= last + 1e-12, "quadratic loss must not increase: {val} > {last}");
            last = val;
            opt.step(&params, &backward(&loss));
        }
        assert!(last < 1.0, "200 Adam steps should shrink 25.0 well below 1.0, got {last}");
    }

    #[test]
    fn exported_state_resumes_bit_exactly() {
        let run = |resume_at: Option<usize>| -> Vec<f64> {
            let p = leaf(&[1.5, -0.5, 3.0]);
            let params = vec![("p".to_string(), p.clone())];
            let mut opt = Adam::new(AdamConfig { lr: 0.01, beta1: 0.3, ..AdamConfig::default() });
            for step in 0..10 {
                if resume_at == Some(step) {
                    let (t, entries) = opt.export_state();
                    let mut fresh =
                        Adam::new(AdamConfig { lr: 0.01, beta1: 0.3, ..AdamConfig::default() });
                    fresh.load_state(t, entries);
                    opt = fresh;
                }
                let loss = p.sqr().mul(&leaf(&[1.0, 2.0, 0.5]).detach()).sum_all();
                opt.step(&params, &backward(&loss));
            }
            let out: Vec<f64> = p.value().iter().copied().collect();
            out
        };
        assert_eq!(run(None), run(Some(5)), "swap-in state at step 5 must not change anything");
    }

    #[test]
    fn parameters_without_gradient_stay_put() {
        let p = leaf(&[4.0]);
        let q = leaf(&[7.0]);
        let params = vec![("p".to_string(), p.clone()), ("q".to_string(), q.clone())];
        let mut opt = Adam::new(AdamConfig::default());
        let loss = p.sqr().sum_all(); // q is not part of the graph
        opt.step(&params, &backward(&loss));
        assert_eq!(q.value()[[0]], 7.0, "gradient-free parameter must be bitwise unchanged");
        assert!(p.value()[[0]] < 4.0, "parameter with gradient must move");
    }

    #[test]
    fn config_validation() {
        AdamConfig::default().validate().unwrap();
        assert!(AdamConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta2: -0.1, ..Default::default() }.validate().is_err());
    }
}
