use serde::{Deserialize, Serialize};

use super::graph::{Gradients, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("optimizer.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer.beta2", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("optimizer.eps", "must be positive"));
        }
        Ok(())
    }
}

/// SGD or bias-corrected Adam over a fixed list of parameter tensors.
///
/// Parameters live outside any graph; each training step rebuilds a graph,
/// registers the current values as parameter nodes and hands the resulting
/// gradients back here.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates `params` in place using the gradients of `ids` (same order).
    pub fn step(&mut self, params: &mut [Tensor], ids: &[NodeId], grads: &Gradients) -> Result<()> {
        if params.len() != ids.len() {
            return Err(Error::invalid("parameter and node lists differ in length"));
        }
        let mut gs = Vec::with_capacity(ids.len());
        for &id in ids {
            gs.push(grads.get(id).ok_or(Error::MissingGradient(id.index()))?.clone());
        }
        self.apply(params, &gs)
    }

    /// Updates `params` in place with explicit gradient tensors.
    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid("parameter and gradient lists differ in length"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    shapes: vec![p.shape().to_vec(), g.shape().to_vec()],
                });
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel())
        {
            return Err(Error::invalid("parameter shapes changed between optimizer steps"));
        }
        self.steps += 1;
        let OptimizerSpec {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.spec;

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let mut data = std::mem::replace(p, Tensor::zeros(&[1])).into_data();
            match self.spec.kind {
                OptimizerKind::Sgd => {
                    data.iter_mut().zip(g.data()).for_each(|(p, g)| *p -= lr * g);
                }
                OptimizerKind::Adam => {
                    let t = self.steps as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for (((p, &g), m), v) in data.iter_mut().zip(g.data()).zip(m).zip(v) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            let shape = g.shape().to_vec();
            *p = Tensor::new(shape, data)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    fn one(v: f64) -> Tensor {
        Tensor::vector(vec![v]).unwrap()
    }

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.1)).unwrap();
        let mut p = vec![one(1.0)];
        opt.apply(&mut p, &[one(1.0)]).unwrap();
        assert!((p[0].data()[0] - 0.9).abs() < 1e-15);
        opt.apply(&mut p, &[one(0.0)]).unwrap();
        assert!((p[0].data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_lr_magnitude() {
        for g in [1e-3, 1.0, 250.0, -7.0] {
            let mut opt = Optimizer::new(OptimizerSpec::adam(0.01)).unwrap();
            let mut p = vec![one(0.0)];
            opt.apply(&mut p, &[one(g)]).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0].data()[0] - expected).abs() < 1e-15, "g={g}");
            assert_eq!(opt.steps(), 1);
        }
    }

    #[test]
    fn missing_gradient_is_error() {
        let mut g = Graph::new();
        let a = g.parameter(one(1.0));
        let b = g.parameter(one(2.0));
        let loss = g.sum(a).unwrap();
        let grads = g.backward(loss).unwrap();
        let mut opt = Optimizer::new(OptimizerSpec::sgd(0.1)).unwrap();
        let mut params = vec![one(1.0), one(2.0)];
        let err = opt.step(&mut params, &[a, b], &grads).unwrap_err();
        assert!(matches!(err, Error::MissingGradient(i) if i == b.index()));
    }

    #[test]
    fn rejects_bad_lr() {
        assert!(Optimizer::new(OptimizerSpec::sgd(0.0)).is_err());
        assert!(Optimizer::new(OptimizerSpec::adam(-1.0)).is_err());
    }
}
