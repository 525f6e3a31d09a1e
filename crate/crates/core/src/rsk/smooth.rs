use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Temperatures and cut-offs of the smooth recall@k surrogate.
///
/// * `tau1` sharpens the count-at-k step `σ((k − rank + ½) / tau1)`, where
///   ranks are measured in list positions.
/// * `tau2` sharpens the pairwise comparisons `σ((s_l − s_j) / tau2)` that
///   make up the smooth rank, measured in similarity units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothParams {
    pub tau1: f64,
    pub tau2: f64,
    pub k_set: Vec<usize>,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self {
            tau1: 1.0,
            tau2: 0.01,
            k_set: vec![1, 2, 4, 8, 16],
        }
    }
}

impl SmoothParams {
    pub fn new(tau1: f64, tau2: f64, k_set: Vec<usize>) -> Result<Self> {
        let p = Self { tau1, tau2, k_set };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 > 0.0 && self.tau1.is_finite()) {
            return Err(Error::config("rsk.tau1", "must be positive"));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(Error::config("rsk.tau2", "must be positive"));
        }
        if self.k_set.is_empty() {
            return Err(Error::config("rsk.k_set", "must not be empty"));
        }
        if self.k_set[0] < 1 || self.k_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("rsk.k_set", "must be strictly increasing positive integers"));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be positive, got {tau}")))
    }
}

/// `σ(x / tau)`, elementwise.
pub fn smooth_heaviside(x: &Tensor, tau: f64) -> Result<Tensor> {
    check_tau(tau)?;
    let mut g = Graph::new();
    let id = g.constant(x.clone());
    let out = heaviside_node(&mut g, id, tau)?;
    Ok(g.value(out).clone())
}

pub fn heaviside_node(g: &mut Graph, x: NodeId, tau: f64) -> Result<NodeId> {
    check_tau(tau)?;
    let scaled = g.scale(x, 1.0 / tau)?;
    g.sigmoid(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heaviside_values() {
        let x = Tensor::vector(vec![0.0, 1.0]).unwrap();
        let y = smooth_heaviside(&x, 0.01).unwrap();
        assert_eq!(y.data()[0], 0.5);
        assert!((1.0 - y.data()[1]).abs() < 1e-12);
        assert!(smooth_heaviside(&x, 0.0).is_err());
        assert!(smooth_heaviside(&x, -1.0).is_err());
    }

    #[test]
    fn heaviside_monotone() {
        let xs: Vec<f64> = (0..200).map(|i| -3.0 + 0.03 * i as f64).collect();
        let y = smooth_heaviside(&Tensor::vector(xs).unwrap(), 0.2).unwrap();
        assert!(y.data().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn params_validation() {
        assert!(SmoothParams::default().validate().is_ok());
        assert!(SmoothParams::new(0.0, 0.1, vec![1]).is_err());
        assert!(SmoothParams::new(1.0, 0.1, vec![]).is_err());
        assert!(SmoothParams::new(1.0, 0.1, vec![2, 2]).is_err());
        assert!(SmoothParams::new(1.0, 0.1, vec![0, 2]).is_err());
    }
}
