//! Supervised contrastive losses and the prototype classifier.
//!
//! The extended loss treats one learnable prototype per class as extra
//! candidates: for anchor `i`, the candidates are the other batch samples
//! plus every prototype, and the positives are the same-class samples plus
//! the anchor's own class prototype. Prototypes therefore receive gradients
//! from the same objective as the embeddings, and at test time
//! `softmax(z · w_c / τ_c)` reads them out as a classifier.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Additive logit for masked (self) entries; `exp` of it underflows to 0.
const MASKED_LOGIT: f64 = -1e4;
pub const DEFAULT_TAU: f64 = 0.1;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::config("esupcon.tau", "must be positive and finite"))
    }
}

fn check_rows(g: &Graph, z: NodeId, labels: &[usize]) -> Result<usize> {
    let shape = g.value(z).shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            shapes: vec![shape.to_vec(), vec![labels.len()]],
        });
    }
    Ok(shape[0])
}

/// Shared tail: masked log-softmax over candidate logits, averaged over
/// each anchor's positives and then over anchors.
fn contrastive_tail(g: &mut Graph, logits: NodeId, positives: &[Vec<usize>], width: usize) -> Result<NodeId> {
    let n = positives.len();
    let mut mask = vec![0.0; n * width];
    let mut weights = vec![0.0; n * width];
    for (i, ps) in positives.iter().enumerate() {
        mask[i * width + i] = MASKED_LOGIT;
        for &p in ps {
            weights[i * width + p] = 1.0 / ps.len() as f64;
        }
    }
    let bias = g.constant(Tensor::matrix(n, width, mask)?);
    let masked = g.add(logits, bias)?;
    let logp = g.log_softmax_rows(masked)?;
    let picked = g.mul_const(logp, Tensor::matrix(n, width, weights)?)?;
    let total = g.sum(picked)?;
    g.scale(total, -1.0 / n as f64)
}

fn batch_positives(labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let ps: Vec<usize> = (0..labels.len()).filter(|&j| j != i && labels[j] == y).collect();
            if ps.is_empty() {
                Err(Error::invalid(format!("anchor {i} has no positive in the batch")))
            } else {
                Ok(ps)
            }
        })
        .collect()
}

/// Mean over anchors of `−(1/|P_i|) Σ_p log softmax_{a≠i}(z_i·z_a/τ)_p`.
pub fn supcon_loss(g: &mut Graph, z: NodeId, labels: &[usize], tau: f64) -> Result<NodeId> {
    check_tau(tau)?;
    let n = check_rows(g, z, labels)?;
    let positives = batch_positives(labels)?;
    let sims = g.matmul_t(z, z)?;
    let logits = g.scale(sims, 1.0 / tau)?;
    contrastive_tail(g, logits, &positives, n)
}

/// Prototype-extended loss over `z` (`n × d`) and prototypes `w` (`C × d`).
pub fn esupcon_loss(g: &mut Graph, z: NodeId, labels: &[usize], w: NodeId, tau: f64) -> Result<NodeId> {
    check_tau(tau)?;
    let n = check_rows(g, z, labels)?;
    let (c, d) = {
        let s = g.value(w).shape();
        (s[0], if s.len() == 2 { s[1] } else { 0 })
    };
    if c < 2 {
        return Err(Error::invalid("at least two class prototypes are required"));
    }
    if d != g.value(z).cols() {
        return Err(Error::ShapeMismatch {
            op: "esupcon_loss",
            shapes: vec![g.value(z).shape().to_vec(), g.value(w).shape().to_vec()],
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("label {y} has no prototype (C = {c})")));
    }
    let mut positives = batch_positives(labels)?;
    for (ps, &y) in positives.iter_mut().zip(labels) {
        ps.push(n + y);
    }
    let candidates = g.concat_rows(&[z, w])?;
    let sims = g.matmul_t(z, candidates)?;
    let logits = g.scale(sims, 1.0 / tau)?;
    contrastive_tail(g, logits, &positives, n + c)
}

/// Unit-norm class prototypes with a read-out temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierPrototypes {
    weights: Tensor,
    tau_c: f64,
}

impl ClassifierPrototypes {
    /// Normalizes the rows of `weights` (`C × d`, `C ≥ 2`).
    pub fn new(weights: Tensor, tau_c: f64) -> Result<Self> {
        check_tau(tau_c)?;
        if weights.shape().len() != 2 || weights.rows() < 2 {
            return Err(Error::invalid("prototypes must be a matrix with at least two rows"));
        }
        let mut p = Self { weights, tau_c };
        p.renormalize()?;
        Ok(p)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn tau(&self) -> f64 {
        self.tau_c
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    /// Replaces the weights (after an optimizer step) and projects them
    /// back onto the sphere.
    pub fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        if weights.shape() != self.weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_weights",
                shapes: vec![weights.shape().to_vec(), self.weights.shape().to_vec()],
            });
        }
        self.weights = weights;
        self.renormalize()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n = self.weights.l2_normalize_rows();
        if (0..n.rows()).any(|i| n.row(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::invalid("a prototype collapsed to the zero vector"));
        }
        self.weights = n;
        Ok(())
    }
}

/// `softmax_c(z · w_c / τ_c)`.
pub fn predict_proba(z: &[f64], protos: &ClassifierPrototypes) -> Result<Vec<f64>> {
    let w = &protos.weights;
    if z.len() != w.cols() {
        return Err(Error::ShapeMismatch {
            op: "predict_proba",
            shapes: vec![vec![z.len()], w.shape().to_vec()],
        });
    }
    let logits: Vec<f64> = (0..w.rows())
        .map(|c| z.iter().zip(w.row(c)).map(|(a, b)| a * b).sum::<f64>() / protos.tau_c)
        .collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

/// Most probable class, ties to the smallest id.
pub fn predict_class(z: &[f64], protos: &ClassifierPrototypes) -> Result<usize> {
    let p = predict_proba(z, protos)?;
    Ok(p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
        .0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(f: impl Fn(&mut Graph) -> Result<NodeId>) -> f64 {
        let mut g = Graph::new();
        let l = f(&mut g).unwrap();
        g.value(l).item().unwrap()
    }

    #[test]
    fn supcon_prefers_true_grouping() {
        let z = Tensor::matrix(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let good = eval(|g| {
            let id = g.constant(z.clone());
            supcon_loss(g, id, &[0, 0, 1, 1], 0.1)
        });
        let bad = eval(|g| {
            let id = g.constant(z.clone());
            supcon_loss(g, id, &[0, 1, 0, 1], 0.1)
        });
        assert!(good < bad);
    }

    #[test]
    fn missing_positive_and_single_class() {
        let z = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut g = Graph::new();
        let id = g.constant(z.clone());
        assert!(supcon_loss(&mut g, id, &[0, 1], 0.1).is_err());
        let w = g.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        assert!(esupcon_loss(&mut g, id, &[0, 0], w, 0.1).is_err());
    }

    #[test]
    fn proba_properties() {
        let p = ClassifierPrototypes::new(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0]).unwrap(), 0.01).unwrap();
        let probs = predict_proba(&[1.0, 0.0], &p).unwrap();
        assert!(probs[0] > 1.0 - 1e-12);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let flat = predict_proba(&[0.0, 0.0], &p).unwrap();
        assert!(flat.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(predict_class(&[0.0, 1.0], &p).unwrap(), 1);
    }
}
