use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{edit_distance, SymbolSeq};
use crate::rng::{self, Rng};

/// One example of the string-recognition task: per-position features and
/// the target sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringSample {
    /// `L × F`.
    pub features: Tensor,
    pub target: SymbolSeq,
}

/// Per-position linear read-out `F → A` followed by a row softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    length: usize,
    features: usize,
    alphabet: usize,
    /// `[W (F × A), b (A)]`.
    pub params: Vec<Tensor>,
}

impl TaskModel {
    pub fn new(length: usize, features: usize, alphabet: usize, init_std: f64, rng: &mut Rng) -> Result<Self> {
        if length == 0 || features == 0 || alphabet < 2 {
            return Err(Error::invalid("task model sizes must be positive and the alphabet at least 2"));
        }
        Ok(Self {
            length,
            features,
            alphabet,
            params: vec![
                rng::normal_tensor(rng, &[features, alphabet], init_std),
                Tensor::zeros(&[alphabet]),
            ],
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| if trainable { g.parameter(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Stacks the features of `samples` into `(B · L) × F`.
    pub fn stack_features(&self, samples: &[&StringSample]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(samples.len() * self.length * self.features);
        for s in samples {
            if s.features.shape() != [self.length, self.features] {
                return Err(Error::ShapeMismatch {
                    op: "stack_features",
                    shapes: vec![s.features.shape().to_vec(), vec![self.length, self.features]],
                });
            }
            data.extend_from_slice(s.features.data());
        }
        Tensor::matrix(samples.len() * self.length, self.features, data)
    }

    /// `(B · L) × A` logits.
    pub fn logits_node(&self, g: &mut Graph, weights: &[NodeId], x: NodeId) -> Result<NodeId> {
        let z = g.matmul(x, weights[0])?;
        g.add_row(z, weights[1])
    }

    /// `(B · L) × A` simplex rows.
    pub fn forward_node(&self, g: &mut Graph, weights: &[NodeId], x: NodeId) -> Result<NodeId> {
        let z = self.logits_node(g, weights, x)?;
        g.softmax_rows(z)
    }

    /// Per-sample `L × A` predictions.
    pub fn predict(&self, samples: &[&StringSample]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let w = self.bind(&mut g, false);
        let x = g.constant(self.stack_features(samples)?);
        let p = self.forward_node(&mut g, &w, x)?;
        split_rows(g.value(p), self.length)
    }
}

/// Splits `(B · L) × A` into `B` tensors of `L × A`.
pub fn split_rows(t: &Tensor, length: usize) -> Result<Vec<Tensor>> {
    let a = t.cols();
    t.data()
        .chunks(length * a)
        .map(|c| Tensor::matrix(length, a, c.to_vec()))
        .collect()
}

/// Per-row argmax, ties to the smallest symbol.
pub fn decode_greedy(pred: &Tensor) -> SymbolSeq {
    let a = pred.cols();
    let symbols = (0..pred.rows())
        .map(|i| {
            pred.row(i)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect();
    SymbolSeq::new(symbols, a).expect("argmax is inside the alphabet")
}

/// `L × A` one-hot rows of `seq`.
pub fn one_hot(seq: &SymbolSeq) -> Tensor {
    let a = seq.alphabet();
    let mut data = vec![0.0; seq.len() * a];
    for (i, &s) in seq.symbols().iter().enumerate() {
        data[i * a + s] = 1.0;
    }
    Tensor::from_parts(vec![seq.len(), a], data)
}

/// Stacked one-hot targets in `(B · L) × A` layout.
pub fn stack_one_hot(targets: &[&SymbolSeq]) -> Result<Tensor> {
    let a = targets.first().map_or(0, |t| t.alphabet());
    let data: Vec<f64> = targets.iter().flat_map(|t| one_hot(t).into_data()).collect();
    Tensor::matrix(data.len() / a.max(1), a, data)
}

/// Mean per-position cross-entropy against one-hot targets.
pub fn proxy_loss_node(g: &mut Graph, logits: NodeId, targets: &Tensor) -> Result<NodeId> {
    let rows = targets.rows();
    let logp = g.log_softmax_rows(logits)?;
    let picked = g.mul_const(logp, targets.clone())?;
    let total = g.sum(picked)?;
    g.scale(total, -1.0 / rows as f64)
}

/// Total edit distance of greedy decodes over `samples`.
pub fn total_edit_distance_on(model: &TaskModel, samples: &[StringSample]) -> Result<usize> {
    let refs: Vec<&StringSample> = samples.iter().collect();
    let preds = model.predict(&refs)?;
    Ok(preds
        .iter()
        .zip(samples)
        .map(|(p, s)| edit_distance(&decode_greedy(p), &s.target))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_rules() {
        let s = SymbolSeq::new(vec![2, 0, 1], 3).unwrap();
        assert_eq!(decode_greedy(&one_hot(&s)), s);
        let uniform = Tensor::filled(&[2, 4], 0.25);
        assert_eq!(decode_greedy(&uniform).symbols(), &[0, 0]);
    }

    #[test]
    fn softmax_rows_are_simplex() {
        let mut rng = rng::stream(0, rng::INIT);
        let m = TaskModel::new(3, 5, 4, 1.0, &mut rng).unwrap();
        let sample = StringSample {
            features: rng::normal_tensor(&mut rng, &[3, 5], 1.0),
            target: SymbolSeq::new(vec![0, 1, 2], 4).unwrap(),
        };
        let p = &m.predict(&[&sample]).unwrap()[0];
        for i in 0..3 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
