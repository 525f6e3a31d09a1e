use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Layer widths of the surrogate encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateShape {
    /// Per-position symbol embedding width.
    pub embed: usize,
    pub hidden: usize,
    /// Output embedding dimension `m`.
    pub out: usize,
}

impl Default for SurrogateShape {
    fn default() -> Self {
        Self {
            embed: 8,
            hidden: 64,
            out: 16,
        }
    }
}

/// Deep embedding whose Euclidean distances approximate edit distance.
///
/// A sequence of `L` simplex rows over `A` symbols is embedded position-wise
/// by a shared `A × e` matrix, the `L · e` values are concatenated, then
/// passed through a ReLU layer and a linear layer to `R^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateNet {
    length: usize,
    alphabet: usize,
    shape: SurrogateShape,
    /// `[symbol embedding, w1, b1, w2, b2]`.
    pub params: Vec<Tensor>,
}

impl SurrogateNet {
    pub fn new(length: usize, alphabet: usize, shape: SurrogateShape, rng: &mut Rng) -> Result<Self> {
        if length == 0 || alphabet < 2 || shape.embed == 0 || shape.hidden == 0 || shape.out == 0 {
            return Err(Error::invalid("surrogate sizes must be positive and the alphabet at least 2"));
        }
        let wide = length * shape.embed;
        let glorot = |fan_in: usize, fan_out: usize| (2.0 / (fan_in + fan_out) as f64).sqrt();
        let params = vec![
            rng::normal_tensor(rng, &[alphabet, shape.embed], glorot(alphabet, shape.embed)),
            rng::normal_tensor(rng, &[wide, shape.hidden], glorot(wide, shape.hidden)),
            Tensor::zeros(&[shape.hidden]),
            rng::normal_tensor(rng, &[shape.hidden, shape.out], glorot(shape.hidden, shape.out)),
            Tensor::zeros(&[shape.out]),
        ];
        Ok(Self {
            length,
            alphabet,
            shape,
            params,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn out_dim(&self) -> usize {
        self.shape.out
    }

    /// Registers the weights in `g`, as parameters or as frozen constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| if trainable { g.parameter(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Embeds a batch given as `(B · L) × A` simplex rows; returns `B × m`.
    pub fn encode_node(&self, g: &mut Graph, weights: &[NodeId], seqs: NodeId) -> Result<NodeId> {
        let shape = g.value(seqs).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.alphabet || !shape[0].is_multiple_of(self.length) {
            return Err(Error::ShapeMismatch {
                op: "encode",
                shapes: vec![shape, vec![self.length, self.alphabet]],
            });
        }
        let batch = shape[0] / self.length;
        let per_position = g.matmul(seqs, weights[0])?;
        let flat = g.reshape(per_position, &[batch, self.length * self.shape.embed])?;
        let h = g.matmul(flat, weights[1])?;
        let h = g.add_row(h, weights[2])?;
        let h = g.relu(h)?;
        let out = g.matmul(h, weights[3])?;
        g.add_row(out, weights[4])
    }

    /// Embedding of one `L × A` simplex sequence.
    pub fn encode(&self, seq: &Tensor) -> Result<Tensor> {
        check_simplex(seq, self.length, self.alphabet)?;
        let mut g = Graph::new();
        let w = self.bind(&mut g, false);
        let x = g.constant(seq.clone());
        let out = self.encode_node(&mut g, &w, x)?;
        g.value(out).reshape(vec![self.shape.out])
    }
}

/// Rejects tensors that are not `length × alphabet` rows on the simplex.
pub fn check_simplex(seq: &Tensor, length: usize, alphabet: usize) -> Result<()> {
    if seq.shape() != [length, alphabet] {
        return Err(Error::ShapeMismatch {
            op: "simplex_rows",
            shapes: vec![seq.shape().to_vec(), vec![length, alphabet]],
        });
    }
    for i in 0..length {
        let row = seq.row(i);
        if row.iter().any(|&p| p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("row {i} is not on the probability simplex")));
        }
    }
    Ok(())
}

/// `‖enc(pred_b) − enc(gt_b)‖₂` for every sequence `b` of two batches in
/// `(B · L) × A` layout; returns a length-`B` node.
pub fn surrogate_values_node(
    net: &SurrogateNet,
    g: &mut Graph,
    weights: &[NodeId],
    pred: NodeId,
    gt: NodeId,
) -> Result<NodeId> {
    let a = net.encode_node(g, weights, pred)?;
    let b = net.encode_node(g, weights, gt)?;
    let d = g.sub(a, b)?;
    let sq = g.mul(d, d)?;
    let s = g.sum_last_axis(sq)?;
    g.sqrt(s)
}

/// Surrogate edit distance between two `L × A` simplex sequences.
pub fn surrogate_value(net: &SurrogateNet, pred: &Tensor, gt: &Tensor) -> Result<f64> {
    check_simplex(pred, net.length, net.alphabet)?;
    check_simplex(gt, net.length, net.alphabet)?;
    let mut g = Graph::new();
    let w = net.bind(&mut g, false);
    let p = g.constant(pred.clone());
    let t = g.constant(gt.clone());
    let v = surrogate_values_node(net, &mut g, &w, p, t)?;
    g.value(v).item()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> SurrogateNet {
        SurrogateNet::new(4, 3, SurrogateShape::default(), &mut rng::stream(1, rng::INIT)).unwrap()
    }

    fn one_hot(symbols: &[usize], a: usize) -> Tensor {
        let mut t = vec![0.0; symbols.len() * a];
        for (i, &s) in symbols.iter().enumerate() {
            t[i * a + s] = 1.0;
        }
        Tensor::matrix(symbols.len(), a, t).unwrap()
    }

    #[test]
    fn identity_and_symmetry() {
        let n = net();
        let a = one_hot(&[0, 1, 2, 0], 3);
        let b = one_hot(&[2, 1, 0, 0], 3);
        assert_eq!(surrogate_value(&n, &a, &a).unwrap(), 0.0);
        assert_eq!(surrogate_value(&n, &a, &b).unwrap(), surrogate_value(&n, &b, &a).unwrap());
        assert_eq!(n.encode(&a).unwrap(), n.encode(&a).unwrap());
        assert_eq!(n.encode(&a).unwrap().shape(), &[16]);
    }

    #[test]
    fn rejects_non_simplex() {
        let n = net();
        let bad = Tensor::matrix(4, 3, vec![0.5; 12]).unwrap();
        assert!(n.encode(&bad).is_err());
        assert!(n.encode(&one_hot(&[0, 1], 3)).is_err());
    }
}
