//! Similarity mixup.
//!
//! A virtual sample mixes two real same-class samples `u`, `v` with weight
//! `λ`. Because similarities are dot products, the virtual sample's scores
//! against every real row are `λ·S[·, u] + (1 − λ)·S[·, v]`, so the mixup is
//! done on the similarity matrix and no embedding is ever materialized.
//! Virtual samples are candidates only, never queries.

use rand::Rng as _;

use super::block::SimilarityBlock;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Which real samples each virtual sample mixes, and with what weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SimixPlan {
    real_count: usize,
    pairs: Vec<(usize, usize)>,
    lambdas: Vec<f64>,
}

impl SimixPlan {
    pub fn new(real_count: usize, pairs: Vec<(usize, usize)>, lambdas: Vec<f64>) -> Result<Self> {
        if pairs.len() != lambdas.len() || pairs.is_empty() {
            return Err(Error::invalid("mixup needs one lambda per pair and at least one pair"));
        }
        if pairs.iter().any(|&(u, v)| u >= real_count || v >= real_count) {
            return Err(Error::invalid("mixup pair index out of range"));
        }
        if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::invalid("mixup lambdas must lie in [0, 1]"));
        }
        Ok(Self {
            real_count,
            pairs,
            lambdas,
        })
    }

    /// Draws `lambdas.len()` same-class pairs `u ≠ v` uniformly.
    pub fn with_lambdas(labels: &[usize], lambdas: Vec<f64>, rng: &mut Rng) -> Result<Self> {
        let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &y) in labels.iter().enumerate() {
            by_class.entry(y).or_default().push(i);
        }
        if let Some((y, members)) = by_class.iter().find(|(_, m)| m.len() < 2) {
            return Err(Error::invalid(format!(
                "class {y} has {} sample(s); mixup pairs need at least 2",
                members.len()
            )));
        }
        let pairs = (0..lambdas.len())
            .map(|_| {
                let u = rng.random_range(0..labels.len());
                let members = &by_class[&labels[u]];
                let pos = members.iter().position(|&m| m == u).expect("u is a member");
                let mut other = rng.random_range(0..members.len() - 1);
                if other >= pos {
                    other += 1;
                }
                (u, members[other])
            })
            .collect();
        Self::new(labels.len(), pairs, lambdas)
    }

    /// `count` virtual samples with `λ ~ U(0, 1)`.
    pub fn sample(labels: &[usize], count: usize, rng: &mut Rng) -> Result<Self> {
        let lambdas = (0..count).map(|_| rng.random::<f64>()).collect();
        Self::with_lambdas(labels, lambdas, rng)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.real_count
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `n × (n + v)` matrix `[I | M]`: right-multiplying real scores by it
    /// appends the virtual columns.
    pub fn mixing_matrix(&self) -> Result<Tensor> {
        let n = self.real_count;
        let w = n + self.len();
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            data[i * w + i] = 1.0;
        }
        for (c, (&(u, v), &l)) in self.pairs.iter().zip(&self.lambdas).enumerate() {
            data[u * w + n + c] += l;
            data[v * w + n + c] += 1.0 - l;
        }
        Tensor::matrix(n, w, data)
    }
}

/// A block expanded with virtual candidates.
#[derive(Debug, Clone)]
pub struct SimixExpansion {
    /// `n × (n + v)`: the real block with virtual columns appended.
    pub block: SimilarityBlock,
    pub plan: SimixPlan,
    /// `v × v` similarities among the virtual samples.
    pub virtual_gram: Tensor,
}

/// Appends one virtual candidate per entry of `lambdas` to a square block
/// built by [`similarity_matrix`](super::similarity_matrix).
pub fn simix_expand(block: &SimilarityBlock, lambdas: &[f64], seed: u64) -> Result<SimixExpansion> {
    let n = block.queries();
    if block.candidates() != n || block.query_labels != block.candidate_labels {
        return Err(Error::invalid("mixup expects a square block over a single batch"));
    }
    let mut rng = rng::stream(seed, rng::SIMIX);
    let plan = SimixPlan::with_lambdas(&block.query_labels, lambdas.to_vec(), &mut rng)?;
    let mix = plan.mixing_matrix()?;
    let scores = matmul(&block.scores, &mix);
    let virt = virtual_columns(&mix, n);
    let virtual_gram = matmul(&transpose(&virt), &matmul(&block.scores, &virt));

    let w = n + plan.len();
    let mut candidate_labels = block.candidate_labels.clone();
    candidate_labels.extend(plan.pairs.iter().map(|&(u, _)| block.candidate_labels[u]));
    let mut self_mask = vec![false; n * w];
    for i in 0..n {
        self_mask[i * w..i * w + n].copy_from_slice(&block.self_mask[i * n..(i + 1) * n]);
        for (c, &(u, v)) in plan.pairs.iter().enumerate() {
            self_mask[i * w + n + c] = u == i || v == i;
        }
    }
    let block = SimilarityBlock::new(scores, block.query_labels.clone(), candidate_labels, self_mask)?;
    Ok(SimixExpansion {
        block,
        plan,
        virtual_gram,
    })
}

fn virtual_columns(mix: &Tensor, n: usize) -> Tensor {
    let w = mix.cols();
    let v = w - n;
    let data = (0..n).flat_map(|i| mix.row(i)[n..].to_vec()).collect();
    Tensor::from_parts(vec![n, v], data)
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let data = (0..c).flat_map(|j| (0..r).map(move |i| t.get2(i, j))).collect();
    Tensor::from_parts(vec![c, r], data)
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let x = a.get2(i, p);
            for (o, y) in out[i * m..(i + 1) * m].iter_mut().zip(b.row(p)) {
                *o += x * y;
            }
        }
    }
    Tensor::from_parts(vec![n, m], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsk::block::similarity_matrix;

    fn batch() -> (Tensor, Vec<usize>) {
        let mut rng = rng::stream(3, "test");
        let e = rng::normal_tensor(&mut rng, &[8, 4], 1.0).l2_normalize_rows();
        (e, vec![0, 0, 1, 1, 2, 2, 3, 3])
    }

    #[test]
    fn unit_lambda_copies_column() {
        let (e, y) = batch();
        let b = similarity_matrix(&e, &y).unwrap();
        let x = simix_expand(&b, &[1.0; 4], 9).unwrap();
        for (c, &(u, _)) in x.plan.pairs().iter().enumerate() {
            for i in 0..8 {
                assert_eq!(x.block.score(i, 8 + c), b.score(i, u));
            }
        }
    }

    #[test]
    fn pairs_are_same_class_and_distinct() {
        let (_, y) = batch();
        let mut rng = rng::stream(1, rng::SIMIX);
        let p = SimixPlan::sample(&y, 50, &mut rng).unwrap();
        assert!(p.pairs().iter().all(|&(u, v)| u != v && y[u] == y[v]));
        assert!(SimixPlan::sample(&[0, 0, 1], 2, &mut rng).is_err());
    }

    #[test]
    fn virtual_candidates_of_own_query_are_masked() {
        let (e, y) = batch();
        let b = similarity_matrix(&e, &y).unwrap();
        let x = simix_expand(&b, &[0.3, 0.7], 2).unwrap();
        for (c, &(u, v)) in x.plan.pairs().iter().enumerate() {
            assert!(x.block.is_self(u, 8 + c) && x.block.is_self(v, 8 + c));
            let other = (0..8).find(|&i| y[i] != y[u]).unwrap();
            assert!(!x.block.is_self(other, 8 + c) && !x.block.is_positive(other, 8 + c));
        }
    }
}
