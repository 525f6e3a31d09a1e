//! The smooth recall@k loss.
//!
//! For query `i` and candidate `j`, the smooth rank is
//! `r(i, j) = 1 + Σ_l σ((s_il − s_ij) / τ₂)` over rankable candidates
//! `l ≠ j`, and the relaxed hit indicator at cut-off `k` is
//! `σ((k − r(i, j) + ½) / τ₁)`. The loss is one minus the relaxed recall
//! averaged over queries and over the cut-offs in `k_set`.

use super::block::SimilarityBlock;
use super::simix::SimixPlan;
use super::smooth::{heaviside_node, SmoothParams};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Constant tensors derived from a block's label relations.
#[derive(Debug, Clone)]
pub struct RankMasks {
    queries: usize,
    candidates: usize,
    /// `q × n × n`: 1 where candidate `l` counts towards the rank of `j`.
    rank_mask: Tensor,
    /// Per cut-off, `q × n`: `1 / min(k, |P_i|)` on positives, else 0.
    weights: Vec<Tensor>,
}

impl RankMasks {
    pub fn new(
        queries: usize,
        candidates: usize,
        same_label: &[bool],
        self_mask: &[bool],
        k_set: &[usize],
    ) -> Result<Self> {
        let (q, n) = (queries, candidates);
        if same_label.len() != q * n || self_mask.len() != q * n {
            return Err(Error::ShapeMismatch {
                op: "rank_masks",
                shapes: vec![vec![q, n], vec![same_label.len()], vec![self_mask.len()]],
            });
        }
        let mut rank_mask = vec![0.0; q * n * n];
        let mut weights = vec![vec![0.0; q * n]; k_set.len()];
        for i in 0..q {
            let row_self = &self_mask[i * n..(i + 1) * n];
            let row_same = &same_label[i * n..(i + 1) * n];
            let positives = (0..n).filter(|&j| row_same[j] && !row_self[j]).count();
            if positives == 0 {
                return Err(Error::invalid(format!("query {i} has no positive candidate")));
            }
            for j in 0..n {
                if row_self[j] {
                    continue;
                }
                let base = (i * n + j) * n;
                for l in 0..n {
                    if l != j && !row_self[l] {
                        rank_mask[base + l] = 1.0;
                    }
                }
                if row_same[j] {
                    for (w, &k) in weights.iter_mut().zip(k_set) {
                        w[i * n + j] = 1.0 / k.min(positives) as f64;
                    }
                }
            }
        }
        Ok(Self {
            queries: q,
            candidates: n,
            rank_mask: Tensor::from_parts(vec![q, n, n], rank_mask),
            weights: weights
                .into_iter()
                .map(|w| Tensor::from_parts(vec![q, n], w))
                .collect(),
        })
    }

    pub fn for_block(block: &SimilarityBlock, k_set: &[usize]) -> Result<Self> {
        Self::new(
            block.queries(),
            block.candidates(),
            &block.same_label,
            &block.self_mask,
            k_set,
        )
    }

    /// Square masks for a batch where every sample is a query and the
    /// candidates are the batch followed by optional virtual samples.
    pub fn for_batch(labels: &[usize], simix: Option<&SimixPlan>, k_set: &[usize]) -> Result<Self> {
        let (same, mask) = batch_relations(labels, simix)?;
        let n = same.len() / labels.len();
        Self::new(labels.len(), n, &same, &mask, k_set)
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

/// `same_label` and `self_mask` for a batch of real queries against the
/// batch itself plus the virtual samples described by `simix`.
pub(crate) fn batch_relations(
    labels: &[usize],
    simix: Option<&SimixPlan>,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let q = labels.len();
    let virtuals = simix.map_or(0, |p| p.len());
    if let Some(p) = simix {
        if p.real_count() != q {
            return Err(Error::invalid(format!(
                "mixup plan built for {} samples, batch has {q}",
                p.real_count()
            )));
        }
    }
    let n = q + virtuals;
    let mut same = vec![false; q * n];
    let mut mask = vec![false; q * n];
    for i in 0..q {
        for j in 0..q {
            same[i * n + j] = labels[i] == labels[j];
            mask[i * n + j] = i == j;
        }
        if let Some(p) = simix {
            for (c, &(u, v)) in p.pairs().iter().enumerate() {
                same[i * n + q + c] = labels[u] == labels[i] && labels[v] == labels[i];
                mask[i * n + q + c] = u == i || v == i;
            }
        }
    }
    Ok((same, mask))
}

/// Smooth ranks `q × n` of every candidate for every query.
pub fn smooth_ranks_node(g: &mut Graph, scores: NodeId, masks: &RankMasks, tau2: f64) -> Result<NodeId> {
    let shape = g.value(scores).shape().to_vec();
    if shape != [masks.queries, masks.candidates] {
        return Err(Error::ShapeMismatch {
            op: "smooth_ranks",
            shapes: vec![shape, vec![masks.queries, masks.candidates]],
        });
    }
    let diffs = g.pairwise_diff(scores)?;
    let above = heaviside_node(g, diffs, tau2)?;
    let counted = g.mul_const(above, masks.rank_mask.clone())?;
    let total = g.sum_last_axis(counted)?;
    g.add_scalar(total, 1.0)
}

/// `Σ_k Σ_i Σ_{j ∈ P_i} σ((k − r(i,j) + ½) / τ₁) / min(k, |P_i|)`.
pub fn recall_sum_node(g: &mut Graph, ranks: NodeId, masks: &RankMasks, params: &SmoothParams) -> Result<NodeId> {
    if masks.weights.len() != params.k_set.len() {
        return Err(Error::invalid("masks were built for a different k_set"));
    }
    let neg = g.neg(ranks)?;
    let mut acc: Option<NodeId> = None;
    for (&k, w) in params.k_set.iter().zip(&masks.weights) {
        let margin = g.add_scalar(neg, k as f64 + 0.5)?;
        let hit = heaviside_node(g, margin, params.tau1)?;
        let weighted = g.mul_const(hit, w.clone())?;
        let s = g.sum(weighted)?;
        acc = Some(match acc {
            None => s,
            Some(a) => g.add(a, s)?,
        });
    }
    Ok(acc.expect("k_set is non-empty"))
}

/// `1 − recall_sum / (|k_set| · normalizer)`; `normalizer` is the number of
/// queries in the full batch.
pub(crate) fn loss_from_recall_sum(
    g: &mut Graph,
    recall_sum: NodeId,
    params: &SmoothParams,
    normalizer: usize,
) -> Result<NodeId> {
    let scaled = g.scale(recall_sum, -1.0 / (params.k_set.len() * normalizer) as f64)?;
    g.add_scalar(scaled, 1.0)
}

/// Loss node for a `q × n` score node.
pub fn rsk_loss_node(g: &mut Graph, scores: NodeId, masks: &RankMasks, params: &SmoothParams) -> Result<NodeId> {
    params.validate()?;
    let ranks = smooth_ranks_node(g, scores, masks, params.tau2)?;
    let recall = recall_sum_node(g, ranks, masks, params)?;
    loss_from_recall_sum(g, recall, params, masks.queries)
}

/// Loss value of a fixed block.
pub fn rsk_loss(block: &SimilarityBlock, params: &SmoothParams) -> Result<f64> {
    params.validate()?;
    let masks = RankMasks::for_block(block, &params.k_set)?;
    let mut g = Graph::new();
    let scores = g.constant(block.scores.clone());
    let loss = rsk_loss_node(&mut g, scores, &masks, params)?;
    g.value(loss).item()
}

/// Loss over a batch of normalized embedding rows (a graph node), with
/// optional similarity mixup.
pub fn rsk_loss_on_embeddings(
    g: &mut Graph,
    embeddings: NodeId,
    labels: &[usize],
    params: &SmoothParams,
    simix: Option<&SimixPlan>,
) -> Result<NodeId> {
    let rows = g.value(embeddings).rows();
    if rows != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "rsk_loss_on_embeddings",
            shapes: vec![g.value(embeddings).shape().to_vec(), vec![labels.len()]],
        });
    }
    let masks = RankMasks::for_batch(labels, simix, &params.k_set)?;
    let mut scores = g.matmul_t(embeddings, embeddings)?;
    if let Some(plan) = simix {
        let mix = g.constant(plan.mixing_matrix()?);
        scores = g.matmul(scores, mix)?;
    }
    rsk_loss_node(g, scores, &masks, params)
}
