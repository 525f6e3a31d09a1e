//! Large-batch gradients of the recall@k surrogate in query chunks.
//!
//! The loss is a sum over queries, but every query's smooth ranks depend on
//! the whole batch, so the monolithic graph holds `n × n × n` pairwise terms.
//! The chunked scheme keeps at most `chunk × n × n` alive:
//!
//! 1. For each chunk of queries, evaluate its smooth ranks without keeping
//!    the graph, and cache them with `∂L/∂rank` (cheap: ranks are `chunk × n`).
//! 2. For each chunk, rebuild the similarities from the embeddings, recompute
//!    the ranks and back-propagate the cached cotangent into the embeddings.
//!
//! Chunks of pass two run on the rayon pool; their contributions are summed
//! in chunk order so the result does not depend on scheduling.

use rayon::prelude::*;

use super::loss::{batch_relations, loss_from_recall_sum, recall_sum_node, smooth_ranks_node, RankMasks};
use super::smooth::SmoothParams;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradientResult {
    pub loss: f64,
    /// `∂loss/∂embeddings`, same shape as the embeddings.
    pub grad: Tensor,
    /// Largest number of `f64` values held by any single graph.
    pub peak_live_elements: usize,
}

fn check_inputs(embeddings: &Tensor, labels: &[usize], params: &SmoothParams) -> Result<()> {
    params.validate()?;
    if embeddings.shape().len() != 2 || embeddings.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "rsk_gradients",
            shapes: vec![embeddings.shape().to_vec(), vec![labels.len()]],
        });
    }
    Ok(())
}

/// Reference gradient from one graph over the whole batch.
pub fn monolithic_gradients(embeddings: &Tensor, labels: &[usize], params: &SmoothParams) -> Result<GradientResult> {
    check_inputs(embeddings, labels, params)?;
    let mut g = Graph::new();
    let e = g.parameter(embeddings.clone());
    let masks = RankMasks::for_batch(labels, None, &params.k_set)?;
    let scores = g.matmul_t(e, e)?;
    let ranks = smooth_ranks_node(&mut g, scores, &masks, params.tau2)?;
    let recall = recall_sum_node(&mut g, ranks, &masks, params)?;
    let loss = loss_from_recall_sum(&mut g, recall, params, labels.len())?;
    let grads = g.backward(loss)?;
    Ok(GradientResult {
        loss: g.value(loss).item()?,
        grad: grads.wrt(e),
        peak_live_elements: g.live_elements(),
    })
}

struct Chunk {
    rows: Vec<usize>,
    masks: RankMasks,
}

fn chunk_masks(labels: &[usize], rows: &[usize], k_set: &[usize]) -> Result<RankMasks> {
    let n = labels.len();
    let (same, mask) = batch_relations(labels, None)?;
    let pick = |v: &[bool]| -> Vec<bool> { rows.iter().flat_map(|&i| v[i * n..(i + 1) * n].to_vec()).collect() };
    RankMasks::new(rows.len(), n, &pick(&same), &pick(&mask), k_set)
}

/// Smooth ranks of one chunk, recorded against the full embedding matrix.
fn chunk_ranks(g: &mut Graph, e: crate::autodiff::NodeId, chunk: &Chunk, tau2: f64) -> Result<crate::autodiff::NodeId> {
    let ec = g.gather_rows(e, &chunk.rows)?;
    let scores = g.matmul_t(ec, e)?;
    smooth_ranks_node(g, scores, &chunk.masks, tau2)
}

/// Two-pass chunked gradient; equals [`monolithic_gradients`] up to
/// floating-point reassociation.
pub fn chunked_gradients(
    embeddings: &Tensor,
    labels: &[usize],
    params: &SmoothParams,
    chunk: usize,
) -> Result<GradientResult> {
    check_inputs(embeddings, labels, params)?;
    let n = labels.len();
    if chunk < 1 || chunk > n {
        return Err(Error::invalid(format!("chunk size must be in 1..={n}, got {chunk}")));
    }
    let chunks = (0..n)
        .step_by(chunk)
        .map(|start| {
            let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
            let masks = chunk_masks(labels, &rows, &params.k_set)?;
            Ok(Chunk { rows, masks })
        })
        .collect::<Result<Vec<_>>>()?;

    // Pass one: ranks (graphs dropped), then the loss and the cotangent of
    // each chunk's ranks.
    let mut peak = 0;
    let mut recall_total = 0.0;
    let mut cotangents = Vec::with_capacity(chunks.len());
    for c in &chunks {
        let ranks = {
            let mut g = Graph::new();
            let e = g.constant(embeddings.clone());
            let r = chunk_ranks(&mut g, e, c, params.tau2)?;
            peak = peak.max(g.live_elements());
            g.value(r).clone()
        };
        let mut g = Graph::new();
        let r = g.parameter(ranks);
        let recall = recall_sum_node(&mut g, r, &c.masks, params)?;
        // Scaling here rather than on the total keeps each cotangent final.
        let part = g.scale(recall, -1.0 / (params.k_set.len() * n) as f64)?;
        recall_total += g.value(recall).item()?;
        cotangents.push(g.backward(part)?.wrt(r));
        peak = peak.max(g.live_elements());
    }
    let loss = 1.0 - recall_total / (params.k_set.len() * n) as f64;

    // Pass two: recompute and pull each cotangent back to the embeddings.
    let parts = chunks
        .par_iter()
        .zip(cotangents)
        .map(|(c, cot)| {
            let mut g = Graph::new();
            let e = g.parameter(embeddings.clone());
            let r = chunk_ranks(&mut g, e, c, params.tau2)?;
            let grads = g.backward_with_seed(r, cot)?;
            Ok((grads.wrt(e), g.live_elements()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; embeddings.numel()];
    for (part, live) in parts {
        peak = peak.max(live);
        grad.iter_mut().zip(part.data()).for_each(|(g, p)| *g += p);
    }
    Ok(GradientResult {
        loss,
        grad: Tensor::new(embeddings.shape().to_vec(), grad)?,
        peak_live_elements: peak,
    })
}
