use crate::autodiff::{dot, Tensor};
use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-9;

/// Query-by-candidate similarity scores with the label relations the
/// surrogate needs.
///
/// Row `i` is a query, column `l` a candidate. `self_mask[i][l]` marks
/// candidates that must not be ranked for query `i` (the query itself, and
/// virtual candidates mixed from it).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub scores: Tensor,
    pub query_labels: Vec<usize>,
    pub candidate_labels: Vec<usize>,
    pub same_label: Vec<bool>,
    pub self_mask: Vec<bool>,
}

impl SimilarityBlock {
    pub fn new(
        scores: Tensor,
        query_labels: Vec<usize>,
        candidate_labels: Vec<usize>,
        self_mask: Vec<bool>,
    ) -> Result<Self> {
        let (q, n) = (query_labels.len(), candidate_labels.len());
        if scores.shape() != [q, n] || self_mask.len() != q * n {
            return Err(Error::ShapeMismatch {
                op: "similarity_block",
                shapes: vec![scores.shape().to_vec(), vec![q, n], vec![self_mask.len()]],
            });
        }
        let same_label = query_labels
            .iter()
            .flat_map(|a| candidate_labels.iter().map(move |b| a == b))
            .collect();
        Ok(Self {
            scores,
            query_labels,
            candidate_labels,
            same_label,
            self_mask,
        })
    }

    pub fn queries(&self) -> usize {
        self.query_labels.len()
    }

    pub fn candidates(&self) -> usize {
        self.candidate_labels.len()
    }

    pub fn score(&self, i: usize, l: usize) -> f64 {
        self.scores.get2(i, l)
    }

    pub fn is_self(&self, i: usize, l: usize) -> bool {
        self.self_mask[i * self.candidates() + l]
    }

    /// Candidate `l` shares query `i`'s label and is rankable for it.
    pub fn is_positive(&self, i: usize, l: usize) -> bool {
        let idx = i * self.candidates() + l;
        self.same_label[idx] && !self.self_mask[idx]
    }

    pub fn positives(&self, i: usize) -> Vec<usize> {
        (0..self.candidates()).filter(|&l| self.is_positive(i, l)).collect()
    }
}

fn check_normalized(t: &Tensor, what: &str) -> Result<()> {
    for i in 0..t.rows() {
        let norm = dot(t.row(i), t.row(i)).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(format!("{what} row {i} has norm {norm}, expected 1")));
        }
    }
    Ok(())
}

/// All-pairs cosine similarities of normalized rows; every row is a query
/// and the diagonal is masked.
pub fn similarity_matrix(embeddings: &Tensor, labels: &[usize]) -> Result<SimilarityBlock> {
    if embeddings.shape().len() != 2 || embeddings.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "similarity_matrix",
            shapes: vec![embeddings.shape().to_vec(), vec![labels.len()]],
        });
    }
    check_normalized(embeddings, "embedding")?;
    let n = labels.len();
    let scores = embeddings.matmul_transposed(embeddings)?;
    let self_mask = (0..n * n).map(|idx| idx / n == idx % n).collect();
    SimilarityBlock::new(scores, labels.to_vec(), labels.to_vec(), self_mask)
}

/// Similarities of `queries` against `candidates`. `query_index[i]`, when
/// set, is the candidate column holding query `i` itself.
pub fn cross_similarity(
    queries: &Tensor,
    query_labels: &[usize],
    query_index: &[Option<usize>],
    candidates: &Tensor,
    candidate_labels: &[usize],
) -> Result<SimilarityBlock> {
    if queries.cols() != candidates.cols() {
        return Err(Error::ShapeMismatch {
            op: "cross_similarity",
            shapes: vec![queries.shape().to_vec(), candidates.shape().to_vec()],
        });
    }
    if queries.rows() != query_labels.len()
        || query_index.len() != query_labels.len()
        || candidates.rows() != candidate_labels.len()
    {
        return Err(Error::invalid("label and index lists must match the row counts"));
    }
    check_normalized(queries, "query")?;
    check_normalized(candidates, "candidate")?;
    let n = candidate_labels.len();
    let scores = queries.matmul_transposed(candidates)?;
    let self_mask = (0..query_labels.len() * n)
        .map(|idx| query_index[idx / n] == Some(idx % n))
        .collect();
    SimilarityBlock::new(scores, query_labels.to_vec(), candidate_labels.to_vec(), self_mask)
}

/// `1 + Σ σ((s(q,l) − s(q,target)) / tau)` over rankable candidates
/// `l ≠ target`.
pub fn smooth_rank(block: &SimilarityBlock, query: usize, target: usize, tau: f64) -> Result<f64> {
    if query >= block.queries() || target >= block.candidates() {
        return Err(Error::invalid(format!(
            "index ({query}, {target}) outside block of {} x {}",
            block.queries(),
            block.candidates()
        )));
    }
    if block.is_self(query, target) {
        return Err(Error::invalid("target is masked for this query"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let st = block.score(query, target);
    let sigma = |x: f64| {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    };
    let rank = 1.0
        + (0..block.candidates())
            .filter(|&l| l != target && !block.is_self(query, l))
            .map(|l| sigma((block.score(query, l) - st) / tau))
            .sum::<f64>();
    Ok(rank)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_orthogonal_rows() {
        let e = Tensor::matrix(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = similarity_matrix(&e, &[0, 0, 1]).unwrap();
        assert_eq!(b.score(0, 1), 1.0);
        assert_eq!(b.score(0, 2), 0.0);
        assert!(b.is_self(1, 1) && !b.is_self(1, 0));
        assert_eq!(b.positives(0), vec![1]);
    }

    #[test]
    fn rejects_unnormalized_and_mismatched() {
        let e = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(similarity_matrix(&e, &[0]).is_err());
        let q = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let c = Tensor::matrix(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cross_similarity(&q, &[0], &[None], &c, &[0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn line_block(scores: &[f64]) -> SimilarityBlock {
        // Query 0 plus candidates 1..; the query's own column carries score 1.
        let mut row = vec![1.0];
        row.extend_from_slice(scores);
        let n = row.len();
        let mut mask = vec![false; n];
        mask[0] = true;
        SimilarityBlock::new(Tensor::matrix(1, n, row).unwrap(), vec![0], vec![0; n], mask).unwrap()
    }

    #[test]
    fn rank_extremes() {
        let b = line_block(&[0.9, -0.9, -0.95, -0.99]);
        assert!((smooth_rank(&b, 0, 1, 0.01).unwrap() - 1.0).abs() < 1e-12);
        let b = line_block(&[-0.9, 0.9, 0.95, 0.99]);
        assert!((smooth_rank(&b, 0, 1, 0.01).unwrap() - 4.0).abs() < 1e-12);
        assert!(smooth_rank(&b, 0, 0, 0.01).is_err());
        assert!(smooth_rank(&b, 0, 9, 0.01).is_err());
    }
}
