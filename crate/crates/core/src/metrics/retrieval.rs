use std::collections::BTreeMap;

use crate::autodiff::{dot, Tensor};
use crate::error::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-9;

/// Row-normalized embeddings with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    embeddings: Tensor,
    labels: Vec<usize>,
}

impl LabeledEmbeddings {
    pub fn new(embeddings: Tensor, labels: Vec<usize>) -> Result<Self> {
        if embeddings.shape().len() != 2 {
            return Err(Error::invalid("embeddings must be a matrix"));
        }
        if labels.len() != embeddings.rows() {
            return Err(Error::ShapeMismatch {
                op: "labeled_embeddings",
                shapes: vec![embeddings.shape().to_vec(), vec![labels.len()]],
            });
        }
        for i in 0..embeddings.rows() {
            let norm = dot(embeddings.row(i), embeddings.row(i)).sqrt();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::invalid(format!("row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { embeddings, labels })
    }

    /// Normalizes the rows of `features` first.
    pub fn from_features(features: &Tensor, labels: Vec<usize>) -> Result<Self> {
        Self::new(features.l2_normalize_rows(), labels)
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }
}

/// Candidates of row `i` ordered by decreasing score, ties by index.
fn ranking(scores: &[f64], exclude: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&j| j != exclude).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Exact recall@k under cosine similarity, averaged over queries that have
/// at least one positive. Each query is normalized by `min(k, |positives|)`.
pub fn recall_at_k(data: &LabeledEmbeddings, k: usize) -> Result<f64> {
    Ok(recall_at_ks(data, &[k])?[0])
}

/// [`recall_at_k`] for several `k` with one ranking pass.
pub fn recall_at_ks(data: &LabeledEmbeddings, ks: &[usize]) -> Result<Vec<f64>> {
    let sims = data.embeddings.matmul_transposed(&data.embeddings)?;
    recall_at_ks_from_scores(&sims, data.labels(), ks)
}

/// Recall@k for a square similarity matrix whose row `i` scores the query
/// `i` against every sample (the diagonal is ignored).
pub fn recall_at_ks_from_scores(sims: &Tensor, labels: &[usize], ks: &[usize]) -> Result<Vec<f64>> {
    if ks.iter().any(|&k| k < 1) {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = labels.len();
    if n < 2 || sims.shape() != [n, n] {
        return Err(Error::invalid(format!(
            "need a square score matrix over at least 2 samples, got {:?} for {n} labels",
            sims.shape()
        )));
    }
    let mut totals = vec![0.0; ks.len()];
    let mut queries = 0usize;
    for i in 0..n {
        let positives = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if positives == 0 {
            continue;
        }
        queries += 1;
        let order = ranking(sims.row(i), i);
        for (total, &k) in totals.iter_mut().zip(ks) {
            let hits = order.iter().take(k).filter(|&&j| labels[j] == labels[i]).count();
            *total += hits as f64 / k.min(positives) as f64;
        }
    }
    if queries == 0 {
        return Err(Error::invalid("no query has a positive sample"));
    }
    Ok(totals.into_iter().map(|t| t / queries as f64).collect())
}

/// Majority vote among the `k` most cosine-similar training rows.
///
/// Vote ties go to the tied label whose best-ranked member is nearest to the
/// query, then to the smallest label id.
pub fn knn_classify(train: &LabeledEmbeddings, query: &[f64], k: usize) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if k < 1 || k > train.len() {
        return Err(Error::invalid(format!("k must lie in 1..={}, got {k}", train.len())));
    }
    if query.len() != train.dim() {
        return Err(Error::ShapeMismatch {
            op: "knn_classify",
            shapes: vec![vec![query.len()], train.embeddings.shape().to_vec()],
        });
    }
    let norm = dot(query, query).sqrt();
    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    let q: Vec<f64> = query.iter().map(|v| v * scale).collect();
    let scores: Vec<f64> = (0..train.len())
        .map(|i| dot(&q, train.embeddings.row(i)))
        .collect();
    let order = ranking(&scores, usize::MAX);

    // label -> (votes, position of its best-ranked neighbor)
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (pos, &i) in order.iter().take(k).enumerate() {
        let entry = tally.entry(train.labels[i]).or_insert((0, pos));
        entry.0 += 1;
    }
    let best = tally
        .iter()
        .max_by(|(la, (va, pa)), (lb, (vb, pb))| {
            va.cmp(vb).then(pb.cmp(pa)).then(lb.cmp(la))
        })
        .map(|(&label, _)| label)
        .expect("k >= 1 neighbors");
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(rows: &[[f64; 2]], labels: &[usize]) -> LabeledEmbeddings {
        let t = Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        LabeledEmbeddings::from_features(&t, labels.to_vec()).unwrap()
    }

    #[test]
    fn separated_clusters_have_perfect_recall() {
        let data = embed(
            &[[1.0, 0.01], [1.0, -0.01], [1.0, 0.0], [-1.0, 0.02], [-1.0, -0.02], [-1.0, 0.0]],
            &[0, 0, 0, 1, 1, 1],
        );
        assert_eq!(recall_at_k(&data, 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&data, 2).unwrap(), 1.0);
    }

    #[test]
    fn positive_ranked_third() {
        // Query 0's only positive (row 3) ranks third behind rows 1 and 2.
        let sims = Tensor::matrix(
            4,
            4,
            vec![
                1.0, 0.9, 0.8, 0.7, //
                0.9, 1.0, 0.0, 0.0, //
                0.8, 0.0, 1.0, 0.0, //
                0.7, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        let labels = [0, 1, 2, 0];
        // Only queries 0 and 3 have positives; both see each other third/first.
        let r = recall_at_ks_from_scores(&sims, &labels, &[2]).unwrap();
        // query 0: 0/1, query 3: row 0 is its top match -> 1/1
        assert_eq!(r, vec![0.5]);
    }

    #[test]
    fn rejects_zero_k_and_no_positives() {
        let data = embed(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1]);
        assert!(recall_at_k(&data, 0).is_err());
        assert!(recall_at_k(&data, 1).is_err());
    }

    #[test]
    fn norm_invariant_checked() {
        let t = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(LabeledEmbeddings::new(t, vec![0]).is_err());
    }

    #[test]
    fn knn_nearest_row_and_ties() {
        let data = embed(&[[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]], &[4, 2, 9]);
        assert_eq!(knn_classify(&data, &[1.0, 0.0], 1).unwrap(), 4);
        assert_eq!(knn_classify(&data, &[0.0, 3.0], 1).unwrap(), 2);
        // k=2 from [1, 0.1]: nearest rows 0 (label 4) then 2 (label 9) -> tie, nearest wins.
        assert_eq!(knn_classify(&data, &[1.0, 0.1], 2).unwrap(), 4);
        assert!(knn_classify(&data, &[1.0, 0.0], 4).is_err());
        assert!(knn_classify(&data, &[1.0], 1).is_err());
    }
}
