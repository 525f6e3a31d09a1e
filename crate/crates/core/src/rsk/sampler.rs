use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Largest batch the default plan will request.
pub const MAX_DEFAULT_BATCH: usize = 4000;
pub const DEFAULT_SAMPLES_PER_CLASS: usize = 4;

/// Class-balanced batch layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
    pub chunk_size: usize,
}

impl BatchPlan {
    pub fn new(classes_per_batch: usize, samples_per_class: usize, chunk_size: usize) -> Result<Self> {
        let p = Self {
            classes_per_batch,
            samples_per_class,
            chunk_size,
        };
        p.validate()?;
        Ok(p)
    }

    /// Batch of `min(4000, 4 × classes)` with 4 samples per class, processed
    /// as a single chunk.
    pub fn default_for(num_classes: usize) -> Result<Self> {
        let batch = MAX_DEFAULT_BATCH.min(DEFAULT_SAMPLES_PER_CLASS * num_classes);
        let classes = batch / DEFAULT_SAMPLES_PER_CLASS;
        Self::new(classes, DEFAULT_SAMPLES_PER_CLASS, classes * DEFAULT_SAMPLES_PER_CLASS)
    }

    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes_per_batch < 1 {
            return Err(Error::config("batch.classes_per_batch", "must be at least 1"));
        }
        if self.samples_per_class < 2 {
            return Err(Error::config("batch.samples_per_class", "must be at least 2 so every query has a positive"));
        }
        if self.chunk_size < 1 || self.chunk_size > self.batch_size() {
            return Err(Error::config("batch.chunk_size", "must be in 1..=batch size"));
        }
        Ok(())
    }
}

/// Draws `classes_per_batch` distinct classes, then `samples_per_class`
/// members of each, all uniformly without replacement. Indices are grouped
/// by class in the order the classes were drawn.
pub fn sample_batch_with(labels: &[usize], plan: &BatchPlan, rng: &mut Rng) -> Result<Vec<usize>> {
    plan.validate()?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let eligible: Vec<&Vec<usize>> = by_class.values().filter(|m| m.len() >= plan.samples_per_class).collect();
    if eligible.len() < plan.classes_per_batch {
        return Err(Error::invalid(format!(
            "need {} classes with at least {} samples, found {}",
            plan.classes_per_batch,
            plan.samples_per_class,
            eligible.len()
        )));
    }
    let mut out = Vec::with_capacity(plan.batch_size());
    for c in index::sample(rng, eligible.len(), plan.classes_per_batch) {
        let members = eligible[c];
        out.extend(index::sample(rng, members.len(), plan.samples_per_class).into_iter().map(|k| members[k]));
    }
    Ok(out)
}

/// [`sample_batch_with`] on the sampler stream of `seed`.
pub fn sample_batch(labels: &[usize], plan: &BatchPlan, seed: u64) -> Result<Vec<usize>> {
    sample_batch_with(labels, plan, &mut rng::stream(seed, rng::SAMPLER))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> Vec<usize> {
        (0..60).map(|i| i % 6).collect()
    }

    #[test]
    fn default_plan_caps_batch() {
        let p = BatchPlan::default_for(8).unwrap();
        assert_eq!((p.classes_per_batch, p.samples_per_class, p.batch_size()), (8, 4, 32));
        assert_eq!(BatchPlan::default_for(5000).unwrap().batch_size(), 4000);
    }

    #[test]
    fn two_by_four() {
        let labels = pool();
        let plan = BatchPlan::new(2, 4, 8).unwrap();
        let b = sample_batch(&labels, &plan, 11).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b, sample_batch(&labels, &plan, 11).unwrap());
        let mut seen = b.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        for &i in &b {
            let positives = b.iter().filter(|&&j| j != i && labels[j] == labels[i]).count();
            assert_eq!(positives, 3);
        }
    }

    #[test]
    fn insufficient_population() {
        let plan = BatchPlan::new(7, 4, 4).unwrap();
        assert!(sample_batch(&pool(), &plan, 0).is_err());
        assert!(BatchPlan::new(2, 4, 9).is_err());
    }
}
