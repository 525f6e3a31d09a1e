//! Seeded synthetic datasets.

use rand::Rng as _;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::learned::{one_hot, StringSample};
use crate::metrics::{LabeledEmbeddings, SymbolSeq};
use crate::rng::{self, Rng};

/// Unnormalized points with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClasses {
    /// `n × d`, grouped by class.
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// `C × d` unit-norm class means.
    pub means: Tensor,
}

impl GaussianClasses {
    pub fn normalized(&self) -> Result<LabeledEmbeddings> {
        LabeledEmbeddings::from_features(&self.features, self.labels.clone())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `idx` of the features with their labels.
    pub fn subset(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.features.cols();
        let data = idx.iter().flat_map(|&i| self.features.row(i).to_vec()).collect();
        (
            Tensor::matrix(idx.len(), d, data).expect("rows of a valid tensor"),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// `classes` means drawn uniformly on the unit sphere, `per_class` points
/// around each at `mean + N(0, σ² I)`.
pub fn gen_gaussian_classes(classes: usize, per_class: usize, dim: usize, sigma: f64, seed: u64) -> Result<GaussianClasses> {
    gen_gaussian_classes_with(classes, per_class, dim, sigma, &mut rng::stream(seed, rng::DATA))
}

pub fn gen_gaussian_classes_with(
    classes: usize,
    per_class: usize,
    dim: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Result<GaussianClasses> {
    if classes < 2 {
        return Err(Error::config("data.classes", "must be at least 2"));
    }
    if per_class < 1 {
        return Err(Error::config("data.per_class", "must be at least 1"));
    }
    if dim < 1 {
        return Err(Error::config("data.dim", "must be at least 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("data.sigma", "must be non-negative and finite"));
    }
    let means = loop {
        let m = rng::normal_tensor(rng, &[classes, dim], 1.0);
        if (0..classes).all(|c| m.row(c).iter().map(|v| v * v).sum::<f64>() > 1e-12) {
            break m.l2_normalize_rows();
        }
    };
    sample_around(&means, per_class, sigma, rng)
}

/// Extra points around existing class `means`, grouped by class.
pub fn sample_around(means: &Tensor, per_class: usize, sigma: f64, rng: &mut Rng) -> Result<GaussianClasses> {
    let (classes, dim) = (means.rows(), means.cols());
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            data.extend(means.row(c).iter().map(|&mu| mu + sigma * rng::normal(rng)));
            labels.push(c);
        }
    }
    Ok(GaussianClasses {
        features: Tensor::matrix(classes * per_class, dim, data)?,
        labels,
        means: means.clone(),
    })
}

/// Replaces a `fraction` of labels, chosen uniformly without replacement,
/// with a different class drawn uniformly.
pub fn corrupt_labels(labels: &mut [usize], classes: usize, fraction: f64, rng: &mut Rng) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) || classes < 2 {
        return Err(Error::invalid("label corruption needs a fraction in [0, 1] and at least two classes"));
    }
    let count = (fraction * labels.len() as f64).round() as usize;
    for i in rand::seq::index::sample(rng, labels.len(), count) {
        let shift = rng.random_range(1..classes);
        labels[i] = (labels[i] + shift) % classes;
    }
    Ok(count)
}

/// `n` uniform target strings of length `length` over `alphabet` symbols,
/// with features `one_hot(target) + N(0, noise²)`.
pub fn gen_string_task(n: usize, length: usize, alphabet: usize, noise: f64, seed: u64) -> Result<Vec<StringSample>> {
    gen_string_task_with(n, length, alphabet, noise, &mut rng::stream(seed, rng::DATA))
}

pub fn gen_string_task_with(n: usize, length: usize, alphabet: usize, noise: f64, rng: &mut Rng) -> Result<Vec<StringSample>> {
    if alphabet < 2 {
        return Err(Error::config("strings.alphabet", "must be at least 2"));
    }
    if length < 1 {
        return Err(Error::config("strings.length", "must be at least 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::config("strings.noise", "must be non-negative and finite"));
    }
    (0..n)
        .map(|_| {
            let symbols = (0..length).map(|_| rng.random_range(0..alphabet)).collect();
            let target = SymbolSeq::new(symbols, alphabet)?;
            let data = one_hot(&target)
                .data().iter().map(|&v| v + noise * rng::normal(rng)).collect();
            Ok(StringSample {
                features: Tensor::matrix(length, alphabet, data)?,
                target,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_points_sit_on_means() {
        let d = gen_gaussian_classes(3, 4, 5, 0.0, 1).unwrap();
        for (i, &y) in d.labels.iter().enumerate() {
            assert_eq!(d.features.row(i), d.means.row(y));
        }
        assert_eq!(d, gen_gaussian_classes(3, 4, 5, 0.0, 1).unwrap());
        assert!(gen_gaussian_classes(1, 4, 5, 0.1, 1).is_err());
    }

    #[test]
    fn string_task_is_seeded() {
        let a = gen_string_task(5, 6, 8, 0.5, 3).unwrap();
        assert_eq!(a, gen_string_task(5, 6, 8, 0.5, 3).unwrap());
        let clean = gen_string_task(3, 6, 8, 0.0, 3).unwrap();
        assert_eq!(clean[0].features, one_hot(&clean[0].target));
    }
}
