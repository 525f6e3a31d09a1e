use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::net::{surrogate_values_node, SurrogateNet};
use super::task::{decode_greedy, one_hot, proxy_loss_node, split_rows, stack_one_hot, total_edit_distance_on, StringSample, TaskModel};
use crate::autodiff::{Graph, Optimizer, OptimizerSpec, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{edit_distance, SymbolSeq};
use crate::rng::{self, Rng};

/// Ramp weight on the surrogate's approximation error: 1 up to `lower`, 0
/// from `upper` on, linear in between. `upper` may be infinite, in which
/// case every weight is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampFilter {
    pub lower: f64,
    pub upper: f64,
}

impl Default for RampFilter {
    fn default() -> Self {
        Self { lower: 0.5, upper: 1.5 }
    }
}

impl RampFilter {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let f = Self { lower, upper };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.lower.is_finite()) {
            return Err(Error::config("feds.lower", "must be non-negative and finite"));
        }
        if !(self.upper > self.lower) {
            return Err(Error::config("feds.upper", "must exceed feds.lower"));
        }
        Ok(())
    }

    pub fn weight(&self, approx_error: f64) -> f64 {
        feds_weight(self, approx_error)
    }
}

pub fn feds_weight(filter: &RampFilter, approx_error: f64) -> f64 {
    if approx_error <= filter.lower {
        1.0
    } else if approx_error >= filter.upper {
        0.0
    } else {
        1.0 - (approx_error - filter.lower) / (filter.upper - filter.lower)
    }
}

/// A surrogate training example: a prediction, its target and their true
/// edit distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub pred: Tensor,
    pub gt: Tensor,
    pub distance: f64,
}

impl Triplet {
    /// Labels `pred` with the edit distance of its greedy decode to `target`.
    pub fn labeled(pred: Tensor, target: &SymbolSeq) -> Self {
        let distance = edit_distance(&decode_greedy(&pred), target) as f64;
        Self {
            pred,
            gt: one_hot(target),
            distance,
        }
    }
}

fn stack(ts: impl Iterator<Item = Vec<f64>>, cols: usize) -> Result<Tensor> {
    let data: Vec<f64> = ts.flatten().collect();
    Tensor::matrix(data.len() / cols, cols, data)
}

/// Mean squared error between surrogate values and true distances.
pub fn surrogate_mse(net: &SurrogateNet, triplets: &[Triplet]) -> Result<f64> {
    let mut g = Graph::new();
    let w = net.bind(&mut g, false);
    let loss = mse_node(net, &mut g, &w, triplets)?;
    g.value(loss).item()
}

fn mse_node(net: &SurrogateNet, g: &mut Graph, w: &[crate::autodiff::NodeId], triplets: &[Triplet]) -> Result<crate::autodiff::NodeId> {
    if triplets.is_empty() {
        return Err(Error::invalid("no triplets to fit"));
    }
    let a = net.alphabet();
    let pred = g.constant(stack(triplets.iter().map(|t| t.pred.data().to_vec()), a)?);
    let gt = g.constant(stack(triplets.iter().map(|t| t.gt.data().to_vec()), a)?);
    let target = g.constant(Tensor::vector(triplets.iter().map(|t| t.distance).collect())?);
    let v = surrogate_values_node(net, g, w, pred, gt)?;
    let r = g.sub(v, target)?;
    let sq = g.mul(r, r)?;
    g.mean(sq)
}

/// One optimizer step on the surrogate's MSE; returns the pre-step loss.
pub fn fit_surrogate_step(net: &mut SurrogateNet, triplets: &[Triplet], opt: &mut Optimizer) -> Result<f64> {
    let mut g = Graph::new();
    let w = net.bind(&mut g, true);
    let loss = mse_node(net, &mut g, &w, triplets)?;
    let grads = g.backward(loss)?;
    opt.step(&mut net.params, &w, &grads)?;
    g.value(loss).item()
}

/// Random target strings with perturbed soft predictions, for fitting a
/// surrogate before any task model exists.
///
/// Each prediction starts from the target, receives a random number of
/// substitutions and delete-then-insert shifts, and is softened with
/// Gaussian logit noise at a random sharpness.
pub fn synthetic_triplets(count: usize, length: usize, alphabet: usize, rng: &mut Rng) -> Result<Vec<Triplet>> {
    if length == 0 || alphabet < 2 {
        return Err(Error::invalid("synthetic triplets need length ≥ 1 and alphabet ≥ 2"));
    }
    (0..count)
        .map(|_| {
            let gt: Vec<usize> = (0..length).map(|_| rng.random_range(0..alphabet)).collect();
            let mut p = gt.clone();
            for _ in 0..rng.random_range(0..=length) {
                if rng.random_bool(0.5) {
                    let i = rng.random_range(0..length);
                    p[i] = rng.random_range(0..alphabet);
                } else {
                    p.remove(rng.random_range(0..length));
                    p.insert(rng.random_range(0..length), rng.random_range(0..alphabet));
                }
            }
            let sharpness = rng.random_range(3.0..8.0);
            let mut logits = vec![0.0; length * alphabet];
            for (i, row) in logits.chunks_mut(alphabet).enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = rng::normal(rng) + if j == p[i] { sharpness } else { 0.0 };
                }
            }
            let pred = softmax_rows(&logits, alphabet);
            let target = SymbolSeq::new(gt, alphabet)?;
            Ok(Triplet::labeled(Tensor::matrix(length, alphabet, pred)?, &target))
        })
        .collect()
}

fn softmax_rows(logits: &[f64], cols: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

fn draw<'a>(data: &'a [StringSample], batch: usize, rng: &mut Rng) -> Vec<&'a StringSample> {
    let b = batch.min(data.len());
    index::sample(rng, data.len(), b).into_iter().map(|i| &data[i]).collect()
}

/// Trains the task model with per-position cross-entropy; returns the loss
/// before each step.
pub fn pretrain_proxy(
    model: &mut TaskModel,
    data: &[StringSample],
    steps: usize,
    batch: usize,
    opt: OptimizerSpec,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if data.is_empty() || batch == 0 {
        return Err(Error::invalid("proxy training needs data and a positive batch size"));
    }
    let mut opt = Optimizer::new(opt)?;
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let b = draw(data, batch, rng);
        let targets: Vec<&SymbolSeq> = b.iter().map(|s| &s.target).collect();
        let mut g = Graph::new();
        let w = model.bind(&mut g, true);
        let x = g.constant(model.stack_features(&b)?);
        let z = model.logits_node(&mut g, &w, x)?;
        let loss = proxy_loss_node(&mut g, z, &stack_one_hot(&targets)?)?;
        let grads = g.backward(loss)?;
        opt.step(&mut model.params, &w, &grads)?;
        losses.push(g.value(loss).item()?);
    }
    Ok(losses)
}

/// Surrogate steps `s`, model steps `t` and rounds `r` of alternating
/// training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub surrogate_steps: usize,
    pub model_steps: usize,
    pub rounds: usize,
    pub batch_size: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            surrogate_steps: 50,
            model_steps: 50,
            rounds: 20,
            batch_size: 32,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.surrogate_steps < 1 {
            return Err(Error::config("schedule.surrogate_steps", "must be at least 1"));
        }
        if self.model_steps < 1 {
            return Err(Error::config("schedule.model_steps", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("schedule.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlternateOptions {
    pub schedule: Schedule,
    /// Sample filtering; `None` trains every sample with weight 1.
    pub feds: Option<RampFilter>,
    pub surrogate_opt: OptimizerSpec,
    pub model_opt: OptimizerSpec,
}

/// Per-round record of alternating training. `val_total_edit` has one more
/// entry than the other series: the value before the first round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub val_total_edit: Vec<usize>,
    pub surrogate_loss: Vec<f64>,
    pub task_loss: Vec<f64>,
    pub mean_weight: Vec<f64>,
}

/// Alternates surrogate fitting on fresh model outputs with model updates
/// through the frozen surrogate.
pub fn alternate_train(
    model: &mut TaskModel,
    net: &mut SurrogateNet,
    train: &[StringSample],
    val: &[StringSample],
    opts: &AlternateOptions,
    rng: &mut Rng,
) -> Result<History> {
    opts.schedule.validate()?;
    if let Some(f) = &opts.feds {
        f.validate()?;
    }
    if train.is_empty() {
        return Err(Error::invalid("alternating training needs training samples"));
    }
    if model.length() != net.length() || model.alphabet() != net.alphabet() {
        return Err(Error::invalid("task model and surrogate disagree on sequence shape"));
    }
    let sched = opts.schedule;
    let mut surrogate_opt = Optimizer::new(opts.surrogate_opt)?;
    let mut model_opt = Optimizer::new(opts.model_opt)?;
    let mut history = History {
        val_total_edit: vec![total_edit_distance_on(model, val)?],
        ..History::default()
    };

    for _ in 0..sched.rounds {
        let mut fit_total = 0.0;
        for _ in 0..sched.surrogate_steps {
            let b = draw(train, sched.batch_size, rng);
            let preds = model.predict(&b)?;
            let triplets: Vec<Triplet> = preds
                .into_iter()
                .zip(&b)
                .map(|(p, s)| Triplet::labeled(p, &s.target))
                .collect();
            fit_total += fit_surrogate_step(net, &triplets, &mut surrogate_opt)?;
        }

        let mut task_total = 0.0;
        let mut weight_total = 0.0;
        for _ in 0..sched.model_steps {
            let b = draw(train, sched.batch_size, rng);
            let targets: Vec<&SymbolSeq> = b.iter().map(|s| &s.target).collect();
            let mut g = Graph::new();
            let mw = model.bind(&mut g, true);
            let sw = net.bind(&mut g, false);
            let x = g.constant(model.stack_features(&b)?);
            let pred = model.forward_node(&mut g, &mw, x)?;
            let gt = g.constant(stack_one_hot(&targets)?);
            let values = surrogate_values_node(net, &mut g, &sw, pred, gt)?;

            let preds = split_rows(g.value(pred), model.length())?;
            let weights: Vec<f64> = match &opts.feds {
                None => vec![1.0; b.len()],
                Some(f) => preds
                    .iter()
                    .zip(&b)
                    .zip(g.value(values).data())
                    .map(|((p, s), &v)| {
                        let d = edit_distance(&decode_greedy(p), &s.target) as f64;
                        f.weight((v - d).abs())
                    })
                    .collect(),
            };
            weight_total += weights.iter().sum::<f64>() / b.len() as f64;
            let weighted = g.mul_const(values, Tensor::vector(weights)?)?;
            let total = g.sum(weighted)?;
            let loss = g.scale(total, 1.0 / b.len() as f64)?;
            let grads = g.backward(loss)?;
            model_opt.step(&mut model.params, &mw, &grads)?;
            task_total += g.value(loss).item()?;
        }

        history.surrogate_loss.push(fit_total / sched.surrogate_steps as f64);
        history.task_loss.push(task_total / sched.model_steps as f64);
        history.mean_weight.push(weight_total / sched.model_steps as f64);
        history.val_total_edit.push(total_edit_distance_on(model, val)?);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        let f = RampFilter::default();
        assert_eq!(f.weight(0.0), 1.0);
        assert_eq!(f.weight(1.0), 0.5);
        assert_eq!(f.weight(1.5), 0.0);
        assert_eq!(f.weight(7.0), 0.0);
        let open = RampFilter::new(0.5, f64::INFINITY).unwrap();
        assert_eq!(open.weight(1e6), 1.0);
        assert!(RampFilter::new(1.0, 1.0).is_err());
        assert!(RampFilter::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn synthetic_distances_are_consistent() {
        let mut rng = rng::stream(4, rng::DATA);
        let ts = synthetic_triplets(50, 6, 8, &mut rng).unwrap();
        assert!(ts.iter().any(|t| t.distance > 0.0));
        assert!(ts.iter().all(|t| t.distance <= 6.0));
    }
}
