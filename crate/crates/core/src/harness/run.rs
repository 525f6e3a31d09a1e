//! Experiment pipelines behind [`run`].

use std::time::Instant;

use rand::Rng as _;

use super::config::{ExperimentConfig, ExperimentKind};
use super::data::{corrupt_labels, gen_gaussian_classes_with, gen_string_task_with, sample_around, GaussianClasses};
use super::report::{Check, RunReport};
use crate::autodiff::{grad_check_many, Graph, NodeId, Optimizer, Tensor};
use crate::error::{Error, Result};
use crate::esupcon::{esupcon_loss, predict_class, supcon_loss, ClassifierPrototypes};
use crate::learned::{
    alternate_train, fit_surrogate_step, pretrain_proxy, proxy_loss_node, stack_one_hot, surrogate_mse,
    surrogate_values_node, synthetic_triplets, AlternateOptions, StringSample, SurrogateNet,
    TaskModel, Triplet,
};
use crate::metrics::{
    edit_distance, edit_distance_naive, iou_axis_aligned, iou_monte_carlo, iou_rotated, recall_at_ks, AxisBox,
    LabeledEmbeddings, RotatedBox, SymbolSeq,
};
use crate::rng::{self, Rng};
use crate::rsk::{chunked_gradients, rsk_loss_on_embeddings, sample_batch_with, SimixPlan, SmoothParams};

/// Relative tolerance every registered loss must meet in the gradient suite.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Allowed gap between clipping IoU and its Monte-Carlo estimate.
pub const IOU_MC_TOLERANCE: f64 = 1e-3;

/// Validates `config`, runs the matching pipeline and returns its report.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let mut report = RunReport::new(config);
    match config.kind {
        ExperimentKind::Rsk | ExperimentKind::RskSimix => run_rsk(config, &mut report)?,
        ExperimentKind::Ls | ExperimentKind::Feds => run_learned(config, &mut report)?,
        ExperimentKind::Esupcon => run_esupcon(config, &mut report)?,
        ExperimentKind::Gradcheck => run_gradcheck(config, &mut report)?,
        ExperimentKind::OracleSuite => run_oracles(config, &mut report)?,
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Numeric failures inside a training loop become aborts tagged with the
/// epoch; everything else passes through.
fn at_epoch(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) | Error::Domain { .. } => Error::NumericAbort {
            epoch,
            msg: e.to_string(),
        },
        other => other,
    }
}

/// Train and held-out sets around shared class means.
fn gaussian_split(config: &ExperimentConfig) -> Result<(GaussianClasses, GaussianClasses)> {
    let d = &config.data;
    let mut r = rng::stream(config.seed, rng::DATA);
    let mut train = gen_gaussian_classes_with(d.classes, d.per_class, d.dim, d.sigma, &mut r)?;
    let test = sample_around(&train.means, d.test_per_class, d.sigma, &mut r)?;
    if d.label_noise > 0.0 {
        corrupt_labels(&mut train.labels, d.classes, d.label_noise, &mut r)?;
    }
    Ok((train, test))
}

/// `l2_normalize(x · map)`.
fn embed_node(g: &mut Graph, x: NodeId, map: NodeId) -> Result<NodeId> {
    let z = g.matmul(x, map)?;
    g.l2_normalize_rows(z)
}

fn embed(features: &Tensor, map: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(features.clone());
    let m = g.constant(map.clone());
    let z = embed_node(&mut g, x, m)?;
    check_unit_rows(g.value(z))?;
    Ok(g.value(z).clone())
}

/// Overflowing or collapsed weights show up as rows that failed to
/// normalize.
fn check_unit_rows(t: &Tensor) -> Result<()> {
    for i in 0..t.rows() {
        let norm = t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() < 1e-6) {
            return Err(Error::NonFinite(format!("embedding row {i} has norm {norm}")));
        }
    }
    Ok(())
}

fn linear_init(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    rng::normal_tensor(rng, &[rows, cols], 1.0 / (rows as f64).sqrt())
}

fn run_rsk(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let spec = &config.rsk;
    let params = spec.smooth_params();
    let plan = spec.batch_plan(config.data.classes)?;
    let (train, test) = gaussian_split(config)?;
    let mut map = vec![linear_init(config.data.dim, spec.embed_dim, &mut rng::stream(config.seed, rng::INIT))];
    let mut opt = Optimizer::new(spec.optimizer)?;
    let mut sampler = rng::stream(config.seed, rng::SAMPLER);
    let mut mixer = rng::stream(config.seed, rng::SIMIX);
    let simix = config.kind == ExperimentKind::RskSimix;

    // Exact recall@k on the training points and on the held-out points.
    let evaluate = |map: &Tensor| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for set in [&train, &test] {
            let data = LabeledEmbeddings::new(embed(&set.features, map)?, set.labels.clone())?;
            out.extend(recall_at_ks(&data, &params.k_set)?);
        }
        Ok(out)
    };
    let names: Vec<String> = ["train", "test"]
        .iter()
        .flat_map(|set| params.k_set.iter().map(move |k| format!("{set}_recall@{k}")))
        .collect();
    for (name, r) in names.iter().zip(evaluate(&map[0])?) {
        report.summary.insert(format!("initial_{name}"), r);
    }
    let mut peak = 0usize;

    for step in 1..=spec.steps {
        let idx = sample_batch_with(&train.labels, &plan, &mut sampler)?;
        let (x, y) = train.subset(&idx);
        let mut g = Graph::new();
        let m = g.parameter(map[0].clone());
        let xn = g.constant(x);
        let e = embed_node(&mut g, xn, m).map_err(at_epoch(step))?;
        check_unit_rows(g.value(e)).map_err(at_epoch(step))?;
        let (loss, grads) = if simix {
            let count = spec.virtual_samples.unwrap_or(y.len());
            let mix = SimixPlan::sample(&y, count, &mut mixer)?;
            let l = rsk_loss_on_embeddings(&mut g, e, &y, &params, Some(&mix)).map_err(at_epoch(step))?;
            peak = peak.max(g.live_elements());
            (g.value(l).item()?, g.backward(l)?)
        } else {
            let res = chunked_gradients(g.value(e), &y, &params, plan.chunk_size).map_err(at_epoch(step))?;
            peak = peak.max(res.peak_live_elements);
            (res.loss, g.backward_with_seed(e, res.grad)?)
        };
        opt.step(&mut map, &[m], &grads).map_err(at_epoch(step))?;
        if !map[0].data().iter().all(|v| v.is_finite()) {
            return Err(Error::NumericAbort {
                epoch: step,
                msg: "embedding weights became non-finite".into(),
            });
        }
        if step % spec.eval_every == 0 || step == spec.steps {
            let recalls = evaluate(&map[0]).map_err(at_epoch(step))?;
            let mut row: Vec<(&str, f64)> = vec![("loss", loss)];
            row.extend(names.iter().map(String::as_str).zip(recalls));
            report.series.push(step, &row)?;
        }
    }
    for name in &names {
        if let Some(v) = report.series.last(name) {
            report.summary.insert(format!("final_{name}"), v);
        }
    }
    report.summary.insert("batch_size".into(), plan.batch_size() as f64);
    report.summary.insert("peak_live_elements".into(), peak as f64);
    Ok(())
}

/// Pre-fits a fresh surrogate on synthetic triplets; returns it with its
/// final training MSE.
pub fn prefit_surrogate(config: &ExperimentConfig) -> Result<(SurrogateNet, f64)> {
    let (s, l) = (&config.strings, &config.learned);
    let mut init = rng::stream(config.seed, "surrogate-init");
    let mut net = SurrogateNet::new(s.length, s.alphabet, l.surrogate, &mut init)?;
    if l.prefit_steps == 0 {
        return Ok((net, f64::NAN));
    }
    let triplets = synthetic_triplets(l.prefit_triplets, s.length, s.alphabet, &mut rng::stream(config.seed, "surrogate-data"))?;
    let mut opt = Optimizer::new(l.surrogate_optimizer)?;
    let b = l.prefit_batch.min(triplets.len());
    for step in 0..l.prefit_steps {
        let start = (step * b) % triplets.len();
        let batch: Vec<Triplet> = (0..b).map(|i| triplets[(start + i) % triplets.len()].clone()).collect();
        fit_surrogate_step(&mut net, &batch, &mut opt).map_err(at_epoch(step))?;
    }
    let mse = surrogate_mse(&net, &triplets)?;
    Ok((net, mse))
}

/// Train and validation splits of the string task.
pub fn string_split(config: &ExperimentConfig) -> Result<(Vec<StringSample>, Vec<StringSample>)> {
    let s = &config.strings;
    let mut r = rng::stream(config.seed, rng::DATA);
    let train = gen_string_task_with(s.train, s.length, s.alphabet, s.noise, &mut r)?;
    let val = gen_string_task_with(s.val, s.length, s.alphabet, s.noise, &mut r)?;
    Ok((train, val))
}

/// Task model after proxy pre-training.
pub fn pretrained_model(config: &ExperimentConfig, train: &[StringSample]) -> Result<TaskModel> {
    let (s, l) = (&config.strings, &config.learned);
    let mut model = TaskModel::new(s.length, s.alphabet, s.alphabet, l.init_std, &mut rng::stream(config.seed, rng::INIT))?;
    pretrain_proxy(
        &mut model,
        train,
        l.pretrain_steps,
        l.pretrain_batch,
        l.pretrain_optimizer,
        &mut rng::stream(config.seed, rng::SAMPLER),
    )
    .map_err(at_epoch(0))?;
    Ok(model)
}

fn run_learned(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let l = &config.learned;
    let (train, val) = string_split(config)?;
    let mut model = pretrained_model(config, &train)?;
    let (mut net, prefit_mse) = prefit_surrogate(config)?;
    let opts = AlternateOptions {
        schedule: l.schedule,
        feds: (config.kind == ExperimentKind::Feds).then_some(l.ramp),
        surrogate_opt: l.surrogate_optimizer,
        model_opt: l.model_optimizer,
    };
    let history = alternate_train(
        &mut model,
        &mut net,
        &train,
        &val,
        &opts,
        &mut rng::stream(config.seed, "alternate"),
    )
    .map_err(at_epoch(0))?;
    for round in 0..history.surrogate_loss.len() {
        report.series.push(
            round + 1,
            &[
                ("val_total_edit_distance", history.val_total_edit[round + 1] as f64),
                ("surrogate_mse", history.surrogate_loss[round]),
                ("task_loss", history.task_loss[round]),
                ("mean_sample_weight", history.mean_weight[round]),
            ],
        )?;
    }
    let baseline = history.val_total_edit[0] as f64;
    let last = *history.val_total_edit.last().expect("initial entry") as f64;
    report.summary.insert("baseline_total_edit_distance".into(), baseline);
    report.summary.insert("final_total_edit_distance".into(), last);
    if baseline > 0.0 {
        report.summary.insert("relative_improvement".into(), (baseline - last) / baseline);
    }
    if prefit_mse.is_finite() {
        report.summary.insert("prefit_mse".into(), prefit_mse);
    }
    Ok(())
}

fn accuracy(preds: impl Iterator<Item = usize>, labels: &[usize]) -> f64 {
    let hits = preds.zip(labels).filter(|(p, y)| p == *y).count();
    hits as f64 / labels.len() as f64
}

/// Weights of a linear map, or of `linear -> ReLU -> linear` when
/// `hidden > 0`.
fn backbone_init(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Vec<Tensor> {
    if hidden == 0 {
        vec![linear_init(input, output, rng)]
    } else {
        vec![
            linear_init(input, hidden, rng),
            Tensor::zeros(&[hidden]),
            linear_init(hidden, output, rng),
        ]
    }
}

fn backbone_node(g: &mut Graph, x: NodeId, weights: &[NodeId]) -> Result<NodeId> {
    if let [w] = weights {
        return g.matmul(x, *w);
    }
    let h = g.matmul(x, weights[0])?;
    let h = g.add_row(h, weights[1])?;
    let h = g.relu(h)?;
    g.matmul(h, weights[2])
}

fn backbone_forward(features: &Tensor, params: &[Tensor]) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(features.clone());
    let w: Vec<NodeId> = params.iter().map(|p| g.constant(p.clone())).collect();
    let out = backbone_node(&mut g, x, &w)?;
    Ok(g.value(out).clone())
}

fn run_esupcon(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let c = &config.contrastive;
    let classes = config.data.classes;
    let (train, test) = gaussian_split(config)?;
    let mut init = rng::stream(config.seed, rng::INIT);
    let mut params = backbone_init(config.data.dim, c.hidden, c.embed_dim, &mut init);
    let mut protos = ClassifierPrototypes::new(rng::normal_tensor(&mut init, &[classes, c.embed_dim], 1.0), c.tau_c)?;
    params.push(protos.weights().clone());
    let last = params.len() - 1;
    let mut opt = Optimizer::new(c.optimizer)?;

    let test_accuracy = |params: &[Tensor], protos: &ClassifierPrototypes| -> Result<f64> {
        let z = backbone_forward(&test.features, &params[..last])?.l2_normalize_rows();
        let preds = (0..z.rows()).map(|i| predict_class(z.row(i), protos)).collect::<Result<Vec<_>>>()?;
        Ok(accuracy(preds.into_iter(), &test.labels))
    };
    report.summary.insert("initial_accuracy".into(), test_accuracy(&params, &protos)?);

    for step in 1..=c.steps {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.parameter(p.clone())).collect();
        let x = g.constant(train.features.clone());
        let z = backbone_node(&mut g, x, &ids[..last]).map_err(at_epoch(step))?;
        let z = g.l2_normalize_rows(z).map_err(at_epoch(step))?;
        let loss = esupcon_loss(&mut g, z, &train.labels, ids[last], c.tau).map_err(at_epoch(step))?;
        let grads = g.backward(loss)?;
        opt.step(&mut params, &ids, &grads).map_err(at_epoch(step))?;
        protos.set_weights(params[last].clone()).map_err(|e| Error::NumericAbort {
            epoch: step,
            msg: e.to_string(),
        })?;
        params[last] = protos.weights().clone();
        if step % c.eval_every == 0 || step == c.steps {
            let acc = test_accuracy(&params, &protos)?;
            report.series.push(step, &[("loss", g.value(loss).item()?), ("accuracy", acc)])?;
        }
    }
    if let Some(a) = report.series.last("accuracy") {
        report.summary.insert("accuracy".into(), a);
    }
    if c.baseline {
        let acc = softmax_baseline(config, &train, &test)?;
        report.summary.insert("ce_accuracy".into(), acc);
    }
    Ok(())
}

/// Held-out accuracy of a softmax classifier with the same backbone shape,
/// optimizer and step count, trained with cross-entropy on the same
/// (possibly corrupted) labels.
pub fn softmax_baseline(config: &ExperimentConfig, train: &GaussianClasses, test: &GaussianClasses) -> Result<f64> {
    let c = &config.contrastive;
    let classes = config.data.classes;
    let mut params = if c.hidden == 0 {
        vec![Tensor::zeros(&[config.data.dim, classes])]
    } else {
        backbone_init(config.data.dim, c.hidden, classes, &mut rng::stream(config.seed, "baseline-init"))
    };
    params.push(Tensor::zeros(&[classes]));
    let last = params.len() - 1;
    let mut opt = Optimizer::new(c.optimizer)?;
    let targets = {
        let mut t = vec![0.0; train.len() * classes];
        for (i, &y) in train.labels.iter().enumerate() {
            t[i * classes + y] = 1.0;
        }
        Tensor::matrix(train.len(), classes, t)?
    };
    for step in 1..=c.steps {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.parameter(p.clone())).collect();
        let x = g.constant(train.features.clone());
        let z = backbone_node(&mut g, x, &ids[..last])?;
        let z = g.add_row(z, ids[last])?;
        let loss = proxy_loss_node(&mut g, z, &targets).map_err(at_epoch(step))?;
        let grads = g.backward(loss)?;
        opt.step(&mut params, &ids, &grads).map_err(at_epoch(step))?;
    }
    let logits = backbone_forward(&test.features, &params[..last])?;
    let bias = params[last].data();
    let preds = (0..test.len()).map(|i| {
        logits
            .row(i)
            .iter()
            .zip(bias)
            .map(|(z, b)| z + b)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, s)| if s > best.1 { (k, s) } else { best })
            .0
    });
    Ok(accuracy(preds, &test.labels))
}

/// One seeded instance of every registered loss, as `(name, max relative error)`.
pub fn gradcheck_instance(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut r = rng::stream(seed, "gradcheck");
    let mut out = Vec::new();

    let rsk_params = SmoothParams::new(1.0, 0.05, vec![1, 2, 4])?;
    let x = rng::normal_tensor(&mut r, &[8, 4], 1.0);
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let err = grad_check_many(
        |g, ids| {
            let e = g.l2_normalize_rows(ids[0])?;
            rsk_loss_on_embeddings(g, e, &labels, &rsk_params, None)
        },
        &[x],
        eps,
    )?;
    out.push(("rsk_loss", err));

    let x = rng::normal_tensor(&mut r, &[6, 4], 1.0);
    let labels = [0, 0, 1, 1, 2, 2];
    let err = grad_check_many(
        |g, ids| {
            let z = g.l2_normalize_rows(ids[0])?;
            supcon_loss(g, z, &labels, 0.5)
        },
        &[x],
        eps,
    )?;
    out.push(("supcon_loss", err));

    let x = rng::normal_tensor(&mut r, &[8, 4], 1.0);
    let w = rng::normal_tensor(&mut r, &[3, 4], 1.0);
    let labels = [0, 0, 1, 1, 2, 2, 0, 1];
    let err = grad_check_many(
        |g, ids| {
            let z = g.l2_normalize_rows(ids[0])?;
            let w = g.l2_normalize_rows(ids[1])?;
            esupcon_loss(g, z, &labels, w, 0.5)
        },
        &[x, w],
        eps,
    )?;
    out.push(("esupcon_loss", err));

    let (length, alphabet) = (6, 8);
    let net = SurrogateNet::new(length, alphabet, Default::default(), &mut r)?;
    let model = TaskModel::new(length, alphabet, alphabet, 0.5, &mut r)?;
    let samples = gen_string_task_with(4, length, alphabet, 0.5, &mut r)?;
    let refs: Vec<&StringSample> = samples.iter().collect();
    let features = model.stack_features(&refs)?;
    let targets = stack_one_hot(&samples.iter().map(|s| &s.target).collect::<Vec<_>>())?;
    let err = grad_check_many(
        |g, ids| {
            let sw = net.bind(g, false);
            let x = g.constant(features.clone());
            let p = model.forward_node(g, ids, x)?;
            let t = g.constant(targets.clone());
            let v = surrogate_values_node(&net, g, &sw, p, t)?;
            g.mean(v)
        },
        &model.params,
        eps,
    )?;
    out.push(("surrogate_pipeline", err));
    Ok(out)
}

fn run_gradcheck(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    for i in 0..config.checks.gradcheck_instances {
        let errs = gradcheck_instance(config.seed.wrapping_add(i as u64), config.checks.gradcheck_eps)?;
        if worst.is_empty() {
            worst = errs;
        } else {
            for (w, (_, e)) in worst.iter_mut().zip(errs) {
                w.1 = w.1.max(e);
            }
        }
    }
    for (name, err) in worst {
        report.summary.insert(format!("max_rel_error.{name}"), err);
        report.checks.push(Check::new(format!("gradcheck.{name}"), err, "<", GRADCHECK_TOLERANCE));
    }
    Ok(())
}

fn random_seq(r: &mut Rng, max_len: usize, alphabet: usize) -> SymbolSeq {
    let len = r.random_range(0..=max_len);
    SymbolSeq::new((0..len).map(|_| r.random_range(0..alphabet)).collect(), alphabet).expect("symbols in range")
}

/// Counts DP-vs-recursion disagreements and metric-axiom violations.
pub fn edit_distance_oracle(seed: u64, pairs: usize) -> Result<(usize, usize)> {
    let mut r = rng::stream(seed, "edit-oracle");
    let mut mismatches = 0;
    for _ in 0..pairs {
        let (a, b) = (random_seq(&mut r, 6, 4), random_seq(&mut r, 6, 4));
        if edit_distance(&a, &b) != edit_distance_naive(&a, &b)? {
            mismatches += 1;
        }
    }
    let mut violations = 0;
    for _ in 0..pairs {
        let (a, b, c) = (random_seq(&mut r, 10, 4), random_seq(&mut r, 10, 4), random_seq(&mut r, 10, 4));
        let (ab, ba, bc, ac) = (edit_distance(&a, &b), edit_distance(&b, &a), edit_distance(&b, &c), edit_distance(&a, &c));
        let identity = (ab == 0) == (a == b) && edit_distance(&a, &a) == 0;
        if ab != ba || !identity || ac > ab + bc {
            violations += 1;
        }
    }
    Ok((mismatches, violations))
}

/// Overlapping rotated-box pairs for the IoU oracle.
pub fn random_box_pairs(seed: u64, count: usize) -> Result<Vec<(RotatedBox, RotatedBox)>> {
    let mut r = rng::stream(seed, "iou-boxes");
    let draw = |r: &mut Rng, spread: f64| -> Result<RotatedBox> {
        RotatedBox::new(
            spread * (r.random::<f64>() - 0.5),
            spread * (r.random::<f64>() - 0.5),
            r.random_range(0.5..2.0),
            r.random_range(0.5..2.0),
            r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        )
    };
    (0..count).map(|_| Ok((draw(&mut r, 0.0)?, draw(&mut r, 1.0)?))).collect()
}

fn run_oracles(config: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let ch = &config.checks;
    let (mismatches, violations) = edit_distance_oracle(config.seed, ch.edit_pairs)?;
    report.summary.insert("edit_dp_vs_naive_mismatches".into(), mismatches as f64);
    report.summary.insert("edit_metric_axiom_violations".into(), violations as f64);
    report.checks.push(Check::new("edit.dp_vs_naive_mismatches", mismatches as f64, "==", 0.0));
    report.checks.push(Check::new("edit.metric_axiom_violations", violations as f64, "==", 0.0));

    let pairs = random_box_pairs(config.seed, ch.iou_pairs)?;
    let mut worst = 0.0f64;
    for (i, (a, b)) in pairs.iter().enumerate() {
        let mc = iou_monte_carlo(a, b, ch.iou_samples, config.seed.wrapping_add(i as u64));
        worst = worst.max((iou_rotated(a, b) - mc).abs());
    }
    report.summary.insert("iou_clip_vs_monte_carlo_max_abs".into(), worst);
    report.checks.push(Check::new("iou.clip_vs_monte_carlo", worst, "<", IOU_MC_TOLERANCE));

    let sq = AxisBox::new(0.0, 0.0, 1.0, 1.0)?;
    let shifted = AxisBox::new(0.5, 0.0, 1.5, 1.0)?;
    let offset_err = (iou_axis_aligned(&sq, &shifted) - 1.0 / 3.0)
        .abs()
        .max((iou_rotated(&sq.into(), &shifted.into()) - 1.0 / 3.0).abs());
    report.summary.insert("iou_offset_square_abs_error".into(), offset_err);
    report.checks.push(Check::new("iou.offset_square", offset_err, "<", 1e-12));

    let mut r = rng::stream(config.seed, "iou-axis");
    let mut axis_err = 0.0f64;
    for _ in 0..ch.edit_pairs {
        let mut boxed = || -> Result<AxisBox> {
            let (x, y) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            AxisBox::new(x, y, x + r.random_range(0.1..1.5), y + r.random_range(0.1..1.5))
        };
        let (a, b) = (boxed()?, boxed()?);
        axis_err = axis_err.max((iou_axis_aligned(&a, &b) - iou_rotated(&a.into(), &b.into())).abs());
    }
    report.summary.insert("iou_axis_vs_rotated_max_abs".into(), axis_err);
    report.checks.push(Check::new("iou.axis_vs_rotated", axis_err, "<", 1e-9));
    Ok(())
}
