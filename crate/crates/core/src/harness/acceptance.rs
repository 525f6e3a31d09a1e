//! The acceptance suite: eleven pass/fail criteria over seeded runs.
//!
//! Criteria 1 to 10 each produce a [`CriterionResult`] whose `metrics` and
//! `series` hold everything measured. Criterion 11 reruns 1 to 10 and
//! compares those maps byte for byte; timings live only in `detail`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{MetricSeries, RunReport};
use super::run::{prefit_surrogate, run};
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::learned::synthetic_triplets;
use crate::rng;
use crate::rsk::{chunked_gradients, monolithic_gradients, rsk_loss, similarity_matrix, simix_expand, SmoothParams};

/// Wall-clock budget of criteria 1 and 5.
pub const TIME_BUDGET: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    /// Human-readable measurements, including timings.
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    pub series: BTreeMap<String, MetricSeries>,
}

impl CriterionResult {
    fn new(id: usize, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: false,
            detail: String::new(),
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.metrics.insert(key.into(), value);
        self
    }

    fn absorb(&mut self, prefix: &str, report: &RunReport) {
        for (k, v) in &report.summary {
            self.metrics.insert(format!("{prefix}.{k}"), *v);
        }
        for c in &report.checks {
            self.metrics.insert(format!("{prefix}.{}", c.name), c.value);
        }
        self.series.insert(prefix.to_string(), report.series.clone());
    }

    /// `[PASS]  3 simix equivalence: ...`
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {:>2} {}: {}", self.id, self.name, self.detail)
    }

    /// Everything except `detail`, as JSON.
    fn fingerprint(&self) -> String {
        serde_json::to_string(&(&self.id, &self.passed, &self.metrics, &self.series)).expect("serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.criteria.iter().map(CriterionResult::line).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializes")
    }
}

/// Runs all eleven criteria from `seed`.
pub fn run_acceptance(seed: u64) -> Result<AcceptanceReport> {
    let first = run_criteria(seed)?;
    let second = run_criteria(seed)?;
    let mut c = CriterionResult::new(11, "determinism");
    let differing: Vec<usize> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.fingerprint() != b.fingerprint())
        .map(|(a, _)| a.id)
        .collect();
    c.passed = differing.is_empty() && first.len() == second.len();
    c.metric("differing_criteria", differing.len() as f64);
    c.detail = if c.passed {
        format!("{} criteria produced byte-identical metrics on a second run", first.len())
    } else {
        format!("metrics differ between runs for criteria {differing:?}")
    };
    let mut criteria = first;
    criteria.push(c);
    Ok(AcceptanceReport { seed, criteria })
}

/// Criteria 1 to 10.
pub fn run_criteria(seed: u64) -> Result<Vec<CriterionResult>> {
    let oracles = run(&ExperimentConfig {
        seed,
        ..ExperimentConfig::new(ExperimentKind::OracleSuite)
    })?;
    Ok(vec![
        gradient_suite(seed)?,
        zero_temperature(seed)?,
        simix_equivalence(seed)?,
        chunked_equivalence(seed)?,
        rsk_training(seed)?,
        edit_oracle(&oracles),
        iou_oracle(&oracles),
        surrogate_quality(seed)?,
        learned_post_tuning(seed)?,
        esupcon_accuracy(seed)?,
    ])
}

fn gradient_suite(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(1, "gradient suite");
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::new(ExperimentKind::Gradcheck)
    };
    let start = Instant::now();
    let report = run(&cfg)?;
    let elapsed = start.elapsed();
    c.absorb("gradcheck", &report);
    c.passed = report.passed() && !report.checks.is_empty() && elapsed < TIME_BUDGET;
    let worst = report.checks.iter().map(|k| k.value).fold(0.0, f64::max);
    c.detail = format!(
        "{} losses x {} instances, max relative error {worst:.2e} (< 1e-4), {:.1}s (< 60s)",
        report.checks.len(),
        cfg.checks.gradcheck_instances,
        elapsed.as_secs_f64()
    );
    Ok(c)
}

/// Fraction of a query's positives ranked within the top `k`, averaged over
/// queries, by fully sorting every candidate list.
fn sort_recall(sims: &Tensor, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut cands: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (sims.get2(i, j), j)).collect();
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        let positives = cands.iter().filter(|c| labels[c.1] == labels[i]).count();
        let hits = cands.iter().take(k).filter(|c| labels[c.1] == labels[i]).count();
        total += hits as f64 / k.min(positives) as f64;
    }
    total / n as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram(e: &Tensor) -> Tensor {
    let n = e.rows();
    let data = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dot(e.row(i), e.row(j))).collect();
    Tensor::matrix(n, n, data).expect("square")
}

/// Smallest gap between two candidates' similarities to a common query.
fn min_similarity_gap(sims: &Tensor) -> f64 {
    let n = sims.rows();
    let mut gap = f64::INFINITY;
    for i in 0..n {
        let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sims.get2(i, j)).collect();
        row.sort_by(f64::total_cmp);
        for w in row.windows(2) {
            gap = gap.min(w[1] - w[0]);
        }
    }
    gap
}

fn zero_temperature(seed: u64) -> Result<CriterionResult> {
    const BATCHES: usize = 200;
    let mut c = CriterionResult::new(2, "zero-temperature oracle");
    let tau = 1e-4;
    let params = SmoothParams::new(tau, tau, vec![1, 2, 4, 8])?;
    let mut r = rng::stream(seed, "acceptance-zero-temperature");
    let (mut worst, mut drawn, mut accepted) = (0.0f64, 0usize, 0usize);
    while accepted < BATCHES {
        drawn += 1;
        let classes = r.random_range(2..=4);
        let n = r.random_range(2 * classes..=12);
        let e = rng::normal_tensor(&mut r, &[n, 3], 1.0).l2_normalize_rows();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let sims = gram(&e);
        if min_similarity_gap(&sims) <= 10.0 * tau {
            continue;
        }
        accepted += 1;
        let loss = rsk_loss(&similarity_matrix(&e, &labels)?, &params)?;
        let exact = params.k_set.iter().map(|&k| sort_recall(&sims, &labels, k)).sum::<f64>() / params.k_set.len() as f64;
        worst = worst.max((loss - (1.0 - exact)).abs());
    }
    c.metric("max_abs_error", worst).metric("batches_drawn", drawn as f64);
    c.passed = worst < 1e-4;
    c.detail = format!("{BATCHES} batches (n <= 12, gaps > {:.0e}), max |loss - (1 - recall)| = {worst:.2e} (< 1e-4)", 10.0 * tau);
    Ok(c)
}

fn simix_equivalence(seed: u64) -> Result<CriterionResult> {
    const BATCHES: usize = 100;
    let mut c = CriterionResult::new(3, "simix equivalence");
    let mut r = rng::stream(seed, "acceptance-simix");
    let mut worst = 0.0f64;
    for b in 0..BATCHES {
        let n = r.random_range(6..=16);
        let classes = r.random_range(2..=n / 2);
        let e = rng::normal_tensor(&mut r, &[n, 5], 1.0).l2_normalize_rows();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let lambdas: Vec<f64> = (0..r.random_range(1..=n)).map(|_| r.random::<f64>()).collect();
        let x = simix_expand(&similarity_matrix(&e, &labels)?, &lambdas, seed.wrapping_add(b as u64))?;
        for (v, (&(p, q), &l)) in x.plan.pairs().iter().zip(x.plan.lambdas()).enumerate() {
            let mixed: Vec<f64> = e.row(p).iter().zip(e.row(q)).map(|(a, b)| l * a + (1.0 - l) * b).collect();
            for i in 0..n {
                worst = worst.max((x.block.score(i, n + v) - dot(e.row(i), &mixed)).abs());
            }
        }
    }
    c.metric("max_abs_error", worst);
    c.passed = worst < 1e-12;
    c.detail = format!("{BATCHES} batches, max elementwise difference {worst:.2e} (< 1e-12)");
    Ok(c)
}

fn chunked_equivalence(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(4, "chunked-gradient equivalence");
    let n = 32;
    let mut r = rng::stream(seed, "acceptance-chunked");
    let e = rng::normal_tensor(&mut r, &[n, 8], 1.0).l2_normalize_rows();
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let params = SmoothParams::default();
    let mono = monolithic_gradients(&e, &labels, &params)?;
    let mut worst = 0.0f64;
    for chunk in [1, 2, 16, n] {
        let ch = chunked_gradients(&e, &labels, &params, chunk)?;
        let diff = mono.grad.data().iter().zip(ch.grad.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff).max((mono.loss - ch.loss).abs());
    }
    let peak = chunked_gradients(&e, &labels, &params, 4)?.peak_live_elements as f64;
    let ratio = peak / mono.peak_live_elements as f64;
    c.metric("max_abs_error", worst).metric("peak_ratio_chunk4", ratio);
    c.passed = worst < 1e-9 && ratio < 0.125;
    c.detail = format!("n=32, chunks {{1,2,16,32}} max error {worst:.2e} (< 1e-9), chunk-4 peak live elements {ratio:.3} of monolithic (< 0.125)");
    Ok(c)
}

fn rsk_training(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(5, "rs@k desk-scale training");
    let mut cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::new(ExperimentKind::Rsk)
    };
    // Full batches: all 16 points of each of the 8 classes.
    cfg.rsk.samples_per_class = cfg.data.per_class;
    cfg.rsk.optimizer.lr = 0.03;
    let start = Instant::now();
    let report = run(&cfg)?;
    let elapsed = start.elapsed();
    c.absorb("rsk", &report);
    let get = |k: &str| report.summary.get(k).copied().unwrap_or(f64::NAN);
    let (initial, r1, held_out) = (
        get("initial_train_recall@1"),
        get("final_train_recall@1"),
        get("final_test_recall@1"),
    );
    c.passed = r1 > 0.9 && elapsed < TIME_BUDGET && cfg.rsk.steps <= 500;
    c.detail = format!(
        "8 classes x 16, d=16, sigma=0.3: recall@1 {initial:.3} -> {r1:.3} (> 0.9) in {} steps, {:.1}s (< 60s); held-out recall@1 {held_out:.3}",
        cfg.rsk.steps,
        elapsed.as_secs_f64()
    );
    Ok(c)
}

fn check_value(report: &RunReport, name: &str) -> (f64, bool) {
    report
        .checks
        .iter()
        .find(|c| c.name == name)
        .map_or((f64::NAN, false), |c| (c.value, c.passed))
}

fn edit_oracle(oracles: &RunReport) -> CriterionResult {
    let mut c = CriterionResult::new(6, "edit-distance oracle");
    let (mismatch, ok1) = check_value(oracles, "edit.dp_vs_naive_mismatches");
    let (violations, ok2) = check_value(oracles, "edit.metric_axiom_violations");
    c.metric("dp_vs_naive_mismatches", mismatch).metric("metric_axiom_violations", violations);
    c.passed = ok1 && ok2;
    c.detail = format!(
        "{} pairs: {mismatch} DP/recursion mismatches, {} triples: {violations} axiom violations",
        oracles.config.checks.edit_pairs, oracles.config.checks.edit_pairs
    );
    c
}

fn iou_oracle(oracles: &RunReport) -> CriterionResult {
    let mut c = CriterionResult::new(7, "iou oracle");
    let (mc, ok1) = check_value(oracles, "iou.clip_vs_monte_carlo");
    let (third, ok2) = check_value(oracles, "iou.offset_square");
    c.metric("clip_vs_monte_carlo_max_abs", mc).metric("offset_square_abs_error", third);
    c.passed = ok1 && ok2;
    c.detail = format!(
        "{} rotated pairs vs {:.0e}-sample Monte Carlo: max gap {mc:.2e} (< 1e-3); offset squares |iou - 1/3| = {third:.1e} (< 1e-12)",
        oracles.config.checks.iou_pairs, oracles.config.checks.iou_samples as f64
    );
    c
}

/// Sample Pearson correlation.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn surrogate_quality(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(8, "learned surrogate quality");
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::new(ExperimentKind::Ls)
    };
    let (net, mse) = prefit_surrogate(&cfg)?;
    let (l, a) = (cfg.strings.length, cfg.strings.alphabet);
    let held = synthetic_triplets(1000, l, a, &mut rng::stream(seed, "acceptance-held-out"))?;
    let mut values = Vec::with_capacity(held.len());
    for t in &held {
        values.push(crate::learned::surrogate_value(&net, &t.pred, &t.gt)?);
    }
    let truth: Vec<f64> = held.iter().map(|t| t.distance).collect();
    let r = pearson(&values, &truth);
    c.metric("pearson", r).metric("prefit_mse", mse);
    c.passed = r > 0.8;
    c.detail = format!(
        "L={l}, A={a}, fit on {} triplets: Pearson r = {r:.3} on 1000 held-out pairs (> 0.8)",
        cfg.learned.prefit_triplets
    );
    Ok(c)
}

fn learned_post_tuning(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(9, "ls post-tuning and feds");
    let (mut improved, mut ls_sum, mut feds_sum) = (0usize, 0.0, 0.0);
    for s in 0..5 {
        let s = seed.wrapping_add(s);
        let ls = run(&ExperimentConfig {
            seed: s,
            ..ExperimentConfig::new(ExperimentKind::Ls)
        })?;
        let feds = run(&ExperimentConfig {
            seed: s,
            ..ExperimentConfig::new(ExperimentKind::Feds)
        })?;
        let base = ls.summary["baseline_total_edit_distance"];
        let ls_final = ls.summary["final_total_edit_distance"];
        if ls_final < base {
            improved += 1;
        }
        ls_sum += ls_final;
        feds_sum += feds.summary["final_total_edit_distance"];
        c.absorb(&format!("ls.seed{s}"), &ls);
        c.absorb(&format!("feds.seed{s}"), &feds);
    }
    let (ls_mean, feds_mean) = (ls_sum / 5.0, feds_sum / 5.0);
    c.metric("seeds_improved", improved as f64)
        .metric("ls_mean_total_edit_distance", ls_mean)
        .metric("feds_mean_total_edit_distance", feds_mean);
    c.passed = improved >= 4 && feds_mean <= ls_mean;
    c.detail = format!(
        "LS beats the proxy baseline on {improved}/5 seeds (>= 4); mean total edit distance FEDS {feds_mean:.1} vs LS {ls_mean:.1} (FEDS <= LS)"
    );
    Ok(c)
}

fn esupcon_accuracy(seed: u64) -> Result<CriterionResult> {
    let mut c = CriterionResult::new(10, "esupcon");
    let mut clean = ExperimentConfig {
        seed,
        ..ExperimentConfig::new(ExperimentKind::Esupcon)
    };
    clean.data.classes = 4;
    clean.data.per_class = 64;
    clean.data.test_per_class = 256;
    clean.contrastive.tau = 0.5;
    clean.contrastive.baseline = false;
    let report = run(&clean)?;
    let acc = report.summary["accuracy"];
    c.absorb("clean", &report);

    let (mut es, mut ce) = (0.0, 0.0);
    for s in 0..5 {
        let mut noisy = clean.clone();
        noisy.seed = seed.wrapping_add(s);
        noisy.data.label_noise = 0.2;
        noisy.contrastive.baseline = true;
        let r = run(&noisy)?;
        es += r.summary["accuracy"] / 5.0;
        ce += r.summary["ce_accuracy"] / 5.0;
        c.absorb(&format!("noisy.seed{}", noisy.seed), &r);
    }
    c.metric("clean_accuracy", acc).metric("noisy_mean_accuracy", es).metric("noisy_mean_ce_accuracy", ce);
    c.passed = acc > 0.9 && es >= ce;
    c.detail = format!(
        "4 classes: held-out accuracy {acc:.3} (> 0.9); 20% corrupted labels over 5 seeds: {es:.3} vs cross-entropy {ce:.3} (>=)"
    );
    Ok(c)
}
