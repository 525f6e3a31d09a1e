use surrogates::autodiff::{grad_check_many, Graph, Tensor};
use surrogates::esupcon::*;
use surrogates::harness::{run, ExperimentConfig, ExperimentKind};
use surrogates::rng;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean over anchors of `-1/|P_i| Σ_p log softmax_i(p)` over candidates
/// `[z; w]` without the anchor itself.
fn oracle(z: &Tensor, w: &Tensor, labels: &[usize], tau: f64) -> f64 {
    let n = z.rows();
    let cand: Vec<&[f64]> = (0..n).map(|j| z.row(j)).chain((0..w.rows()).map(|c| w.row(c))).collect();
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = cand.iter().map(|c| dot(z.row(i), c) / tau).collect();
        let log_norm = (0..cand.len()).filter(|&a| a != i).map(|a| logits[a].exp()).sum::<f64>().ln();
        let pos: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).chain([n + labels[i]]).collect();
        total += -pos.iter().map(|&p| logits[p] - log_norm).sum::<f64>() / pos.len() as f64;
    }
    total / n as f64
}

fn batch(seed: u64) -> (Tensor, Tensor, Vec<usize>) {
    let mut r = rng::stream(seed, "esupcon-test");
    let z = rng::normal_tensor(&mut r, &[9, 4], 1.0).l2_normalize_rows();
    let w = rng::normal_tensor(&mut r, &[3, 4], 1.0).l2_normalize_rows();
    (z, w, (0..9).map(|i| i % 3).collect())
}

fn loss(z: &Tensor, w: &Tensor, labels: &[usize], tau: f64) -> f64 {
    let mut g = Graph::new();
    let (zn, wn) = (g.constant(z.clone()), g.constant(w.clone()));
    let l = esupcon_loss(&mut g, zn, labels, wn, tau).unwrap();
    g.value(l).item().unwrap()
}

#[test]
fn matches_direct_formula() {
    for seed in 0..5 {
        let (z, w, y) = batch(seed);
        for tau in [0.1, 0.5, 1.0] {
            assert!((loss(&z, &w, &y, tau) - oracle(&z, &w, &y, tau)).abs() < 1e-10);
        }
    }
}

#[test]
fn gradients_through_normalization() {
    for seed in 0..5 {
        let (z, w, y) = batch(seed);
        let err = grad_check_many(
            |g, ids| {
                let z = g.l2_normalize_rows(ids[0])?;
                let w = g.l2_normalize_rows(ids[1])?;
                esupcon_loss(g, z, &y, w, 0.5)
            },
            &[z, w],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn invariant_to_a_shared_rotation() {
    let (z, w, y) = batch(7);
    // Rotation by 0.7 rad in the (0, 2) plane.
    let (s, c) = 0.7f64.sin_cos();
    let rotate = |t: &Tensor| {
        let rows: Vec<Vec<f64>> = (0..t.rows())
            .map(|i| {
                let r = t.row(i);
                vec![c * r[0] - s * r[2], r[1], s * r[0] + c * r[2], r[3]]
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    };
    assert!((loss(&z, &w, &y, 0.1) - loss(&rotate(&z), &rotate(&w), &y, 0.1)).abs() < 1e-10);
}

#[test]
fn probabilities_and_decision_agree() {
    let (z, w, _) = batch(8);
    let protos = ClassifierPrototypes::new(w, 0.1).unwrap();
    for i in 0..z.rows() {
        let p = predict_proba(z.row(i), &protos).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(predict_class(z.row(i), &protos).unwrap(), best);
    }
}

#[test]
fn four_class_training_run() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Esupcon);
    cfg.data.classes = 4;
    cfg.data.per_class = 32;
    cfg.contrastive.baseline = false;
    let report = run(&cfg).unwrap();
    assert!(report.summary["accuracy"] > 0.85, "{:?}", report.summary);
    assert!(report.summary["accuracy"] > report.summary["initial_accuracy"]);
}
