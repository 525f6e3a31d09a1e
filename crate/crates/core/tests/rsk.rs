use surrogates::autodiff::{grad_check, Graph, Tensor};
use surrogates::metrics::{recall_at_ks, LabeledEmbeddings};
use surrogates::rng;
use surrogates::rsk::*;

fn random_batch(seed: u64, n: usize, d: usize, classes: usize) -> (Tensor, Vec<usize>) {
    let mut r = rng::stream(seed, "rsk-test");
    let e = rng::normal_tensor(&mut r, &[n, d], 1.0).l2_normalize_rows();
    (e, (0..n).map(|i| i % classes).collect())
}

/// Recall@k by fully sorting each query's candidate list.
fn sort_oracle(e: &Tensor, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut cands: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (e.row(i).iter().zip(e.row(j)).map(|(a, b)| a * b).sum(), j))
            .collect();
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let positives = cands.iter().filter(|c| labels[c.1] == labels[i]).count();
        let hits = cands[..k.min(cands.len())].iter().filter(|c| labels[c.1] == labels[i]).count();
        total += hits as f64 / k.min(positives) as f64;
    }
    total / n as f64
}

fn min_gap(e: &Tensor) -> f64 {
    let b = similarity_matrix(e, &vec![0; e.rows()]).unwrap();
    let n = e.rows();
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            for l in j + 1..n {
                if i != j && i != l {
                    gap = gap.min((b.score(i, j) - b.score(i, l)).abs());
                }
            }
        }
    }
    gap
}

#[test]
fn zero_temperature_matches_sort_oracle() {
    let params = SmoothParams::new(0.001, 0.001, vec![1, 2, 4]).unwrap();
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let (e, y) = random_batch(seed, 8, 3, 3);
        if min_gap(&e) <= 0.01 {
            continue;
        }
        checked += 1;
        let loss = rsk_loss(&similarity_matrix(&e, &y).unwrap(), &params).unwrap();
        let oracle: f64 = params.k_set.iter().map(|&k| sort_oracle(&e, &y, k)).sum::<f64>() / 3.0;
        assert!((loss - (1.0 - oracle)).abs() < 1e-6, "seed {seed}: {loss} vs {oracle}");
        let data = LabeledEmbeddings::new(e, y).unwrap();
        let exact: f64 = recall_at_ks(&data, &params.k_set).unwrap().iter().sum::<f64>() / 3.0;
        assert!((exact - oracle).abs() < 1e-15);
    }
}

#[test]
fn smooth_rank_rounds_to_sort_rank() {
    let mut seed = 100;
    loop {
        seed += 1;
        let (e, y) = random_batch(seed, 10, 3, 2);
        if min_gap(&e) <= 0.01 {
            continue;
        }
        let b = similarity_matrix(&e, &y).unwrap();
        for t in 1..10 {
            let above = (1..10).filter(|&l| l != t && b.score(0, l) > b.score(0, t)).count();
            let r = smooth_rank(&b, 0, t, 0.001).unwrap();
            assert_eq!(r.round() as usize, above + 1);
        }
        break;
    }
}

#[test]
fn simix_matches_explicit_mixup() {
    for seed in 0..10 {
        let (e, y) = random_batch(seed, 12, 5, 3);
        let b = similarity_matrix(&e, &y).unwrap();
        let lambdas: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let x = simix_expand(&b, &lambdas, seed).unwrap();
        let mixed: Vec<Vec<f64>> = x
            .plan
            .pairs()
            .iter()
            .zip(x.plan.lambdas())
            .map(|(&(u, v), &l)| e.row(u).iter().zip(e.row(v)).map(|(a, b)| l * a + (1.0 - l) * b).collect())
            .collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for (c, m) in mixed.iter().enumerate() {
            for i in 0..12 {
                assert!((x.block.score(i, 12 + c) - dot(e.row(i), m)).abs() < 1e-12);
            }
            for (c2, m2) in mixed.iter().enumerate() {
                assert!((x.virtual_gram.get2(c, c2) - dot(m, m2)).abs() < 1e-12);
            }
        }
        let midpoint = simix_expand(&b, &[0.5], seed).unwrap();
        let (u, v) = midpoint.plan.pairs()[0];
        for i in 0..12 {
            let mid: Vec<f64> = e.row(u).iter().zip(e.row(v)).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!((midpoint.block.score(i, 12) - dot(e.row(i), &mid)).abs() < 1e-12);
        }
    }
}

#[test]
fn simix_changes_the_loss() {
    let (e, y) = random_batch(5, 12, 4, 3);
    let params = SmoothParams::default();
    let b = similarity_matrix(&e, &y).unwrap();
    let x = simix_expand(&b, &[0.2, 0.4, 0.6, 0.8], 5).unwrap();
    let plain = rsk_loss(&b, &params).unwrap();
    let mixed = rsk_loss(&x.block, &params).unwrap();
    assert!((plain - mixed).abs() > 1e-6);

    // The graph path through the mixing matrix agrees with the expanded block.
    let mut g = Graph::new();
    let id = g.constant(e);
    let loss = rsk_loss_on_embeddings(&mut g, id, &y, &params, Some(&x.plan)).unwrap();
    assert!((g.value(loss).item().unwrap() - mixed).abs() < 1e-12);
}

#[test]
fn rsk_gradient_check() {
    let params = SmoothParams::new(1.0, 0.05, vec![1, 2, 4]).unwrap();
    for seed in 0..5 {
        let (x, y) = random_batch(seed, 8, 4, 2);
        let err = grad_check(
            |g, x| {
                let e = g.l2_normalize_rows(x)?;
                rsk_loss_on_embeddings(g, e, &y, &params, None)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn chunked_equals_monolithic() {
    let (e, y) = random_batch(42, 32, 8, 8);
    let params = SmoothParams::new(1.0, 0.05, vec![1, 2, 4]).unwrap();
    let mono = monolithic_gradients(&e, &y, &params).unwrap();
    for chunk in [1, 2, 16, 32] {
        let c = chunked_gradients(&e, &y, &params, chunk).unwrap();
        assert!(c.grad.max_abs_diff(&mono.grad) < 1e-9, "chunk {chunk}");
        assert!((c.loss - mono.loss).abs() < 1e-12);
    }
    assert!(chunked_gradients(&e, &y, &params, 0).is_err());
}

#[test]
fn chunked_memory_is_bounded() {
    let (e, y) = random_batch(7, 64, 8, 16);
    let params = SmoothParams::default();
    let mono = monolithic_gradients(&e, &y, &params).unwrap();
    let c = chunked_gradients(&e, &y, &params, 4).unwrap();
    assert!(c.peak_live_elements * 8 < mono.peak_live_elements);
}

#[test]
fn sgd_on_the_loss_descends() {
    let (e0, y) = random_batch(11, 24, 6, 4);
    let params = SmoothParams::new(1.0, 0.05, vec![1, 2, 4]).unwrap();
    let eval = |x: &Tensor| {
        let mut g = Graph::new();
        let id = g.constant(x.clone());
        let e = g.l2_normalize_rows(id).unwrap();
        let l = rsk_loss_on_embeddings(&mut g, e, &y, &params, None).unwrap();
        g.value(l).item().unwrap()
    };
    let mut x = vec![e0];
    let mut opt = surrogates::autodiff::Optimizer::new(surrogates::autodiff::OptimizerSpec::sgd(0.5)).unwrap();
    let start = eval(&x[0]);
    for _ in 0..50 {
        let mut g = Graph::new();
        let id = g.parameter(x[0].clone());
        let e = g.l2_normalize_rows(id).unwrap();
        let l = rsk_loss_on_embeddings(&mut g, e, &y, &params, None).unwrap();
        let grads = g.backward(l).unwrap();
        opt.step(&mut x, &[id], &grads).unwrap();
    }
    let end = eval(&x[0]);
    assert!(end < start - 0.05, "{start} -> {end}");
}
