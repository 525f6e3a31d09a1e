use proptest::prelude::*;
use surrogates::autodiff::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_gradients_match_finite_differences(x in matrix(4, 3), w in matrix(3, 5)) {
        let err = grad_check_many(
            |g, ids| {
                let h = g.matmul(ids[0], ids[1])?;
                let s = g.sigmoid(h)?;
                let ls = g.log_softmax_rows(s)?;
                let n = g.l2_normalize_rows(ids[0])?;
                let gram = g.matmul_t(n, n)?;
                let a = g.mean(ls)?;
                let b = g.mean(gram)?;
                g.add(a, b)
            },
            &[x, w],
            1e-6,
        )
        .unwrap();
        prop_assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn pairwise_diff_gradients(x in matrix(3, 4)) {
        let err = grad_check(
            |g, x| {
                let d = g.pairwise_diff(x)?;
                let s = g.sigmoid(d)?;
                let t = g.transpose(x)?;
                let r = g.reshape(t, &[12])?;
                let e = g.exp(r)?;
                let a = g.sum(s)?;
                let b = g.mean(e)?;
                g.sub(a, b)
            },
            &x,
            1e-6,
        )
        .unwrap();
        prop_assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn backward_leaves_the_graph_reusable() {
    let mut g = Graph::new();
    let x = g.parameter(Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap());
    let y = g.mul(x, x).unwrap();
    let s = g.sum(y).unwrap();
    let first = g.backward(s).unwrap().wrt(x);
    let second = g.backward(s).unwrap().wrt(x);
    assert_eq!(first, second);
    assert_eq!(first.data(), &[2.0, -4.0, 6.0]);
}

#[test]
fn sqrt_at_zero_has_zero_subgradient() {
    let mut g = Graph::new();
    let x = g.parameter(Tensor::vector(vec![0.0, 4.0]).unwrap());
    let r = g.sqrt(x).unwrap();
    let s = g.sum(r).unwrap();
    assert_eq!(g.backward(s).unwrap().wrt(x).data(), &[0.0, 0.25]);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut params = vec![Tensor::vector(vec![3.0, -2.0]).unwrap()];
    let mut opt = Optimizer::new(OptimizerSpec::adam(0.1)).unwrap();
    for _ in 0..500 {
        let mut g = Graph::new();
        let p = g.parameter(params[0].clone());
        let c = g.add_scalar(p, -1.0).unwrap();
        let sq = g.mul(c, c).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        opt.step(&mut params, &[p], &grads).unwrap();
    }
    for v in params[0].data() {
        assert!((v - 1.0).abs() < 1e-3, "{v}");
    }
}
