use proptest::prelude::*;
use surrogates::autodiff::Tensor;
use surrogates::metrics::*;

fn seq(max_len: usize, alphabet: usize) -> impl Strategy<Value = SymbolSeq> {
    prop::collection::vec(0..alphabet, 0..=max_len).prop_map(move |s| SymbolSeq::new(s, alphabet).unwrap())
}

fn rotated() -> impl Strategy<Value = RotatedBox> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.2f64..2.0, 0.2f64..2.0, -3.2f64..3.2)
        .prop_map(|(x, y, w, h, a)| RotatedBox::new(x, y, w, h, a).unwrap())
}

fn rotate_about_origin(b: &RotatedBox, theta: f64) -> RotatedBox {
    let (s, c) = theta.sin_cos();
    RotatedBox::new(c * b.cx - s * b.cy, s * b.cx + c * b.cy, b.width, b.height, b.angle + theta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dp_matches_recursion(a in seq(6, 4), b in seq(6, 4)) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance_naive(&a, &b).unwrap());
    }

    #[test]
    fn edit_distance_is_a_bounded_metric(a in seq(10, 4), b in seq(10, 4), c in seq(10, 4)) {
        let ab = edit_distance(&a, &b);
        prop_assert_eq!(ab, edit_distance(&b, &a));
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        prop_assert!(ab >= a.len().abs_diff(b.len()) && ab <= a.len().max(b.len()));
    }

    #[test]
    fn rotated_iou_is_symmetric_bounded_and_rotation_invariant(a in rotated(), b in rotated(), theta in -3.2f64..3.2) {
        let v = iou_rotated(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        prop_assert!((v - iou_rotated(&b, &a)).abs() < 1e-12);
        let turned = iou_rotated(&rotate_about_origin(&a, theta), &rotate_about_origin(&b, theta));
        prop_assert!((v - turned).abs() < 1e-9, "{} vs {}", v, turned);
        prop_assert!((iou_rotated(&a, &a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn disjoint_and_offset_boxes() {
    let a = AxisBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
    let far = AxisBox::new(2.0, 2.0, 3.0, 3.0).unwrap();
    assert_eq!(iou_axis_aligned(&a, &far), 0.0);
    let shifted = AxisBox::new(0.5, 0.0, 1.5, 1.0).unwrap();
    assert!((iou(&BBox::Axis(a), &BBox::Axis(shifted)) - 1.0 / 3.0).abs() < 1e-12);
}

/// Recall@k by sorting each query's candidates, ties broken by index.
fn sorted_recall(e: &Tensor, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let dot = |i: usize, j: usize| e.row(i).iter().zip(e.row(j)).map(|(a, b)| a * b).sum::<f64>();
    let mut total = 0.0;
    for i in 0..n {
        let mut c: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        c.sort_by(|&x, &y| dot(i, y).total_cmp(&dot(i, x)).then(x.cmp(&y)));
        let pos = c.iter().filter(|&&j| labels[j] == labels[i]).count();
        let hits = c.iter().take(k).filter(|&&j| labels[j] == labels[i]).count();
        total += hits as f64 / k.min(pos) as f64;
    }
    total / n as f64
}

#[test]
fn recall_matches_sorting() {
    let mut r = surrogates::rng::stream(4, "metrics-test");
    for _ in 0..20 {
        let e = surrogates::rng::normal_tensor(&mut r, &[15, 4], 1.0).l2_normalize_rows();
        let labels: Vec<usize> = (0..15).map(|i| i % 3).collect();
        let data = LabeledEmbeddings::new(e.clone(), labels.clone()).unwrap();
        for k in [1, 2, 4, 8] {
            assert!((recall_at_k(&data, k).unwrap() - sorted_recall(&e, &labels, k)).abs() < 1e-15);
        }
    }
}

#[test]
fn knn_recovers_separated_clusters() {
    let rows = vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![0.95, -0.1], vec![0.0, 1.0], vec![0.1, 0.9], vec![-0.1, 0.95]];
    let train = LabeledEmbeddings::from_features(&Tensor::from_rows(&rows).unwrap(), vec![0, 0, 0, 1, 1, 1]).unwrap();
    assert_eq!(knn_classify(&train, &[0.8, 0.2], 3).unwrap(), 0);
    assert_eq!(knn_classify(&train, &[0.2, 0.8], 3).unwrap(), 1);
}
