use dyckformer::evalkit::tv_distance;
use dyckformer::tensor_ops::{dot, hardmax, layernorm, linear, relu, rms_layernorm, softmax, Matrix, TensorError};
use proptest::prelude::*;

fn arb_vec(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, n)
}

fn arb_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("non-zero mass", |v| {
        let z: f64 = v.iter().sum();
        (z > 1e-6).then(|| v.iter().map(|x| x / z).collect())
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in arb_vec(1..20)) {
        let p = softmax(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.5).collect();
        let q = softmax(&shifted).unwrap();
        prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn hardmax_is_uniform_on_the_argmax(v in prop::collection::vec(-3i32..3, 1..12)) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = v.iter().filter(|&&x| x == m).count() as f64;
        let p = hardmax(&v).unwrap();
        for (x, w) in v.iter().zip(&p) {
            prop_assert_eq!(*w, if *x == m { 1.0 / ties } else { 0.0 });
        }
    }

    #[test]
    fn layernorms_standardize(v in arb_vec(2..16)) {
        prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
        let ones = vec![1.0; v.len()];
        let zeros = vec![0.0; v.len()];
        let y = layernorm(&v, &ones, &zeros).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
        let r = rms_layernorm(&v, &ones, &zeros).unwrap();
        prop_assert!((r.iter().map(|x| x * x).sum::<f64>() / n - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matmul_agrees_with_linear(rows in 1usize..6, cols in 1usize..6, seed in arb_vec(36..37), x in arb_vec(6..7)) {
        let a = Matrix::from_vec(rows, cols, seed[..rows * cols].to_vec()).unwrap();
        let x = &x[..cols];
        let col = Matrix::from_vec(cols, 1, x.to_vec()).unwrap();
        let prod = a.matmul(&col).unwrap();
        let lin = linear(&a, x).unwrap();
        for (i, v) in lin.iter().enumerate() {
            prop_assert!((prod.row(i)[0] - v).abs() < 1e-9);
            prop_assert!((dot(a.row(i), x) - v).abs() < 1e-9);
        }
        prop_assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn tv_is_a_bounded_metric(p in arb_dist(6), q in arb_dist(6), r in arb_dist(6)) {
        let d = |a: &[f64], b: &[f64]| tv_distance(a, b).unwrap();
        prop_assert!(d(&p, &p) == 0.0);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d(&p, &q)));
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
    }
}

#[test]
fn kernels_reject_bad_input() {
    assert!(matches!(softmax(&[]), Err(TensorError::Empty(_))));
    assert!(matches!(softmax(&[0.0, f64::NAN]), Err(TensorError::Nan(_))));
    assert!(matches!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]), Err(TensorError::Ragged)));
    let m = Matrix::identity(3);
    assert!(matches!(linear(&m, &[1.0, 2.0]), Err(TensorError::Dim { .. })));
    assert!(tv_distance(&[0.5, 0.5], &[1.0]).is_err());
    assert!(tv_distance(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    assert_eq!(relu(&[-1.0, 2.0]), vec![0.0, 2.0]);
}
