use egoms_tensor::shape;
use egoms_tensor::sptn::{self, SptnArray};
use egoms_tensor::{BackwardMode, Pool, Tape, Tensor, TensorError};
use proptest::prelude::*;

fn t32(shape: &[usize], data: Vec<f32>) -> Tensor<f32> {
    Tensor::new(shape, data).unwrap()
}

fn lcg(seed: u64) -> impl FnMut() -> f32 {
    let mut s = seed;
    move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 33) as f32 / (1u64 << 31) as f32) * 2.0 - 1.0
    }
}

fn naive_conv(
    x: &[f32],
    (n, c, h, w): (usize, usize, usize, usize),
    wt: &[f32],
    (o, k): (usize, usize),
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f32; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias[oc] as f64;
                    for ic in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let y = (i * stride + ki) as isize - pad as isize;
                                let xx = (j * stride + kj) as isize - pad as isize;
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + y as usize) * w + xx as usize];
                                let wv = wt[((oc * c + ic) * k + ki) * k + kj];
                                acc += (xv * wv) as f64;
                            }
                        }
                    }
                    out[((b * o + oc) * ho + i) * wo + j] = acc as f32;
                }
            }
        }
    }
    out
}

#[test]
fn conv_identity_kernel() {
    let mut tape = Tape::new();
    let data: Vec<f32> = (0..18).map(|i| i as f32).collect();
    let x = tape.constant(t32(&[1, 2, 3, 3], data.clone()));
    let w = tape.constant(t32(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t32(&[2], vec![0.0, 0.0]));
    let y = tape.conv2d(x, w, Some(b), 1, 0).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
}

#[test]
fn conv_box_filter_on_constant() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[1, 1, 6, 6], 5.0f32).unwrap());
    let w = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0f32 / 9.0).unwrap());
    let y = tape.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 4, 4]);
    assert!(tape.value(y).data().iter().all(|v| (v - 5.0).abs() < 1e-5));
}

#[test]
fn conv_matches_loop_oracle() {
    let mut r = lcg(11);
    let x: Vec<f32> = (0..50).map(|_| r()).collect();
    let w: Vec<f32> = (0..54).map(|_| r()).collect();
    let b: Vec<f32> = (0..3).map(|_| r()).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(t32(&[1, 2, 5, 5], x.clone()));
    let wv = tape.constant(t32(&[3, 2, 3, 3], w.clone()));
    let bv = tape.constant(t32(&[3], b.clone()));
    let y = tape.conv2d(xv, wv, Some(bv), 1, 0).unwrap();
    let want = naive_conv(&x, (1, 2, 5, 5), &w, (3, 3), &b, 1, 0);
    for (a, e) in tape.value(y).data().iter().zip(&want) {
        assert!((a - e).abs() < 1e-6, "{a} vs {e}");
    }
}

#[test]
fn conv_errors() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::<f32>::zeros(&[1, 2, 3, 3]).unwrap());
    let w = tape.constant(Tensor::<f32>::zeros(&[1, 3, 3, 3]).unwrap());
    assert!(matches!(tape.conv2d(x, w, None, 1, 0), Err(TensorError::ShapeMismatch { .. })));
    let w = tape.constant(Tensor::<f32>::zeros(&[1, 2, 5, 5]).unwrap());
    assert!(matches!(tape.conv2d(x, w, None, 1, 0), Err(TensorError::InvalidGeometry { .. })));
}

#[test]
fn linear_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t32(&[1, 2], vec![1.0, 2.0]));
    let w = tape.constant(t32(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t32(&[2], vec![3.0, -1.0]));
    let y = tape.linear(x, w, Some(b)).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0, 1.0]);
    let bad = tape.constant(t32(&[3, 1], vec![0.0; 3]));
    assert!(matches!(tape.linear(x, bad, None), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn linear_matches_loop_oracle() {
    let mut r = lcg(5);
    let x: Vec<f32> = (0..40).map(|_| r()).collect();
    let w: Vec<f32> = (0..70).map(|_| r()).collect();
    let b: Vec<f32> = (0..7).map(|_| r()).collect();
    let mut tape = Tape::new();
    let xv = tape.constant(t32(&[4, 10], x.clone()));
    let wv = tape.constant(t32(&[10, 7], w.clone()));
    let bv = tape.constant(t32(&[7], b.clone()));
    let y = tape.linear(xv, wv, Some(bv)).unwrap();
    for i in 0..4 {
        for k in 0..7 {
            let mut acc = b[k] as f64;
            for d in 0..10 {
                acc += (x[i * 10 + d] * w[d * 7 + k]) as f64;
            }
            let got = tape.value(y).data()[i * 7 + k];
            assert!((got as f64 - acc).abs() < 1e-6);
        }
    }
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t32(&[3], vec![-1.0, 0.0, 2.0]));
    let r = tape.relu(x).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = tape.constant(t32(&[1], vec![0.0]));
    let s = tape.sigmoid(z).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5]);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
    let r = tape.relu(x).unwrap();
    let s = tape.sum(r).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad_data(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t32(&[4], vec![0.0; 4]));
    let y = tape.softmax(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.25; 4]);
    let x = tape.constant(t32(&[2], vec![1000.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] - 1.0).abs() < 1e-6 && v[1] >= 0.0 && v[1] < 1e-6);
}

#[test]
fn pooling_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[1, 2, 4, 4], 3.0f32).unwrap());
    let y = tape.avg_pool2d(x, Pool::Window(2)).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 3.0));
    let x = tape.constant(t32(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let y = tape.avg_pool2d(x, Pool::Global).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).data(), &[2.5]);
    assert!(matches!(
        tape.avg_pool2d(x, Pool::Window(3)),
        Err(TensorError::InvalidGeometry { .. })
    ));
}

#[test]
fn reshape_concat_examples() {
    let mut tape = Tape::new();
    let m = tape.constant(Tensor::from_fn(&[1, 7, 7], |i| i as f32).unwrap());
    let f = tape.flatten(m).unwrap();
    assert_eq!(tape.shape(f), &[1, 49]);
    assert_eq!(tape.value(f).data()[7 * 3 + 5], tape.value(m).at(&[0, 3, 5]));

    let a = tape.constant(Tensor::full(&[1, 2, 4, 4], 1.0f32).unwrap());
    let b = tape.constant(Tensor::full(&[1, 2, 4, 4], 2.0f32).unwrap());
    let c = tape.concat(&[a, b], 1).unwrap();
    assert_eq!(tape.shape(c), &[1, 4, 4, 4]);
    assert_eq!(tape.value(c).at(&[0, 1, 3, 3]), 1.0);
    assert_eq!(tape.value(c).at(&[0, 2, 0, 0]), 2.0);

    let r = tape.reshape(c, &[8, 8]).unwrap();
    let back = tape.reshape(r, &[1, 4, 4, 4]).unwrap();
    assert_eq!(tape.value(back), tape.value(c));
    assert!(matches!(tape.reshape(c, &[3, 3]), Err(TensorError::ShapeMismatch { .. })));
}

#[test]
fn backward_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad_data(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad_data(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_contracts() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    assert!(matches!(tape.backward(x), Err(TensorError::Contract(_))));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(TensorError::Contract(_))));

    let mut tape = Tape::<f64>::with_mode(BackwardMode::Accumulate);
    let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad_data(x).unwrap(), &[2.0, 2.0]);
}

#[test]
fn unused_params_get_zero_grads() {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let unused = tape.param(Tensor::new(&[3], vec![1.0; 3]).unwrap());
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad_data(unused).unwrap(), &[0.0; 3]);
}

#[test]
fn non_finite_forward_names_the_node() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(&[1], vec![f64::MAX]).unwrap());
    let err = tape.mul(x, x).unwrap_err();
    match err {
        TensorError::NonFinite { op, node } => {
            assert_eq!(op, "mul");
            assert_eq!(node, 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn log_clamp_keeps_loss_finite() {
    let mut tape = Tape::<f64>::new();
    let p = tape.param(Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
    let m = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
    let l = tape.soft_nll(p, &m, 1.0).unwrap();
    assert!((tape.value(l).data()[0] - 1e-12f64.ln().abs()).abs() < 1e-9);
    tape.backward(l).unwrap();
    assert!(tape.grad_data(p).unwrap().iter().all(|g| g.is_finite()));
}

fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize, usize, usize)> {
    (1usize..=2, 1usize..=3, 1usize..=8, 1usize..=8, 1usize..=3, 1usize..=3, 1usize..=2, 0usize..=1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_agrees_with_oracle_and_shape_inference(
        (n, c, h, w, o, k, stride, pad) in conv_case(), seed in any::<u64>()
    ) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut r = lcg(seed);
        let x: Vec<f32> = (0..n * c * h * w).map(|_| r()).collect();
        let wt: Vec<f32> = (0..o * c * k * k).map(|_| r()).collect();
        let b: Vec<f32> = (0..o).map(|_| r()).collect();
        let mut tape = Tape::new();
        let xv = tape.constant(t32(&[n, c, h, w], x.clone()));
        let wv = tape.constant(t32(&[o, c, k, k], wt.clone()));
        let bv = tape.constant(t32(&[o], b.clone()));
        let y = tape.conv2d(xv, wv, Some(bv), stride, pad).unwrap();
        let inferred = shape::conv2d(&[n, c, h, w], &[o, c, k, k], Some(&[o]), stride, pad).unwrap();
        prop_assert_eq!(tape.shape(y), &inferred[..]);
        let want = naive_conv(&x, (n, c, h, w), &wt, (o, k), &b, stride, pad);
        for (a, e) in tape.value(y).data().iter().zip(&want) {
            prop_assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-20.0f32..20.0, 1..12), rows in 1usize..4) {
        let k = v.len();
        let data: Vec<f32> = (0..rows).flat_map(|r| v.iter().map(move |x| x + r as f32)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(t32(&[rows, k], data));
        let y = tape.softmax(x).unwrap();
        for row in tape.value(y).data().chunks(k) {
            let s: f64 = row.iter().map(|&p| p as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn softmax_entries_positive_in_f64(v in prop::collection::vec(-20.0f64..20.0, 1..10)) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[v.len()], v.clone()).unwrap());
        let y = tape.softmax(x).unwrap();
        prop_assert!(tape.value(y).data().iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn sptn_roundtrip(shape in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = shape.iter().product();
        let mut r = lcg(seed);
        let t = t32(&shape, (0..n).map(|_| r()).collect());
        let arr = SptnArray::from(t);
        prop_assert_eq!(sptn::decode(&sptn::encode(&arr)).unwrap(), arr);
    }

    #[test]
    fn pool_shape_inference_matches(c in 1usize..3, h in 1usize..9, w in 1usize..9, k in 1usize..4) {
        prop_assume!(k <= h && k <= w);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, c, h, w], 1.0f32).unwrap());
        let y = tape.avg_pool2d(x, Pool::Window(k)).unwrap();
        prop_assert_eq!(tape.shape(y), &shape::avg_pool2d(&[1, c, h, w], Pool::Window(k)).unwrap()[..]);
    }
}

#[test]
fn sptn_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.sptn");
    let arr = SptnArray::from(Tensor::new(&[2, 2], vec![1.5f64, -2.0, 0.0, 3.25]).unwrap());
    sptn::write(&path, &arr).unwrap();
    assert_eq!(sptn::read(&path).unwrap(), arr);
}
