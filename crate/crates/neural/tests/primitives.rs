mod common;

use common::uniform;
use proptest::prelude::*;
use sparsect_neural::{Tape, Tensor, UpsampleMode};

#[test]
fn channel_norm_statistics() {
    // spread far above eps so the normalized variance is 1 to within 1e-5
    let x = uniform(&[1, 4, 9, 7], -50.0, 80.0, 1);
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(x);
    let g = tape.leaf(Tensor::ones(&[4]));
    let b = tape.leaf(Tensor::zeros(&[4]));
    let y = tape.channel_norm(xv, g, b, 1e-5).unwrap();
    let out = tape.value(y).data();
    let plane = 63;
    for c in 0..4 {
        let p = &out[c * plane..(c + 1) * plane];
        let mean = p.iter().sum::<f64>() / plane as f64;
        let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64;
        assert!(mean.abs() < 1e-6, "channel {c}: mean {mean}");
        assert!((var - 1.0).abs() < 1e-5, "channel {c}: var {var}");
    }
}

#[test]
fn channel_norm_applies_scale_and_shift() {
    let x = uniform(&[1, 2, 4, 4], -1.0, 1.0, 2);
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(x);
    let ones = tape.leaf(Tensor::ones(&[2]));
    let zeros = tape.leaf(Tensor::zeros(&[2]));
    let g = tape.leaf(Tensor::new(&[2], vec![2.0, -1.0]).unwrap());
    let b = tape.leaf(Tensor::new(&[2], vec![0.5, 3.0]).unwrap());
    let plain = tape.channel_norm(xv, ones, zeros, 1e-5).unwrap();
    let affine = tape.channel_norm(xv, g, b, 1e-5).unwrap();
    let (p, a) = (tape.value(plain).data(), tape.value(affine).data());
    for i in 0..16 {
        assert!((a[i] - (2.0 * p[i] + 0.5)).abs() < 1e-12);
        assert!((a[16 + i] - (3.0 - p[16 + i])).abs() < 1e-12);
    }
}

#[test]
fn sigmoid_range_and_midpoint() {
    let x = Tensor::new(&[5], vec![-40.0, -1.0, 0.0, 1.0, 40.0]).unwrap();
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(x);
    let y = tape.sigmoid(xv);
    let out = tape.value(y).data();
    assert_eq!(out[2], 0.5);
    assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!((out[1] + out[3] - 1.0).abs() < 1e-15);
}

#[test]
fn nearest_upsample_replicates() {
    let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(x);
    let y = tape.upsample2x(xv, UpsampleMode::Nearest).unwrap();
    assert_eq!(
        tape.value(y).data(),
        &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
    );
}

#[test]
fn bilinear_upsample_keeps_constants() {
    let x = Tensor::full(&[1, 3, 3, 5], 0.7);
    let mut tape = Tape::<f64>::new();
    let xv = tape.leaf(x);
    let y = tape.upsample2x(xv, UpsampleMode::Bilinear).unwrap();
    assert_eq!(tape.shape(y), &[1, 3, 6, 10]);
    assert!(tape.value(y).data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
}

#[test]
fn strided_conv_halves_size() {
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(Tensor::zeros(&[1, 2, 8, 6]));
    let w = tape.leaf(Tensor::zeros(&[3, 2, 3, 3]));
    let y = tape.conv2d(x, w, None, 2).unwrap();
    assert_eq!(tape.shape(y), &[1, 3, 4, 3]);
}

#[test]
fn mismatched_shapes_are_graph_errors() {
    let mut tape = Tape::<f32>::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[3, 2]));
    assert!(tape.add(a, b).is_err());
    assert!(tape.mul(a, b).is_err());
    let x = tape.leaf(Tensor::zeros(&[1, 2, 4, 4]));
    let w = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(tape.conv2d(x, w, None, 1).is_err());
    assert!(tape.conv2d(x, w, None, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leaky_relu_matches_definition(v in -1e3f64..1e3, slope in 0.0f64..1.0) {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(v));
        let y = tape.leaky_relu(x, slope);
        let expect = if v > 0.0 { v } else { slope * v };
        prop_assert_eq!(tape.value(y).item(), expect);
    }

    #[test]
    fn conv_preserves_size_at_stride_one(h in 1usize..12, w in 1usize..12, k in prop::sample::select(vec![1usize, 3])) {
        prop_assume!(k == 1 || (h >= 2 && w >= 2));
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones(&[1, 2, h, w]));
        let wt = tape.leaf(Tensor::full(&[1, 2, k, k], 1.0 / (2 * k * k) as f32));
        let y = tape.conv2d(x, wt, None, 1).unwrap();
        prop_assert_eq!(tape.shape(y), &[1, 1, h, w]);
        // averaging kernel over a constant input, with reflected borders
        prop_assert!(tape.value(y).data().iter().all(|&v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn mean_gradient_is_uniform(n in 1usize..64, seed in 0u64..1000) {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(uniform(&[n], -1.0, 1.0, seed));
        let m = tape.mean(x);
        let g = tape.backward(m).unwrap().get(x);
        prop_assert!(g.data().iter().all(|&v| (v - 1.0 / n as f64).abs() < 1e-15));
    }
}
