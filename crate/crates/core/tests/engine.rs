mod common;

use common::*;
use dancestream::engine::{
    read_checkpoint, sgd_update, write_checkpoint, Conv2dOptions, Conv3dOptions, EngineError, Graph, ParameterSet,
    Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t64(shape: &[usize], v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, v).unwrap()
}

#[test]
fn conv2d_sums_windows_of_3x3_ramp() {
    // Oracle first: the naive loop gives the expected values.
    let x: Vec<f64> = (1..=9).map(f64::from).collect();
    let (expected, shape) = naive_conv2d(&x, [1, 1, 3, 3], &[1.0; 4], [1, 1, 2, 2], &[0.0], 1, 0);
    assert_eq!(shape, [1, 1, 2, 2]);
    assert_eq!(expected, vec![12.0, 16.0, 24.0, 28.0]);

    let mut g = Graph::<f64>::new();
    let xi = g.input(t64(&[1, 1, 3, 3], x));
    let k = g.input(Tensor::filled(&[1, 1, 2, 2], 1.0));
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.conv2d(xi, k, b, Conv2dOptions::default()).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(g.value(y).values(), &[12.0, 16.0, 24.0, 28.0]);
}

#[test]
fn conv2d_identity_and_bias_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_vec(&mut rng, 2 * 3 * 5 * 4);
    let mut g = Graph::<f64>::new();
    let xi = g.input(t64(&[2, 3, 5, 4], x.clone()));
    let ident: Vec<f64> = (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect();
    let k = g.input(t64(&[3, 3, 1, 1], ident));
    let b = g.input(Tensor::zeros(&[3]));
    let y = g.conv2d(xi, k, b, Conv2dOptions::default()).unwrap();
    assert_eq!(g.value(y).values(), &x[..]);

    let zeros = g.input(Tensor::zeros(&[1, 3, 6, 6]));
    let k = g.input(t64(&[2, 3, 3, 3], random_vec(&mut rng, 54)));
    let b = g.input(t64(&[2], vec![0.5, -1.25]));
    let y = g.conv2d(zeros, k, b, Conv2dOptions::stride(2)).unwrap();
    let v = g.value(y);
    assert_eq!(v.shape(), &[1, 2, 2, 2]);
    assert!(v.values()[..4].iter().all(|&a| a == 0.5));
    assert!(v.values()[4..].iter().all(|&a| a == -1.25));
}

#[test]
fn conv_shape_errors_name_both_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros(&[1, 2, 4, 4]));
    let k = g.input(Tensor::zeros(&[1, 3, 2, 2]));
    let b = g.input(Tensor::zeros(&[1]));
    let err = g.conv2d(x, k, b, Conv2dOptions::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 2, 2]"), "{msg}");

    let big = g.input(Tensor::zeros(&[1, 2, 5, 5]));
    assert!(matches!(
        g.conv2d(x, big, b, Conv2dOptions::default()),
        Err(EngineError::ShapeMismatch { .. })
    ));
    assert!(matches!(Tensor::<f32>::new(&[1, 0, 3], vec![]), Err(EngineError::ZeroSize { .. })));
}

#[test]
fn conv3d_identity_and_cube_sum() {
    let x: Vec<f64> = (0..8).map(f64::from).collect();
    let (expected, _) = naive_conv3d(&x, [1, 1, 2, 2, 2], &[1.0; 8], [1, 1, 2, 2, 2], &[0.0], [1; 3], [0; 3]);
    assert_eq!(expected, vec![28.0]);

    let mut g = Graph::<f64>::new();
    let xi = g.input(t64(&[1, 1, 2, 2, 2], x.clone()));
    let k = g.input(Tensor::filled(&[1, 1, 2, 2, 2], 1.0));
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.conv3d(xi, k, b, Conv3dOptions::default()).unwrap();
    assert_eq!(g.value(y).values(), &[28.0]);

    let k1 = g.input(Tensor::filled(&[1, 1, 1, 1, 1], 1.0));
    let y = g.conv3d(xi, k1, b, Conv3dOptions::default()).unwrap();
    assert_eq!(g.value(y).values(), &x[..]);
}

#[test]
fn conv3d_on_static_volume_matches_conv2d_with_summed_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let frame = random_vec(&mut rng, 2 * 8 * 8);
        // 8 identical frames: [1,2,8,8,8]
        let mut vol = vec![0.0; 2 * 8 * 64];
        for c in 0..2 {
            for t in 0..8 {
                vol[(c * 8 + t) * 64..(c * 8 + t + 1) * 64].copy_from_slice(&frame[c * 64..(c + 1) * 64]);
            }
        }
        let k3 = random_vec(&mut rng, 3 * 2 * 3 * 3 * 3);
        let mut k2 = vec![0.0; 3 * 2 * 9];
        for f in 0..3 {
            for c in 0..2 {
                for dt in 0..3 {
                    for s in 0..9 {
                        k2[(f * 2 + c) * 9 + s] += k3[((f * 2 + c) * 3 + dt) * 9 + s];
                    }
                }
            }
        }
        let bias = random_vec(&mut rng, 3);
        let mut g = Graph::<f64>::new();
        let v = g.input(t64(&[1, 2, 8, 8, 8], vol));
        let k = g.input(t64(&[3, 2, 3, 3, 3], k3));
        let b = g.input(t64(&[3], bias.clone()));
        let y3 = g.conv3d(v, k, b, Conv3dOptions::default()).unwrap();
        let (y2, s2) = naive_conv2d(&frame, [1, 2, 8, 8], &k2, [3, 2, 3, 3], &bias, 1, 0);
        let out = to_f64(g.value(y3).values());
        assert_eq!(g.value(y3).shape(), &[1, 3, 6, 6, 6]);
        for f in 0..3 {
            for t in 0..6 {
                let got = &out[(f * 6 + t) * 36..(f * 6 + t + 1) * 36];
                let want = &y2[f * 36..(f + 1) * 36];
                assert!(max_rel_err(got, want) < 1e-9, "{s2:?}");
            }
        }
    }
}

#[test]
fn maxpool_examples() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.maxpool2d(x, [2, 2], [2, 2]).unwrap();
    assert_eq!(g.value(y).values(), &[4.0]);

    let c = g.input(Tensor::filled(&[2, 3, 6, 6], 1.5));
    let y = g.maxpool2d(c, [3, 3], [2, 2]).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 3, 2, 2]);
    assert!(g.value(y).values().iter().all(|&v| v == 1.5));

    assert!(matches!(
        g.maxpool2d(x, [3, 3], [1, 1]),
        Err(EngineError::WindowTooLarge { window: 3, extent: 2 })
    ));
}

#[test]
fn linear_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(t64(&[1, 2], vec![1.0, 2.0]));
    let w = g.input(t64(&[2, 1], vec![1.0, 1.0]));
    let b = g.input(t64(&[1], vec![3.0]));
    let y = g.linear(x, w, b).unwrap();
    assert_eq!(g.value(y).values(), &[6.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = random_vec(&mut rng, 12);
    let x = g.input(t64(&[4, 3], xs.clone()));
    let eye = g.input(t64(&[3, 3], (0..9).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect()));
    let z = g.input(Tensor::zeros(&[3]));
    let y = g.linear(x, eye, z).unwrap();
    assert_eq!(g.value(y).values(), &xs[..]);

    let bad = g.input(Tensor::zeros(&[4, 3]));
    assert!(g.linear(x, bad, z).is_err());
}

#[test]
fn relu_examples() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).values(), &[0.0, 0.0, 2.0]);
    let x = g.input(Tensor::new(&[2], vec![-3.0, -0.1]).unwrap());
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).values(), &[0.0, 0.0]);
}

#[test]
fn concat_examples() {
    let mut g = Graph::<f32>::new();
    let a = g.input(Tensor::from_fn(&[2, 2], |i| i as f32));
    let single = g.concat(&[a]).unwrap();
    assert_eq!(g.value(single), g.value(a));

    let b = g.input(Tensor::from_fn(&[2, 3], |i| 10.0 + i as f32));
    let ab = g.concat(&[a, b]).unwrap();
    assert_eq!(g.value(ab).shape(), &[2, 5]);
    assert_eq!(g.value(ab).values(), &[0.0, 1.0, 10.0, 11.0, 12.0, 2.0, 3.0, 13.0, 14.0, 15.0]);

    let streams: Vec<_> = (0..3).map(|_| g.input(Tensor::zeros(&[1, 128]))).collect();
    let fused = g.concat(&streams).unwrap();
    assert_eq!(g.value(fused).shape(), &[1, 384]);

    let c = g.input(Tensor::zeros(&[3, 2]));
    assert!(g.concat(&[a, c]).is_err());
    assert!(matches!(g.concat(&[]), Err(EngineError::EmptyConcat)));
}

#[test]
fn softmax_xent_examples() {
    let mut g = Graph::<f64>::new();
    for c in [2usize, 3, 10, 101] {
        let z = g.input(Tensor::filled(&[2, c], 0.37));
        let l = g.softmax_xent(z, &[0, c - 1]).unwrap();
        assert!((g.value(l).values()[0] - (c as f64).ln()).abs() < 1e-9);
    }
    let z = g.input(t64(&[1, 2], vec![1000.0, 0.0]));
    let l = g.softmax_xent(z, &[0]).unwrap();
    let v = g.value(l).values()[0];
    assert!(v.is_finite() && v.abs() < 1e-12);

    // ln(e + e^2 + e^3) - 3, evaluated by hand in f64.
    let expected = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
    let z = g.input(t64(&[1, 3], vec![1.0, 2.0, 3.0]));
    let l = g.softmax_xent(z, &[2]).unwrap();
    assert!((g.value(l).values()[0] - expected).abs() < 1e-12);
    assert!((expected - 0.407_605_964_444_380_1).abs() < 1e-12);

    assert!(matches!(
        g.softmax_xent(z, &[3]),
        Err(EngineError::LabelOutOfRange { label: 3, classes: 3 })
    ));
}

#[test]
fn oracle_equivalence_over_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..60 {
        let n = rng.gen_range(1..3);
        let c = rng.gen_range(1..4);
        let f = rng.gen_range(1..4);
        let (t, h, w) = (rng.gen_range(1..6), rng.gen_range(3..10), rng.gen_range(3..10));
        let (kt, kh, kw) = (rng.gen_range(1..=t.min(3)), rng.gen_range(1..=h.min(4)), rng.gen_range(1..=w.min(4)));
        let stride = [rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..3)];
        let pad = [rng.gen_range(0..2), rng.gen_range(0..2), rng.gen_range(0..2)];
        let x = random_vec(&mut rng, n * c * t * h * w);
        let k = random_vec(&mut rng, f * c * kt * kh * kw);
        let bias = random_vec(&mut rng, f);

        let mut g = Graph::<f32>::new();
        let to32 = |v: &[f64]| v.iter().map(|&a| a as f32).collect::<Vec<_>>();
        let xi = g.input(Tensor::new(&[n, c, t, h, w], to32(&x)).unwrap());
        let ki = g.input(Tensor::new(&[f, c, kt, kh, kw], to32(&k)).unwrap());
        let bi = g.input(Tensor::new(&[f], to32(&bias)).unwrap());
        let y = g
            .conv3d(xi, ki, bi, Conv3dOptions { stride, padding: pad })
            .unwrap();
        let (want, s) = naive_conv3d(&x, [n, c, t, h, w], &k, [f, c, kt, kh, kw], &bias, stride, pad);
        assert_eq!(g.value(y).shape(), &s[..], "case {case}");
        let got = to_f64(g.value(y).values());
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max);
        assert!(err < 1e-5, "conv3d case {case}: {err}");

        let x2 = g.input(Tensor::new(&[n, c, h, w], to32(&x[..n * c * h * w])).unwrap());
        let k2 = g.input(Tensor::new(&[f, c, kh, kw], to32(&k[..f * c * kh * kw])).unwrap());
        let y = g
            .conv2d(x2, k2, bi, Conv2dOptions { stride: [stride[1]; 2], padding: [pad[1]; 2] })
            .unwrap();
        let (want, s) = naive_conv2d(&x[..n * c * h * w], [n, c, h, w], &k[..f * c * kh * kw], [f, c, kh, kw], &bias, stride[1], pad[1]);
        assert_eq!(g.value(y).shape(), &s[..]);
        let got = to_f64(g.value(y).values());
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max);
        assert!(err < 1e-5, "conv2d case {case}: {err}");

        let window = [kt, kh, kw];
        let y = g.maxpool3d(xi, window, stride).unwrap();
        let (want, s) = naive_maxpool3d(&x, [n, c, t, h, w], window, stride);
        assert_eq!(g.value(y).shape(), &s[..]);
        let got = to_f64(g.value(y).values());
        assert!(max_rel_err(&got, &want.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>()) == 0.0);
    }
}

#[test]
fn backward_linear_and_constant() {
    let mut params = ParameterSet::<f64>::new();
    params.insert("w", t64(&[3, 1], vec![0.5, -0.25, 2.0])).unwrap();
    let x = vec![1.5, -2.0, 0.75];
    let mut g = Graph::new();
    let xi = g.input(t64(&[1, 3], x.clone()));
    let w = g.param(&params, "w").unwrap();
    let b = g.input(Tensor::zeros(&[1]));
    let loss = g.linear(xi, w, b).unwrap();
    g.backward(loss, &mut params).unwrap();
    assert_eq!(params.get("w").unwrap().grad().unwrap(), &x[..]);

    // A loss that does not depend on any parameter leaves gradients at zero.
    params.zero_grads();
    let mut g = Graph::new();
    let _w = g.param(&params, "w").unwrap();
    let c = g.input(Tensor::scalar(4.0));
    g.backward(c, &mut params).unwrap();
    assert!(params.get("w").unwrap().grad().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_errors() {
    let mut params = ParameterSet::<f32>::new();
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.backward(x, &mut params), Err(EngineError::NonScalarLoss(_))));
    let mut other = Graph::<f32>::new();
    let far = {
        for _ in 0..5 {
            other.input(Tensor::zeros(&[1]));
        }
        other.input(Tensor::zeros(&[1]))
    };
    assert!(matches!(g.backward(far, &mut params), Err(EngineError::UnknownNode(5))));
}

#[test]
fn shared_parameter_gradients_accumulate() {
    // loss = x·w + x·w through two separate uses of the same parameter.
    let mut params = ParameterSet::<f64>::new();
    params.insert("w", t64(&[2, 1], vec![1.0, 1.0])).unwrap();
    let mut g = Graph::new();
    let x = g.input(t64(&[1, 2], vec![3.0, -1.0]));
    let w1 = g.param(&params, "w").unwrap();
    let w2 = g.param(&params, "w").unwrap();
    let b = g.input(Tensor::zeros(&[1]));
    let a = g.linear(x, w1, b).unwrap();
    let c = g.linear(x, w2, b).unwrap();
    let both = g.concat(&[a, c]).unwrap();
    let ones = g.input(t64(&[2, 1], vec![1.0, 1.0]));
    let loss = g.linear(both, ones, b).unwrap();
    g.backward(loss, &mut params).unwrap();
    assert_eq!(params.get("w").unwrap().grad().unwrap(), &[6.0, -2.0]);
}

fn conv_param_set(rng: &mut ChaCha8Rng, x: &[usize], k: &[usize]) -> ParameterSet<f64> {
    let mut p = ParameterSet::new();
    p.insert("x", t64(x, random_vec(rng, x.iter().product()))).unwrap();
    p.insert("k", t64(k, random_vec(rng, k.iter().product()))).unwrap();
    p.insert("b", t64(&[k[0]], random_vec(rng, k[0]))).unwrap();
    p
}

#[test]
fn gradients_match_finite_differences_per_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let step = 1e-3;

    let p = conv_param_set(&mut rng, &[2, 2, 5, 6], &[3, 2, 3, 2]);
    let err = grad_check(&p, step, 100, 1, |g, p| {
        let (x, k, b) = (g.param(p, "x").unwrap(), g.param(p, "k").unwrap(), g.param(p, "b").unwrap());
        let y = g.conv2d(x, k, b, Conv2dOptions { stride: [2, 1], padding: [1, 0] }).unwrap();
        project_to_scalar(g, y, 5)
    });
    assert!(err < 1e-4, "conv2d {err}");

    let p = conv_param_set(&mut rng, &[1, 2, 4, 5, 5], &[2, 2, 2, 3, 3]);
    let err = grad_check(&p, step, 100, 2, |g, p| {
        let (x, k, b) = (g.param(p, "x").unwrap(), g.param(p, "k").unwrap(), g.param(p, "b").unwrap());
        let y = g.conv3d(x, k, b, Conv3dOptions { stride: [1, 2, 2], padding: [1, 1, 0] }).unwrap();
        project_to_scalar(g, y, 6)
    });
    assert!(err < 1e-4, "conv3d {err}");

    let mut p = ParameterSet::new();
    p.insert("x", t64(&[3, 4], random_vec(&mut rng, 12))).unwrap();
    p.insert("w", t64(&[4, 5], random_vec(&mut rng, 20))).unwrap();
    p.insert("b", t64(&[5], random_vec(&mut rng, 5))).unwrap();
    let err = grad_check(&p, step, 100, 3, |g, p| {
        let (x, w, b) = (g.param(p, "x").unwrap(), g.param(p, "w").unwrap(), g.param(p, "b").unwrap());
        let y = g.linear(x, w, b).unwrap();
        g.softmax_xent(y, &[0, 4, 2]).unwrap()
    });
    assert!(err < 1e-4, "linear+xent {err}");

    // Values kept away from kinks and ties so the finite difference is valid.
    let spaced = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0 + 0.5) * 0.05).collect();
        for i in (1..n).rev() {
            v.swap(i, rng.gen_range(0..=i));
        }
        v
    };
    let mut p = ParameterSet::new();
    p.insert("x", t64(&[1, 2, 4, 4, 4], spaced(&mut rng, 128))).unwrap();
    let err = grad_check(&p, step, 200, 4, |g, p| {
        let x = g.param(p, "x").unwrap();
        let r = g.relu(x).unwrap();
        let m = g.maxpool3d(r, [2, 2, 2], [1, 2, 2]).unwrap();
        project_to_scalar(g, m, 7)
    });
    assert!(err < 1e-4, "relu+maxpool {err}");

    let mut p = ParameterSet::new();
    p.insert("a", t64(&[2, 3], random_vec(&mut rng, 6))).unwrap();
    p.insert("c", t64(&[2, 2], random_vec(&mut rng, 4))).unwrap();
    let err = grad_check(&p, step, 100, 5, |g, p| {
        let a = g.param(p, "a").unwrap();
        let c = g.param(p, "c").unwrap();
        let cat = g.concat(&[a, c, a]).unwrap();
        let flat = g.reshape(cat, &[1, 16]).unwrap();
        g.softmax_xent(flat, &[9]).unwrap()
    });
    assert!(err < 1e-4, "concat+reshape {err}");
}

#[test]
fn forward_backward_is_deterministic_and_replayable() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = conv_param_set(&mut rng, &[2, 3, 9, 9], &[4, 3, 3, 3]);
        p.insert("w", Tensor::new(&[36, 3], random_vec(&mut rng, 108).into_iter().map(|v| v as f32 as f64).collect()).unwrap()).unwrap();
        let mut p: ParameterSet<f32> = p.cast();
        let mut g = Graph::new();
        let (x, k, b) = (g.param(&p, "x").unwrap(), g.param(&p, "k").unwrap(), g.param(&p, "b").unwrap());
        let y = g.conv2d(x, k, b, Conv2dOptions::stride(2)).unwrap();
        let y = g.relu(y).unwrap();
        let y = g.maxpool2d(y, [2, 2], [1, 1]).unwrap();
        let f = g.flatten(y).unwrap();
        let w = g.param(&p, "w").unwrap();
        let z = g.input(Tensor::zeros(&[3]));
        let logits = g.linear(f, w, z).unwrap();
        let loss = g.softmax_xent(logits, &[1, 2]).unwrap();
        g.backward(loss, &mut p).unwrap();
        let before: Vec<f32> = g.node_ids().flat_map(|i| g.value(i).values().to_vec()).collect();
        g.replay().unwrap();
        let after: Vec<f32> = g.node_ids().flat_map(|i| g.value(i).values().to_vec()).collect();
        assert_eq!(before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), after.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        (g.value(loss).values()[0], p)
    };
    let (l1, p1) = run();
    let (l2, p2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(p1, p2);
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut p = ParameterSet::<f32>::new();
    p.insert("rgb.conv1.weight", Tensor::new(&[4, 3, 2, 2], random_vec(&mut rng, 48).into_iter().map(|v| v as f32).collect()).unwrap()).unwrap();
    p.insert("classifier.bias", Tensor::new(&[3], vec![f32::MIN_POSITIVE, -0.0, 1e30]).unwrap()).unwrap();
    let mut first = Vec::new();
    write_checkpoint(&p, &mut first).unwrap();
    let back: ParameterSet<f32> = read_checkpoint(&first[..]).unwrap();
    let mut second = Vec::new();
    write_checkpoint(&back, &mut second).unwrap();
    assert_eq!(first, second);
    for (name, t) in p.iter() {
        let b = back.get(name).unwrap();
        assert_eq!(t.shape(), b.shape());
        assert!(t.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn sgd_after_backward_descends() {
    let mut p = ParameterSet::<f64>::new();
    p.insert("w", t64(&[2, 2], vec![0.1, -0.2, 0.3, 0.05])).unwrap();
    let loss_of = |p: &mut ParameterSet<f64>, backward: bool| {
        let mut g = Graph::new();
        let x = g.input(t64(&[1, 2], vec![1.0, 2.0]));
        let w = g.param(p, "w").unwrap();
        let b = g.input(Tensor::zeros(&[2]));
        let z = g.linear(x, w, b).unwrap();
        let l = g.softmax_xent(z, &[1]).unwrap();
        if backward {
            g.backward(l, p).unwrap();
        }
        g.value(l).values()[0]
    };
    let l0 = loss_of(&mut p, true);
    sgd_update(&mut p, 0.1).unwrap();
    let l1 = loss_of(&mut p, false);
    assert!(l1 < l0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xent_is_nonnegative(logits in prop::collection::vec(-50.0f64..50.0, 2..8), pick in 0usize..8) {
        let c = logits.len();
        let label = pick % c;
        let mut g = Graph::<f64>::new();
        let z = g.input(Tensor::new(&[1, c], logits).unwrap());
        let l = g.softmax_xent(z, &[label]).unwrap();
        prop_assert!(g.value(l).values()[0] >= 0.0);
    }

    #[test]
    fn conv_and_pool_shapes_follow_floor_rule(
        h in 1usize..20, w in 1usize..20, kh in 1usize..6, kw in 1usize..6,
        s in 1usize..4, pad in 0usize..3,
    ) {
        prop_assume!(kh <= h + 2 * pad && kw <= w + 2 * pad);
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::zeros(&[1, 1, h, w]));
        let k = g.input(Tensor::zeros(&[2, 1, kh, kw]));
        let b = g.input(Tensor::zeros(&[2]));
        let y = g.conv2d(x, k, b, Conv2dOptions { stride: [s, s], padding: [pad, pad] }).unwrap();
        prop_assert_eq!(g.value(y).shape(), &[1, 2, (h + 2 * pad - kh) / s + 1, (w + 2 * pad - kw) / s + 1]);
        if kh <= h && kw <= w {
            let m = g.maxpool2d(x, [kh, kw], [s, s]).unwrap();
            prop_assert_eq!(g.value(m).shape(), &[1, 1, (h - kh) / s + 1, (w - kw) / s + 1]);
        }
    }
}
