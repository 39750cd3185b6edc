mod common;

use common::Texture;
use dancestream::engine::Tensor;
use dancestream::flow::*;
use image::RgbImage;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn identical_frames_give_zero_flow() {
    for seed in 0..3 {
        let tex = Texture::new(64, seed);
        let f = tex.render(0.0, 0.0);
        let flow = estimate_flow(&f, &f, &FlowParams::default()).unwrap();
        assert!(flow.max_magnitude() < 0.05, "{}", flow.max_magnitude());
    }
}

#[test]
fn subpixel_translation_is_recovered() {
    let p = FlowParams::default();
    let tex = Texture::new(64, 11);
    let flow = estimate_flow(&tex.render(0.0, 0.0), &tex.render(1.5, -0.75), &p).unwrap();
    let truth = FlowField::uniform(64, 64, 1.5, -0.75);
    let epe = flow.interior_endpoint_error(&truth, p.window_radius);
    assert!(epe < 0.3, "endpoint error {epe}");
}

#[test]
fn integer_shifts_up_to_three_pixels() {
    let p = FlowParams::default();
    for (i, &(sx, sy)) in [(1.0, 0.0), (0.0, -2.0), (3.0, 0.0), (-2.0, 2.0), (3.0, -3.0)].iter().enumerate() {
        let tex = Texture::new(64, 100 + i as u64);
        let flow = estimate_flow(&tex.render(0.0, 0.0), &tex.render(sx, sy), &p).unwrap();
        let epe = flow.interior_endpoint_error(&FlowField::uniform(64, 64, sx as f32, sy as f32), p.window_radius);
        assert!(epe < 0.3, "shift ({sx},{sy}): endpoint error {epe}");
    }
}

#[test]
fn swapping_frames_negates_flow() {
    let p = FlowParams::default();
    let tex = Texture::new(64, 7);
    let (a, b) = (tex.render(0.0, 0.0), tex.render(2.0, 0.0));
    let fwd = estimate_flow(&a, &b, &p).unwrap();
    let bwd = estimate_flow(&b, &a, &p).unwrap();
    let negated = FlowField {
        dx: bwd.dx.iter().map(|v| -v).collect(),
        dy: bwd.dy.iter().map(|v| -v).collect(),
        ..bwd
    };
    let dev = fwd.interior_endpoint_error(&negated, p.window_radius);
    assert!(dev < 0.3, "antisymmetry deviation {dev}");
    assert!((fwd.interior_endpoint_error(&FlowField::uniform(64, 64, 2.0, 0.0), p.window_radius)) < 0.3);
}

#[test]
fn estimator_rejects_bad_inputs() {
    let p = FlowParams::default();
    let a = Tensor::<f32>::zeros(&[64, 64]);
    let b = Tensor::<f32>::zeros(&[64, 60]);
    assert!(matches!(estimate_flow(&a, &b, &p), Err(FlowError::DimensionMismatch(..))));
    let small = Tensor::<f32>::zeros(&[32, 32]);
    assert!(matches!(estimate_flow(&small, &small, &p), Err(FlowError::ImageTooSmall { .. })));
    let fitted = p.fitted_to(32, 32).unwrap();
    let flow = estimate_flow(&small, &small, &fitted).unwrap();
    assert!(flow.dx.iter().chain(&flow.dy).all(|v| v.is_finite()));
}

#[test]
fn textureless_frames_stay_finite() {
    let p = FlowParams::default();
    let flat = Tensor::<f32>::filled(&[64, 64], 90.0);
    let mut spot = flat.clone();
    spot.values_mut()[32 * 64 + 32] = 255.0;
    let flow = estimate_flow(&flat, &spot, &p).unwrap();
    assert!(flow.dx.iter().chain(&flow.dy).all(|v| v.is_finite()));
}

#[test]
fn mean_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images: Vec<RgbImage> = (0..100)
        .map(|_| RgbImage::from_fn(9, 7, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()])))
        .collect();
    let mean = compute_flow_mean_image(&images).unwrap();
    // Two-pass oracle: mean first, then the mean of deviations as a correction.
    for c in 0..3 {
        for y in 0..7 {
            for x in 0..9 {
                let vals: Vec<f64> = images.iter().map(|im| im.get_pixel(x, y)[c] as f64).collect();
                let m0 = vals.iter().sum::<f64>() / vals.len() as f64;
                let m = m0 + vals.iter().map(|v| v - m0).sum::<f64>() / vals.len() as f64;
                assert!((mean.get(&[c, y as usize, x as usize]) as f64 - m).abs() < 1e-5);
            }
        }
    }
    // Subtracting the mean leaves a zero-mean set.
    for c in 0..3 {
        for i in 0..63 {
            let (x, y) = ((i % 9) as u32, (i / 9) as u32);
            let m = mean.get(&[c, y as usize, x as usize]) as f64;
            let resid: f64 = images.iter().map(|im| im.get_pixel(x, y)[c] as f64 - m).sum::<f64>() / 100.0;
            assert!(resid.abs() < 1e-4);
        }
    }
}

#[test]
fn flo_and_mean_files_round_trip_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut flow = FlowField::zeros(13, 5);
    flow.dx.iter_mut().chain(flow.dy.iter_mut()).for_each(|v| *v = rng.gen_range(-20.0..20.0));
    let p1 = dir.path().join("a.flo");
    let p2 = dir.path().join("b.flo");
    write_flo(&p1, &flow).unwrap();
    let back = read_flo(&p1).unwrap();
    write_flo(&p2, &back).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(back, flow);

    let mean = Tensor::from_fn(&[3, 4, 5], |i| i as f32 * 0.37);
    let mp = dir.path().join("mean.bin");
    write_mean_image(&mp, &mean).unwrap();
    assert_eq!(read_mean_image(&mp).unwrap(), mean);

    std::fs::write(&p1, b"garbage").unwrap();
    assert!(matches!(read_flo(&p1), Err(FlowError::Format { .. })));
}

proptest! {
    #[test]
    fn encoding_is_monotone_and_invertible(a in -8.0f32..8.0, b in -8.0f32..8.0, max_mag in 1.0f64..20.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let scaled = |v: f32| v * max_mag as f32 / 8.0;
        let flow = FlowField { width: 2, height: 1, dx: vec![scaled(lo), scaled(hi)], dy: vec![scaled(hi), scaled(lo)] };
        let img = flow_to_image(&flow, max_mag);
        prop_assert!(img.get_pixel(0, 0)[0] <= img.get_pixel(1, 0)[0]);
        prop_assert!(img.get_pixel(0, 0)[1] >= img.get_pixel(1, 0)[1]);
        let back = image_to_flow(&img, max_mag);
        for i in 0..2 {
            prop_assert!(((back.dx[i] - flow.dx[i]) as f64).abs() <= max_mag / 255.0 + 1e-6);
            prop_assert!(((back.dy[i] - flow.dy[i]) as f64).abs() <= max_mag / 255.0 + 1e-6);
        }
    }
}
