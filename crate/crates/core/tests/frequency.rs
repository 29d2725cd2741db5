use hsicolor::frequency::{
    complex_mul, dwt2, fourier_gate, fourier_gate_with, gated_residual, irfft2, iwt2, resample_spectrum, rfft2,
    subband_refine, Fem, FemLevel,
};
use hsicolor::nn::rng_from_seed;
use hsicolor_autograd::gradcheck::GradCheck;
use hsicolor_autograd::{Graph, Tensor};
use proptest::prelude::*;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut rng_from_seed(seed))
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn haar_block_oracle() {
    // a b / c d = 1 2 / 3 4 with the fixed sign convention
    let g = Graph::no_grad();
    let x = g.input(Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]));
    let bands = dwt2(x).unwrap();
    let got: Vec<f64> = bands.iter().map(|b| b.value().item()).collect();
    assert_eq!(got, vec![5.0, -2.0, -1.0, 0.0]);
    let back = iwt2(&g, bands[0], bands[1], bands[2], bands[3]).unwrap().value();
    assert_eq!(back.data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn constant_block_has_only_low_band() {
    let g = Graph::no_grad();
    let x = g.input(Tensor::full(&[1, 2, 2, 1], 3.0));
    let b = dwt2(x).unwrap();
    assert_eq!(b[0].value().item(), 6.0);
    for k in 1..4 {
        assert_eq!(b[k].value().item(), 0.0);
    }
}

#[test]
fn odd_dims_are_rejected() {
    let g = Graph::<f64>::no_grad();
    assert!(dwt2(g.input(Tensor::zeros(&[1, 3, 4, 1]))).is_err());
    let a = g.input(Tensor::zeros(&[1, 2, 2, 1]));
    let b = g.input(Tensor::zeros(&[1, 2, 3, 1]));
    assert!(iwt2(&g, a, a, a, b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn haar_reconstructs_and_preserves_energy(h in 1usize..8, w in 1usize..8, c in 1usize..5, seed in 0u64..10_000) {
        let x = randn(&[1, 2 * h, 2 * w, c], seed);
        let g = Graph::no_grad();
        let b = dwt2(g.input(x.clone())).unwrap();
        let energy: f64 = b.iter().map(|v| v.value().sq_norm()).sum();
        prop_assert!((energy - x.sq_norm()).abs() <= 1e-12 * x.sq_norm());
        let back = iwt2(&g, b[0], b[1], b[2], b[3]).unwrap().value();
        prop_assert!(max_abs_diff(&back, &x) < 1e-12);
    }

    #[test]
    fn zero_beta_gate_is_identity(seed in 0u64..10_000) {
        let g = Graph::no_grad();
        let ll = randn(&[1, 4, 4, 3], seed);
        let y = randn(&[1, 4, 4, 3], seed + 1).scale(5.0);
        let out = gated_residual(g.input(ll.clone()), g.input(y), g.constant(Tensor::from_vec(&[1], vec![0.0])));
        let got = out.value();
        prop_assert_eq!(got.data(), ll.data());
    }
}

#[test]
fn gated_residual_scalar_value() {
    let g = Graph::no_grad();
    let out = gated_residual(
        g.input(Tensor::zeros(&[1])),
        g.input(Tensor::ones(&[1])),
        g.constant(Tensor::from_vec(&[1], vec![0.1])),
    );
    let want = 2.0 / (1.0 + (-0.1f64).exp()) - 1.0;
    assert!((out.value().item() - want).abs() < 1e-15);
    assert!((out.value().item() - 0.049958).abs() < 1e-6);
}

#[test]
fn subband_refine_identity_zero_and_oracle() {
    let c = 2;
    let mut level = FemLevel::<f64>::new(c, 8, 8, &mut rng_from_seed(1));
    let bands: Vec<Tensor<f64>> = (0..4).map(|k| randn(&[1, 4, 4, c], 10 + k)).collect();
    let run = |level: &FemLevel<f64>| {
        let g = Graph::no_grad();
        let v: Vec<_> = bands.iter().map(|b| g.input(b.clone())).collect();
        subband_refine(&g, [v[0], v[1], v[2], v[3]], level).map(|o| (*o.value()).clone())
    };

    // explicit-loop oracle with the random weights
    let out = run(&level);
    let dw = level.refine_dw.weight.value().clone();
    let dwb = level.refine_dw.bias.as_ref().unwrap().value().clone();
    let pw = level.refine_pw.weight.value().clone();
    let pwb = level.refine_pw.bias.as_ref().unwrap().value().clone();
    let c4 = 4 * c;
    let input = |y: isize, x: isize, ch: usize| -> f64 {
        if !(0..4).contains(&y) || !(0..4).contains(&x) {
            return 0.0;
        }
        bands[ch / c].at(&[0, y as usize, x as usize, ch % c])
    };
    for y in 0..4 {
        for x in 0..4 {
            let mut mid = vec![0.0; c4];
            for ch in 0..c4 {
                let mut acc = dwb.data()[ch];
                for i in 0..3 {
                    for j in 0..3 {
                        acc += dw.at(&[i, j, ch]) * input(y as isize + 2 * i as isize - 2, x as isize + 2 * j as isize - 2, ch);
                    }
                }
                mid[ch] = acc;
            }
            for co in 0..c4 {
                let want: f64 = pwb.data()[co] + (0..c4).map(|ci| mid[ci] * pw.at(&[0, 0, ci, co])).sum::<f64>();
                let got = out[co / c].at(&[0, y, x, co % c]);
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    level.set_identity_refine();
    for (o, b) in run(&level).iter().zip(&bands) {
        assert_eq!(o.data(), b.data());
    }

    level.refine_pw.set_zero();
    for o in run(&level) {
        assert!(o.data().iter().all(|&v| v == 0.0));
    }
}

/// Direct 2-D DFT coefficient at `(k, l)` of one channel.
fn dft_coeff(x: &Tensor<f64>, ch: usize, k: usize, l: usize) -> (f64, f64) {
    let (h, w) = (x.dim(1), x.dim(2));
    let mut re = 0.0;
    let mut im = 0.0;
    for y in 0..h {
        for xx in 0..w {
            let th = -std::f64::consts::TAU * ((k * y) as f64 / h as f64 + (l * xx) as f64 / w as f64);
            let v = x.at(&[0, y, xx, ch]);
            re += v * th.cos();
            im += v * th.sin();
        }
    }
    (re, im)
}

#[test]
fn rfft2_matches_direct_dft() {
    for &(h, w) in &[(4, 4), (6, 5), (8, 6), (1, 1)] {
        let x = randn(&[1, h, w, 2], (h * 31 + w) as u64);
        let g = Graph::no_grad();
        let spec = rfft2(g.input(x.clone())).value();
        assert_eq!(spec.shape(), &[1, h, w / 2 + 1, 2, 2]);
        for k in 0..h {
            for l in 0..w / 2 + 1 {
                for ch in 0..2 {
                    let (re, im) = dft_coeff(&x, ch, k, l);
                    assert!((spec.at(&[0, k, l, ch, 0]) - re).abs() < 1e-10);
                    assert!((spec.at(&[0, k, l, ch, 1]) - im).abs() < 1e-10);
                }
            }
        }
        let back = irfft2(g.input((*spec).clone()), w).value();
        assert!(max_abs_diff(&back, &x) < 1e-12);
    }
}

#[test]
fn zero_spectral_weights_give_zero_gate() {
    let g = Graph::no_grad();
    let x = g.input(randn(&[1, 8, 8, 3], 5));
    let w = g.constant(Tensor::zeros(&[8, 5, 3, 2]));
    let y = fourier_gate(x, w, w).value();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

fn unit_weights(h: usize, wf: usize, c: usize) -> Tensor<f64> {
    Tensor::from_fn(&[h, wf, c, 2], |i| if i % 2 == 0 { 1.0 } else { 0.0 })
}

#[test]
fn unit_weights_with_identity_activation_roundtrip() {
    let x = randn(&[1, 8, 6, 3], 6);
    let g = Graph::no_grad();
    let w = g.constant(unit_weights(8, 4, 3));
    let y = fourier_gate_with(g.input(x.clone()), w, w, |v| v).value();
    assert!(max_abs_diff(&y, &x) < 1e-12);
}

#[test]
fn scaling_one_bin_scales_a_cosine() {
    let (h, w, k0, l0) = (8, 8, 1, 2);
    let x = Tensor::from_fn(&[1, h, w, 1], |i| {
        let (y, xx) = (i / w, i % w);
        (std::f64::consts::TAU * ((k0 * y) as f64 / h as f64 + (l0 * xx) as f64 / w as f64)).cos()
    });
    let mut w1 = unit_weights(h, w / 2 + 1, 1);
    w1.set(&[k0, l0, 0, 0], 3.0);
    let g = Graph::no_grad();
    let y = fourier_gate_with(g.input(x.clone()), g.constant(w1), g.constant(unit_weights(h, w / 2 + 1, 1)), |v| v).value();
    let (re, im) = dft_coeff(&y, 0, k0, l0);
    let amp = (re * re + im * im).sqrt();
    assert!((amp - 3.0 * (h * w) as f64 / 2.0).abs() < 1e-9);
    assert!(max_abs_diff(&y, &x.scale(3.0)) < 1e-12);
}

#[test]
fn resampling_is_identity_at_native_size_and_exact_on_constants() {
    let g = Graph::no_grad();
    let w = randn(&[8, 5, 2, 2], 7);
    let same = resample_spectrum(&g, g.input(w.clone()), 8, 8, 8).value();
    assert_eq!(same.data(), w.data());
    let flat = Tensor::full(&[8, 5, 2, 2], 0.7);
    let up = resample_spectrum(&g, g.input(flat), 8, 10, 12).value();
    assert_eq!(up.shape(), &[10, 7, 2, 2]);
    assert!(up.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn fft_ops_gradients() {
    let gc = GradCheck { samples: 16, ..GradCheck::default() };
    for &(h, w) in &[(4, 4), (4, 5), (2, 6)] {
        let x = randn(&[1, h, w, 2], 40 + w as u64);
        let r = gc.run_inputs(&[x.clone()], |_, v| rfft2(v[0]).square());
        assert!(r.max_rel_err() < 1e-6, "rfft {:?}", r.worst());
        let s = randn(&[1, h, w / 2 + 1, 2, 2], 50 + w as u64);
        let r = gc.run_inputs(&[s], move |_, v| irfft2(v[0], w).square());
        assert!(r.max_rel_err() < 1e-6, "irfft {:?}", r.worst());
        let wt = randn(&[h, w / 2 + 1, 2, 2], 60);
        let r = gc.run_inputs(&[x, wt.clone(), wt], |_, v| fourier_gate(v[0], v[1], v[2]));
        assert!(r.max_rel_err() < 1e-6, "gate {:?}", r.worst());
    }
    let z = randn(&[2, 3, 2, 2, 2], 70);
    let wt = randn(&[3, 2, 2, 2], 71);
    let r = gc.run_inputs(&[z, wt], |_, v| complex_mul(v[0], v[1]));
    assert!(r.max_rel_err() < 1e-6, "complex_mul {:?}", r.worst());
    let wt = randn(&[4, 3, 2, 2], 72);
    let r = gc.run_inputs(&[wt], |g, v| resample_spectrum(g, v[0], 4, 6, 10).square());
    assert!(r.max_rel_err() < 1e-6, "resample {:?}", r.worst());
}

#[test]
fn fem_identity_configuration_reproduces_input() {
    let mut fem = Fem::<f64>::new(4, 16, 16, &mut rng_from_seed(3));
    fem.set_identity();
    let x = randn(&[1, 16, 16, 4], 8);
    let g = Graph::no_grad();
    let y = fem.forward(&g, g.input(x.clone())).unwrap().value();
    assert!(max_abs_diff(&y, &x) <= 1e-12 * x.max_abs());
}

#[test]
fn fem_shape_and_divisibility() {
    let fem = Fem::<f32>::new(16, 32, 32, &mut rng_from_seed(4));
    let g = Graph::no_grad();
    let x = g.input(Tensor::randn(&[1, 32, 32, 16], 1.0, &mut rng_from_seed(5)));
    assert_eq!(fem.forward(&g, x).unwrap().shape(), vec![1, 32, 32, 16]);
    let odd = g.input(Tensor::zeros(&[1, 12, 16, 16]));
    assert!(fem.forward(&g, odd).is_err());
}

#[test]
fn fem_gradients_match_finite_differences() {
    let mut fem = Fem::<f64>::new(4, 8, 8, &mut rng_from_seed(6));
    // push the spectral weights away from the near-identity init so every path is exercised
    for l in &mut fem.levels {
        *l.w2.value_mut() = randn(l.w2.shape(), 9).scale(0.5);
    }
    let x = randn(&[1, 8, 8, 4], 10);
    let r = GradCheck { samples: 8, ..GradCheck::default() }.run(&mut fem, &[x], |g, m, v| m.forward(g, v[0]).unwrap());
    assert!(r.max_rel_err() < 1e-5, "{:?}", r.worst());
}
