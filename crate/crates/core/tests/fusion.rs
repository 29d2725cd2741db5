use hsicolor::attention::DeformConv;
use hsicolor::fusion::{Ablation, Fsb, Fsg, Generator, GeneratorConfig, Mdfm};
use hsicolor::nn::{rng_from_seed, Conv2d, ResBlock};
use hsicolor::Error;
use hsicolor_autograd::gradcheck::GradCheck;
use hsicolor_autograd::{named_params, Graph, Module, Param, Tensor};
use proptest::prelude::*;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, &mut rng_from_seed(seed))
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Zero-padded same-size convolution by direct summation.
fn conv_oracle(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
    let (h, w, ci) = (x.dim(1), x.dim(2), x.dim(3));
    let k = conv.weight.value();
    let (kk, co) = (k.dim(0), k.dim(3));
    let r = (kk / 2) as i64;
    let mut out = Tensor::zeros(&[1, h, w, co]);
    for y in 0..h {
        for xx in 0..w {
            for o in 0..co {
                let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.value().at(&[o]));
                for i in 0..kk {
                    for j in 0..kk {
                        let (sy, sx) = (y as i64 + i as i64 - r, xx as i64 + j as i64 - r);
                        if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                            continue;
                        }
                        for c in 0..ci {
                            acc += k.at(&[i, j, c, o]) * x.at(&[0, sy as usize, sx as usize, c]);
                        }
                    }
                }
                out.set(&[0, y, xx, o], acc);
            }
        }
    }
    out
}

fn resblock_oracle(x: &Tensor<f64>, rb: &ResBlock<f64>) -> Tensor<f64> {
    let a = conv_oracle(x, &rb.conv_a).map(gelu);
    let b = conv_oracle(&a, &rb.conv_b);
    x.zip_map(&b, |p, q| p + q)
}

fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        assert!((x - y).abs() <= tol * (1.0 + y.abs()), "index {i}: {x} vs {y}");
    }
}

fn randomize_offsets(m: &mut impl Module<f64>, seed: u64) {
    let mut k = seed;
    m.visit_params_mut("", &mut |name, p: &mut Param<f64>| {
        if name.contains("offset") {
            k += 1;
            let s = p.shape().to_vec();
            p.set(Tensor::uniform(&s, -0.3, 0.3, &mut rng_from_seed(k)));
        }
    });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fusion_weights_are_convex(seed in 0u64..10_000, scale in 0.1f64..100.0) {
        let m = Mdfm::<f64>::new(4, &mut rng_from_seed(seed));
        let g = Graph::no_grad();
        let spa = g.input(randn(&[1, 4, 4, 4], seed + 1).scale(scale));
        let fre = g.input(randn(&[1, 4, 4, 4], seed + 2));
        let (t, e) = m.mix(&g, spa, fre);
        for (a, b) in t.value().data().iter().zip(e.value().data()) {
            prop_assert!((a + b - 1.0).abs() <= 1e-15);
            prop_assert!(*a >= 0.0 && *b >= 0.0);
        }
    }
}

#[test]
fn mdfm_with_forced_spatial_weight_matches_oracle() {
    let c = 3;
    let mut m = Mdfm::<f64>::new(c, &mut rng_from_seed(1));
    // theta saturates to 1: spatial logits +40, frequency logits -40
    m.weights.pointwise.set_zero();
    let bias: Vec<f64> = (0..2 * c).map(|i| if i < c { 40.0 } else { -40.0 }).collect();
    m.weights.pointwise.bias.as_mut().unwrap().set(Tensor::from_vec(&[2 * c], bias));
    for conv in [&mut m.refine.conv_a, &mut m.refine.conv_b] {
        let s = conv.weight.shape().to_vec();
        conv.weight.set(randn(&s, 2));
        conv.bias.as_mut().unwrap().set(randn(&[c], 3));
    }
    let spa = randn(&[1, 5, 4, c], 4);
    let g = Graph::no_grad();
    let got = m.forward(&g, g.input(spa.clone()), g.input(Tensor::zeros(&[1, 5, 4, c]))).unwrap().value();

    let p = m.proj.weight.value();
    let proj = Tensor::from_fn(&[1, 5, 4, c], |i| {
        let (pix, o) = (i / c, i % c);
        (0..c).map(|k| spa.data()[pix * c + k] * p.at(&[0, 0, k, o])).sum()
    });
    let want = resblock_oracle(&proj, &m.refine).zip_map(&spa, |r, s| r + 0.1 * s);
    // the oracle's erf differs from the library's in the last few digits
    assert_close(&got, &want, 1e-10);
}

#[test]
fn mdfm_of_zeros_is_the_refinement_of_zero() {
    let m = Mdfm::<f64>::new(4, &mut rng_from_seed(5));
    let z = Tensor::zeros(&[1, 4, 4, 4]);
    let g = Graph::no_grad();
    let got = m.forward(&g, g.input(z.clone()), g.input(z.clone())).unwrap().value();
    let want = m.refine.forward(&g, g.input(z)).value();
    assert_eq!(got.data(), want.data());
}

#[test]
fn mdfm_rejects_mismatched_inputs() {
    let m = Mdfm::<f64>::new(4, &mut rng_from_seed(6));
    let g = Graph::no_grad();
    let r = m.forward(&g, g.input(Tensor::zeros(&[1, 4, 4, 4])), g.input(Tensor::zeros(&[1, 4, 2, 4])));
    assert!(matches!(r, Err(Error::Validation(_))));
}

#[test]
fn mdfm_gradients() {
    let mut m = Mdfm::<f64>::new(4, &mut rng_from_seed(7));
    let gc = GradCheck { samples: 6, ..GradCheck::default() };
    let r = gc.run(&mut m, &[randn(&[1, 6, 6, 4], 8), randn(&[1, 6, 6, 4], 9)], |g, m, x| {
        m.forward(g, x[0], x[1]).unwrap()
    });
    assert!(r.max_rel_err() < 1e-4, "{:?}", r.worst());
}

#[test]
fn zero_alpha_makes_the_global_path_an_identity() {
    let mut b = Fsb::<f64>::new(8, 8, 8, &Ablation::default(), &mut rng_from_seed(10));
    b.alpha.set(Tensor::zeros(&[1]));
    let x = randn(&[1, 8, 8, 8], 11);
    let g = Graph::no_grad();
    assert_eq!(b.global_path(&g, g.input(x.clone())).unwrap().value().data(), x.data());
}

#[test]
fn fsb_is_shape_preserving() {
    let b = Fsb::<f32>::new(32, 32, 32, &Ablation::default(), &mut rng_from_seed(12));
    let g = Graph::no_grad();
    let x = g.input(Tensor::randn(&[1, 32, 32, 32], 1.0, &mut rng_from_seed(13)));
    let y = b.forward(&g, x).unwrap().value();
    assert_eq!(y.shape(), &[1, 32, 32, 32]);
    assert!(y.all_finite());
}

#[test]
fn fusion_weights_act_bilinearly() {
    let mut b = Fsb::<f64>::new(8, 8, 8, &Ablation::default(), &mut rng_from_seed(14));
    let x = randn(&[1, 8, 8, 8], 15);
    let g = Graph::no_grad();
    let y1 = b.forward(&g, g.input(x.clone())).unwrap().value();
    for p in [&mut b.w_spa, &mut b.w_spe] {
        let v = p.value().scale(3.0);
        p.set(v);
    }
    let g = Graph::no_grad();
    let y3 = b.forward(&g, g.input(x)).unwrap().value();
    assert_close(&y3, &y1.scale(3.0), 1e-12);
}

#[test]
fn fsb_gradients() {
    let mut b = Fsb::<f64>::new(8, 8, 8, &Ablation::default(), &mut rng_from_seed(16));
    randomize_offsets(&mut b, 17);
    let gc = GradCheck { samples: 2, ..GradCheck::default() };
    let r = gc.run(&mut b, &[randn(&[1, 8, 8, 8], 18)], |g, m, x| m.forward(g, x[0]).unwrap());
    assert!(r.max_rel_err() < 1e-4, "{:?}", r.worst());
}

fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        bands: 8,
        channels: 8,
        groups: 2,
        blocks_per_group: 2,
        head_blocks: 1,
        crop: 16,
    }
}

#[test]
fn zero_configured_group_is_an_identity() {
    let mut grp = Fsg::<f64>::new(&small_config(), &Ablation::default(), &mut rng_from_seed(19));
    grp.set_zero();
    let x = randn(&[1, 8, 8, 8], 20);
    let g = Graph::no_grad();
    let y = grp.forward(&g, g.input(x.clone())).unwrap().value();
    assert_eq!(y.data(), x.data());
}

#[test]
fn group_structure_follows_the_flags() {
    let cfg = GeneratorConfig::default();
    let r = &mut rng_from_seed(21);
    let full = Fsg::<f32>::new(&cfg, &Ablation::default(), r);
    assert_eq!((full.blocks.len(), full.rb.is_some()), (3, true));
    let no_rb = Fsg::<f32>::new(&cfg, &Ablation::without("use_rbs").unwrap(), r);
    assert_eq!((no_rb.blocks.len(), no_rb.rb.is_some()), (3, false));
    let no_fsb = Fsg::<f32>::new(&cfg, &Ablation::without("use_fsb").unwrap(), r);
    assert_eq!((no_fsb.blocks.len(), no_fsb.rb.is_some()), (0, true));
    let b = &full.blocks[0];
    assert!(b.dgm.is_some() && b.spectral.is_some() && b.global.fem.is_some() && b.global.mdfm.is_some());
    let b = &Fsg::<f32>::new(&cfg, &Ablation::without("use_mdfm").unwrap(), r).blocks[0];
    assert!(b.global.mdfm.is_none() && b.local.mdfm.is_none() && b.global.fem.is_some());
    let b = &Fsg::<f32>::new(&cfg, &Ablation::without("use_dcn").unwrap(), r).blocks[0];
    assert!(b.dgm.as_ref().unwrap().dcn.is_none());
}

#[test]
fn every_ablation_variant_runs() {
    let cfg = small_config();
    let x = Tensor::<f32>::randn(&[1, 16, 16, 8], 1.0, &mut rng_from_seed(22));
    for flag in Ablation::VARIANTS {
        let flags = Ablation::without(flag).unwrap();
        let gen = Generator::<f32>::new(&cfg, &flags, &mut rng_from_seed(23)).unwrap();
        let g = Graph::no_grad();
        let y = gen.forward(&g, g.input(x.clone())).unwrap().value();
        assert_eq!(y.shape(), &[1, 16, 16, 3], "{flag}");
    }
    let mut bad = Ablation::without("use_dcn").unwrap();
    bad.use_asm = false;
    assert!(Generator::<f32>::new(&cfg, &bad, &mut rng_from_seed(24)).is_err());
    assert!(Ablation::without("use_everything").is_err());
}

#[test]
fn generator_contract() {
    let gen = Generator::<f32>::new(&GeneratorConfig::default(), &Ablation::default(), &mut rng_from_seed(25)).unwrap();
    let x = Tensor::<f32>::uniform(&[1, 64, 64, 8], 0.0, 1.0, &mut rng_from_seed(26));
    let run = |x: &Tensor<f32>| {
        let g = Graph::no_grad();
        (*gen.forward(&g, g.input(x.clone())).unwrap().value()).clone()
    };
    let y = run(&x);
    assert_eq!(y.shape(), &[1, 64, 64, 3]);
    assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert_eq!(y.data(), run(&x).data());

    // sizes that are not a multiple of 16 are padded and cropped back
    let odd = Tensor::<f32>::uniform(&[1, 40, 50, 8], 0.0, 1.0, &mut rng_from_seed(27));
    assert_eq!(run(&odd).shape(), &[1, 40, 50, 3]);

    let g = Graph::no_grad();
    let wrong = g.input(Tensor::<f32>::zeros(&[1, 64, 64, 7]));
    assert!(matches!(gen.forward(&g, wrong), Err(Error::Validation(_))));
}

#[test]
fn every_parameter_receives_gradient() {
    let gen = Generator::<f64>::new(&small_config(), &Ablation::default(), &mut rng_from_seed(28)).unwrap();
    let g = Graph::new();
    let x = g.input(randn(&[1, 16, 16, 8], 29));
    let target = g.constant(Tensor::uniform(&[1, 16, 16, 3], -1.0, 1.0, &mut rng_from_seed(30)));
    let loss = gen.forward(&g, x).unwrap().sub(target).abs().mean_all();
    let grads = g.backward(loss);
    let mut dead = Vec::new();
    for (name, p) in named_params(&gen) {
        match grads.param(p) {
            Some(t) if t.data().iter().any(|&v| v != 0.0) => {}
            _ => dead.push(name),
        }
    }
    assert!(dead.is_empty(), "no gradient reaches {dead:?}");
}

#[test]
fn deformable_offsets_start_at_zero() {
    let d = DeformConv::<f32>::new(4, 4, &mut rng_from_seed(31));
    assert!(d.offset.weight.value().data().iter().all(|&v| v == 0.0));
}
