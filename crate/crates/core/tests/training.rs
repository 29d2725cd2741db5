use std::path::Path;

use hsicolor::data_io::{read_ppm, write_cube, HyperCube, SceneSample};
use hsicolor::fusion::Ablation;
use hsicolor::training::{
    colorize, evaluate, infer, load_splits, lr_schedule, read_checkpoint, read_dataset, synth_series, write_dataset,
    TrainConfig, Trainer,
};
use hsicolor::Error;
use hsicolor_autograd::{param_checksum, Module};

/// A configuration small enough to train a few epochs in seconds.
fn tiny(out: &Path) -> TrainConfig {
    let mut c = TrainConfig {
        epochs: 3,
        lr_constant_epochs: 1,
        lr0: 2e-4,
        crop: 32,
        seed: 7,
        checkpoint_every: 1,
        out_dir: out.to_path_buf(),
        ..TrainConfig::default()
    };
    c.dataset.train_count = 3;
    c.dataset.val_count = 2;
    c.dataset.size = 32;
    c.generator.channels = 8;
    c.generator.groups = 1;
    c.generator.blocks_per_group = 1;
    c.generator.head_blocks = 1;
    c.discriminator.patch_width = 8;
    c.discriminator.stats_width = 8;
    c.discriminator.head_hidden = 8;
    c.loss.seg_start_epoch = 1;
    c.seg.width = 8;
    c.seg.target_accuracy = 0.5;
    c.seg.max_epochs = 40;
    c
}

fn fit(cfg: TrainConfig) -> Trainer {
    let (train, val) = load_splits(&cfg.dataset).unwrap();
    let mut t = Trainer::new(cfg, &train).unwrap();
    t.fit(&train, &val, &mut |_| {}).unwrap();
    t
}

#[test]
fn learning_rate_schedule_examples() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr_schedule(0).unwrap(), 1.2e-4);
    assert_eq!(cfg.lr_schedule(49).unwrap(), 1.2e-4);
    assert!((cfg.lr_schedule(125).unwrap() - 6.0e-5).abs() < 1e-18);
    assert!((cfg.lr_schedule(199).unwrap() - 1.2e-4 / 150.0).abs() < 1e-18);
    assert!(matches!(cfg.lr_schedule(200), Err(Error::Validation(_))));
    // a constant phase longer than the run keeps lr0 throughout
    assert_eq!(lr_schedule(1e-3, 8, 2, 1).unwrap(), 1e-3);
}

#[test]
fn config_keys_default_and_unknown_keys_fail() {
    assert_eq!(TrainConfig::from_toml("").unwrap(), TrainConfig::default());
    let err = TrainConfig::from_toml("epochz = 3").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(TrainConfig::from_toml("[generator]\nwidth = 3").is_err());
    assert!(TrainConfig::from_toml("epochs = 0").is_err());
    assert!(TrainConfig::from_toml("lr0 = -1.0").is_err());
    let desk = TrainConfig::from_toml(include_str!("../../../configs/desk.toml")).unwrap();
    assert_eq!((desk.epochs, desk.crop, desk.lr_constant_epochs, desk.loss.seg_start_epoch), (30, 64, 8, 8));
    assert_eq!(TrainConfig::from_toml(&desk.to_toml()).unwrap(), desk);
}

#[test]
fn every_ablation_variant_is_a_config_flag() {
    for flag in Ablation::VARIANTS {
        let cfg = TrainConfig::from_toml(&format!("[ablation]\n{flag} = false")).unwrap();
        assert_eq!(cfg.ablation, Ablation::without(flag).unwrap());
    }
    assert!(TrainConfig::from_toml("[ablation]\nuse_fsb = false\nuse_rbs = false").is_err());
}

#[test]
fn synthetic_splits_are_disjoint_and_normalised() {
    let spec = tiny(Path::new("unused")).dataset;
    let (train, val) = load_splits(&spec).unwrap();
    assert_eq!((train.len(), val.len()), (3, 2));
    for v in &val {
        assert!(train.iter().all(|t| t.seed != v.seed));
    }
    for s in train.iter().chain(&val) {
        let vals = s.cube.values();
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(vals.contains(&0.0) && vals.contains(&1.0));
    }
}

#[test]
fn dataset_directory_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = synth_series(3, 0, 2, 16, 5, 3).unwrap();
    write_dataset(dir.path(), &samples).unwrap();
    let back = read_dataset(dir.path(), 3).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!(a.cube, b.cube);
        assert_eq!(a.mask, b.mask);
        let err = a.rgb.data().iter().zip(b.rgb.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(err <= 1.0 / 255.0 + 1e-6);
    }
}

#[test]
fn small_step_decreases_generator_objective() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let (train, _) = load_splits(&cfg.dataset).unwrap();
    let mut t = Trainer::new(cfg, &train).unwrap();
    for epoch in [0, 1] {
        let stats = t.train_step(&train[0], epoch, 1e-6).unwrap();
        let after = t.generator_loss(&train[0], epoch).unwrap();
        assert!(after < stats.total, "epoch {epoch}: {after} !< {}", stats.total);
    }
}

#[test]
fn seeded_runs_are_identical_and_resume_matches() {
    let (d1, d2, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = fit(tiny(d1.path()));
    let b = fit(tiny(d2.path()));
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.history, b.history);
    assert_eq!(param_checksum(&a.generator), param_checksum(&b.generator));
    let strip = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p.join("train.log"))
            .unwrap()
            .lines()
            .map(|l| l.split(" time=").next().unwrap().to_string())
            .collect()
    };
    assert_eq!(strip(d1.path()), strip(d2.path()));

    // resume from the end of epoch 1 in a fresh output directory
    let mid = d1.path().join("epoch_0001.ckpt");
    let mut c = Trainer::resume(&mid).unwrap();
    assert_eq!(c.epoch, 1);
    c.config.out_dir = d3.path().to_path_buf();
    let (train, val) = load_splits(&c.config.dataset).unwrap();
    let report = c.fit(&train, &val, &mut |_| {}).unwrap().unwrap();
    assert_eq!(c.history, a.history);
    assert_eq!(&c.steps[..], &a.steps[a.steps.len() - c.steps.len()..]);
    assert_eq!(param_checksum(&c.generator), param_checksum(&a.generator));
    assert_eq!(param_checksum(&c.disc), param_checksum(&a.disc));
    assert_eq!(report, evaluate(&a.generator, &val).unwrap());
    assert_eq!(
        std::fs::read_to_string(d1.path().join("report.txt")).unwrap(),
        std::fs::read_to_string(d3.path().join("report.txt")).unwrap()
    );
}

#[test]
fn segmentation_term_follows_flag_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.epochs = 2;
    cfg.ablation.use_seg_loss = false;
    let t = fit(cfg);
    assert!(t.segnet.is_none());
    assert!(t.steps.iter().all(|s| s.seg == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.epochs = 2;
    let (train, val) = load_splits(&cfg.dataset).unwrap();
    let mut t = Trainer::new(cfg, &train).unwrap();
    let seg = t.segnet.as_ref().unwrap();
    let before = param_checksum(seg);
    let mut frozen = true;
    seg.visit_params("", &mut |_, p| frozen &= !p.trainable());
    assert!(frozen);
    t.fit(&train, &val, &mut |_| {}).unwrap();
    assert_eq!(param_checksum(t.segnet.as_ref().unwrap()), before);
    assert!(t.steps.iter().filter(|s| s.epoch == 0).all(|s| s.seg == 0.0));
    assert!(t.steps.iter().filter(|s| s.epoch == 1).all(|s| s.seg > 0.0));
    // the segmentation net travels with the checkpoint
    let r = Trainer::resume(t.final_checkpoint_path()).unwrap();
    assert_eq!(param_checksum(r.segnet.as_ref().unwrap()), before);
}

#[test]
fn non_finite_loss_aborts_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.ablation.use_seg_loss = false;
    let (train, _) = load_splits(&cfg.dataset).unwrap();
    let mut t = Trainer::new(cfg, &train).unwrap();
    t.generator.head.out.bias.as_mut().unwrap().value_mut().data_mut()[0] = f32::NAN;
    match t.train_step(&train[0], 0, 1e-4) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("loss"), "{msg}"),
        other => panic!("expected a non-finite error, got {:?}", other.map(|s| s.line())),
    }
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::build(tiny(dir.path())).unwrap();
    let path = dir.path().join("x.ckpt");
    t.save(&path).unwrap();
    assert!(read_checkpoint(&path).is_ok());
    let mut bytes = std::fs::read(&path).unwrap();
    *bytes.last_mut().unwrap() ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(Trainer::resume(&path), Err(Error::Format { .. })));
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_checkpoint(&path).is_err());
    assert!(!dir.path().join("x.ckpt.tmp").exists());
}

fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * (n - 1) - i
    }
}

#[test]
fn inference_pads_and_crops_like_an_extended_input() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::build(tiny(dir.path())).unwrap();
    let ckpt = dir.path().join("g.ckpt");
    t.save(&ckpt).unwrap();

    let scene = synth_series(11, 0, 1, 72, 8, 4).unwrap().remove(0);
    let cube = scene.cube.crop(0, 0, 65, 63);
    let cube_path = dir.path().join("c.cube");
    write_cube(&cube, &cube_path).unwrap();
    let (o1, o2) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    let img = infer(&ckpt, &cube_path, &o1).unwrap();
    infer(&ckpt, &cube_path, &o2).unwrap();
    assert_eq!((img.height(), img.width()), (65, 63));
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
    let back = read_ppm(&o1).unwrap();
    assert_eq!((back.height(), back.width()), (65, 63));

    // extend to 80x64 by reflection along the bottom and right edges
    let (h, w, l) = (65, 63, 8);
    let mut ext = Vec::with_capacity(80 * 64 * l);
    for y in 0..80 {
        for x in 0..64 {
            for b in 0..l {
                ext.push(cube.get(reflect(y, h), reflect(x, w), b));
            }
        }
    }
    let ext = HyperCube::from_hwc(80, 64, l, &ext).unwrap();
    let direct = colorize(&t.generator, &ext).unwrap();
    let padded = colorize(&t.generator, &cube).unwrap();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                assert_eq!(padded.data()[(y * w + x) * 3 + c], direct.data()[(y * 64 + x) * 3 + c], "({y},{x},{c})");
            }
        }
    }

    let five = HyperCube::new(16, 16, 5, vec![0.5; 16 * 16 * 5]).unwrap();
    write_cube(&five, &cube_path).unwrap();
    assert!(matches!(infer(&ckpt, &cube_path, &o1), Err(Error::Validation(_))));
}

#[test]
fn evaluation_matches_a_direct_psnr_computation() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trainer::build(tiny(dir.path())).unwrap();
    let (_, val) = load_splits(&t.config.dataset).unwrap();
    let report = evaluate(&t.generator, &val).unwrap();
    assert_eq!(report.rows.len(), val.len());
    for (row, s) in report.rows.iter().zip(&val) {
        let pred = colorize(&t.generator, &s.cube).unwrap();
        let mse = pred
            .to_unit()
            .iter()
            .zip(s.rgb.to_unit())
            .map(|(a, b)| (*a as f64 - b as f64).powi(2))
            .sum::<f64>()
            / pred.data().len() as f64;
        assert!((row.psnr - 10.0 * (1.0 / mse).log10()).abs() < 1e-9);
    }
    let mean = report.mean();
    assert!((mean.ssim - report.rows.iter().map(|r| r.ssim).sum::<f64>() / val.len() as f64).abs() < 1e-12);
    let empty: Vec<SceneSample> = Vec::new();
    assert!(evaluate(&t.generator, &empty).is_err());
}

#[test]
fn cli_synth_and_selftest() {
    let exe = env!("CARGO_BIN_EXE_hsicolor");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let status = std::process::Command::new(exe)
        .args(["synth", "--out", out.to_str().unwrap(), "--count", "2", "--size", "16", "--bands", "4", "--classes", "3"])
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(read_dataset(&out, 3).unwrap().len(), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    let o = std::process::Command::new(exe).args(["train", "--config", bad.to_str().unwrap()]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    let o = std::process::Command::new(exe).arg("selftest").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}
