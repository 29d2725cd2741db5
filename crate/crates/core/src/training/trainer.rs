use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hsicolor_autograd::{impl_module, set_trainable, Float, Graph, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{load_module, read_checkpoint, store_module, write_checkpoint, Arrays};
use super::{load_splits, TrainConfig};
use crate::data_io::{normalize_cube, random_crop_pair, read_cube, sample_seed, write_ppm, HyperCube, RgbImage, SceneSample};
use crate::discriminators::{PatchGan, SPatchGan};
use crate::error::{Error, Result};
use crate::fusion::Generator;
use crate::losses::{
    content_terms, discriminator_loss, generator_adv_loss, pretrain_segnet, rgb_tensor, seg_loss, DiscScores,
    MetricReport, MetricRow, RandomFeatures, SegNet,
};
use crate::nn::rng_from_seed;
use crate::optim::Adam;

pub const ADAM_BETAS: (f64, f64) = (0.5, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

// independent random streams derived from the run seed
const STREAM_DISC: u64 = 1;
const STREAM_SEG: u64 = 2;
const STREAM_ORDER: u64 = 3;
const STREAM_CROP: u64 = 4;

pub struct Discriminators<T: Float> {
    pub patch: PatchGan<T>,
    pub stats: SPatchGan<T>,
}

impl_module!(Discriminators { patch, stats });

impl<T: Float> Discriminators<T> {
    pub fn scores<'g>(&self, g: &'g Graph<T>, cond: Var<'g, T>, img: Var<'g, T>) -> Result<DiscScores<'g, T>> {
        Ok(DiscScores {
            patch: self.patch.forward(g, cond, img)?,
            stats: self.stats.forward(g, img).logits,
        })
    }
}

/// Loss components of one step. `adv`, `content` and `seg` are unweighted;
/// `total` is the generator objective that was minimised.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub d: f64,
    pub adv: f64,
    pub pix: f64,
    pub per: f64,
    pub edge: f64,
    pub fft: f64,
    pub ssim: f64,
    pub tv: f64,
    pub content: f64,
    pub seg: f64,
    pub total: f64,
}

impl StepStats {
    pub fn components(&self) -> [(&'static str, f64); 11] {
        [
            ("d", self.d),
            ("adv", self.adv),
            ("pix", self.pix),
            ("per", self.per),
            ("edge", self.edge),
            ("fft", self.fft),
            ("ssim", self.ssim),
            ("tv", self.tv),
            ("content", self.content),
            ("seg", self.seg),
            ("total", self.total),
        ]
    }

    /// `key=value` record; the loss fields print with round-trip precision.
    pub fn line(&self) -> String {
        let mut s = format!("epoch={} step={} lr={:e}", self.epoch, self.step, self.lr);
        for (k, v) in self.components() {
            s.push_str(&format!(" {k}={v:e}"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of every component over the epoch's steps.
    pub mean: StepStats,
    pub val: Option<MetricRow>,
}

impl EpochSummary {
    pub fn line(&self) -> String {
        let m = &self.mean;
        let mut s = format!(
            "epoch={} lr={:e} d={:.5} adv={:.5} content={:.5} seg={:.5} total={:.5}",
            self.epoch, self.lr, m.d, m.adv, m.content, m.seg, m.total
        );
        if let Some(v) = &self.val {
            s.push_str(&format!(" val_psnr={:.4} val_ssim={:.4} val_uiqi={:.4}", v.psnr, v.ssim, v.uiqi));
        }
        s
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    epoch: usize,
    step: u64,
    g_opt_step: u64,
    d_opt_step: u64,
    has_segnet: bool,
    history: Vec<EpochSummary>,
}

/// Cube as an `[1, H, W, L]` tensor.
pub fn cube_tensor(cube: &HyperCube) -> Tensor<f32> {
    Tensor::from_vec(&[1, cube.height(), cube.width(), cube.bands()], cube.to_hwc())
}

/// Runs the generator at full resolution without recording gradients.
pub fn colorize(generator: &Generator<f32>, cube: &HyperCube) -> Result<RgbImage> {
    let g = Graph::no_grad();
    let y = generator.forward(&g, g.constant(cube_tensor(cube)))?.value();
    RgbImage::new(cube.height(), cube.width(), y.data().to_vec())
}

/// Per-image metrics of the generator's output on paired samples.
pub fn evaluate(generator: &Generator<f32>, samples: &[SceneSample]) -> Result<MetricReport> {
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| MetricRow::compute(format!("{i:05}"), &colorize(generator, &s.cube)?, &s.rgb))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::new(rows)
}

fn store_adam(opt: &Adam<f32>, prefix: &str, arrays: &mut Arrays) {
    for (k, t) in &opt.m {
        arrays.insert(format!("{prefix}.m.{k}"), t.clone());
    }
    for (k, t) in &opt.v {
        arrays.insert(format!("{prefix}.v.{k}"), t.clone());
    }
}

fn load_adam(step: u64, prefix: &str, arrays: &Arrays) -> Adam<f32> {
    let mut opt = Adam::new(ADAM_BETAS.0, ADAM_BETAS.1, ADAM_EPS);
    opt.step = step;
    let (pm, pv) = (format!("{prefix}.m."), format!("{prefix}.v."));
    for (k, t) in arrays {
        if let Some(name) = k.strip_prefix(&pm) {
            opt.m.insert(name.to_string(), t.clone());
        } else if let Some(name) = k.strip_prefix(&pv) {
            opt.v.insert(name.to_string(), t.clone());
        }
    }
    opt
}

fn finite_or_dump(stats: &StepStats) -> Result<()> {
    if stats.components().iter().all(|(_, v)| v.is_finite()) {
        return Ok(());
    }
    let bad: Vec<_> = stats.components().iter().filter(|(_, v)| !v.is_finite()).map(|(k, _)| *k).collect();
    Err(Error::NonFinite(format!("loss components {bad:?} at {}", stats.line())))
}

pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub disc: Discriminators<f32>,
    pub segnet: Option<SegNet<f32>>,
    pub features: RandomFeatures<f32>,
    pub g_opt: Adam<f32>,
    pub d_opt: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub history: Vec<EpochSummary>,
    /// Every step of this process, in order.
    pub steps: Vec<StepStats>,
}

impl Trainer {
    /// Fresh models from the config seed, without a segmentation net.
    pub fn build(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(&config.generator_config(), &config.ablation, &mut rng_from_seed(config.seed))?;
        let mut rng = rng_from_seed(sample_seed(config.seed, STREAM_DISC));
        let cin = config.generator.bands + 3;
        let disc = Discriminators {
            patch: PatchGan::new(cin, config.discriminator.patch_width, &mut rng),
            stats: SPatchGan::new(3, &config.discriminator, &mut rng),
        };
        Ok(Self {
            config,
            generator,
            disc,
            segnet: None,
            features: RandomFeatures::default(),
            g_opt: Adam::new(ADAM_BETAS.0, ADAM_BETAS.1, ADAM_EPS),
            d_opt: Adam::new(ADAM_BETAS.0, ADAM_BETAS.1, ADAM_EPS),
            epoch: 0,
            step: 0,
            history: Vec::new(),
            steps: Vec::new(),
        })
    }

    /// Fresh models, with the segmentation net pretrained on `train` when the
    /// segmentation term is used at all.
    pub fn new(config: TrainConfig, train: &[SceneSample]) -> Result<Self> {
        let mut t = Self::build(config)?;
        if t.config.seg_active() {
            let classes = t.config.dataset.classes;
            let seg = match &t.config.segnet {
                Some(path) => {
                    let seg = load_segnet(path)?;
                    if seg.classes != classes {
                        return Err(Error::Config(format!(
                            "segmentation net predicts {} classes, the dataset has {classes}",
                            seg.classes
                        )));
                    }
                    seg
                }
                None => pretrain_segnet(train, classes, &t.config.seg, sample_seed(t.config.seed, STREAM_SEG))?.0,
            };
            t.segnet = Some(seg);
        }
        Ok(t)
    }

    /// Segmentation weight at `epoch`, zero when the term is switched off.
    pub fn lambda_seg(&self, epoch: usize) -> f64 {
        if self.config.ablation.use_seg_loss {
            self.config.loss.lambda_seg(epoch)
        } else {
            0.0
        }
    }

    /// Generator objective on `g`, returning the total and its logged parts.
    fn generator_objective<'g>(
        &self,
        g: &'g Graph<f32>,
        cond: Var<'g, f32>,
        fake: Var<'g, f32>,
        sample: &SceneSample,
        epoch: usize,
    ) -> Result<(Var<'g, f32>, StepStats)> {
        let w = &self.config.loss;
        let adv = generator_adv_loss(g, &self.disc.scores(g, cond, fake)?);
        let terms = content_terms(g, fake, g.constant(rgb_tensor(&sample.rgb)), &self.features)?;
        let content = terms.weighted(&w.terms);
        let mut total = adv.mul_scalar(w.cgan as f32).add(content.mul_scalar(w.content as f32));
        let lam = self.lambda_seg(epoch);
        let mut seg_value = 0.0;
        if lam > 0.0 {
            let seg = self.segnet.as_ref().ok_or_else(|| Error::Config("segmentation term needs a segmentation net".into()))?;
            let s = seg_loss(g, seg, fake, &sample.mask)?;
            seg_value = s.value().item() as f64;
            total = total.add(s.mul_scalar(lam as f32));
        }
        let v = |x: Var<'g, f32>| x.value().item() as f64;
        let [pix, per, edge, fft, ssim, tv] = terms.values().map(|(_, x)| x);
        let stats = StepStats {
            epoch,
            adv: v(adv),
            pix,
            per,
            edge,
            fft,
            ssim,
            tv,
            content: v(content),
            seg: seg_value,
            total: v(total),
            ..StepStats::default()
        };
        Ok((total, stats))
    }

    /// Generator objective at the current parameters, without updating anything.
    pub fn generator_loss(&self, sample: &SceneSample, epoch: usize) -> Result<f64> {
        let g = Graph::no_grad();
        let cond = g.constant(cube_tensor(&sample.cube));
        let fake = self.generator.forward(&g, cond)?;
        Ok(self.generator_objective(&g, cond, fake, sample, epoch)?.1.total)
    }

    /// One discriminator update on the real pair and the detached fake, then
    /// one generator update against the updated discriminators.
    pub fn train_step(&mut self, sample: &SceneSample, epoch: usize, lr: f64) -> Result<StepStats> {
        let cube = cube_tensor(&sample.cube);
        let gg = Graph::new();
        let cond = gg.constant(cube.clone());
        let fake = self.generator.forward(&gg, cond)?;

        let d_loss = {
            let gd = Graph::new();
            let c = gd.constant(cube);
            let real = self.disc.scores(&gd, c, gd.constant(rgb_tensor(&sample.rgb)))?;
            let detached = self.disc.scores(&gd, c, gd.constant((*fake.value()).clone()))?;
            let loss = discriminator_loss(&gd, &real, &detached);
            let value = loss.value().item() as f64;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("discriminator loss {value} at epoch {epoch} step {}", self.step)));
            }
            let grads = gd.backward(loss);
            self.d_opt.update(&mut self.disc, &grads, lr);
            value
        };

        set_trainable(&mut self.disc, false);
        let objective = self.generator_objective(&gg, cond, fake, sample, epoch);
        set_trainable(&mut self.disc, true);
        let (total, mut stats) = objective?;
        stats.step = self.step;
        stats.lr = lr;
        stats.d = d_loss;
        finite_or_dump(&stats)?;
        let grads = gg.backward(total);
        self.g_opt.update(&mut self.generator, &grads, lr);
        self.step += 1;
        Ok(stats)
    }

    /// Sample order of an epoch.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let seed = sample_seed(sample_seed(self.config.seed, STREAM_ORDER), epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    /// Trains the next epoch and validates on `val` when it is non-empty.
    pub fn run_epoch(&mut self, train: &[SceneSample], val: &[SceneSample], log: &mut dyn Write) -> Result<EpochSummary> {
        let epoch = self.epoch;
        let lr = self.config.lr_schedule(epoch)?;
        let crop_stream = sample_seed(sample_seed(self.config.seed, STREAM_CROP), epoch as u64);
        let mut sums = [0.0; 11];
        let order = self.epoch_order(epoch, train.len());
        for &i in &order {
            let started = Instant::now();
            let sample = random_crop_pair(&train[i], self.config.crop, sample_seed(crop_stream, i as u64))?;
            let stats = self.train_step(&sample, epoch, lr)?;
            for (acc, (_, v)) in sums.iter_mut().zip(stats.components()) {
                *acc += v;
            }
            writeln!(log, "{} time={:.4}", stats.line(), started.elapsed().as_secs_f64())
                .map_err(|e| Error::io("training log", e))?;
            self.steps.push(stats);
        }
        let n = order.len() as f64;
        let m = sums.map(|s| s / n);
        let mean = StepStats {
            epoch,
            step: self.step,
            lr,
            d: m[0],
            adv: m[1],
            pix: m[2],
            per: m[3],
            edge: m[4],
            fft: m[5],
            ssim: m[6],
            tv: m[7],
            content: m[8],
            seg: m[9],
            total: m[10],
        };
        let val = if val.is_empty() {
            None
        } else {
            Some(evaluate(&self.generator, val)?.mean())
        };
        let summary = EpochSummary { epoch, lr, mean, val };
        writeln!(log, "summary {}", summary.line()).map_err(|e| Error::io("training log", e))?;
        log.flush().map_err(|e| Error::io("training log", e))?;
        self.epoch += 1;
        self.history.push(summary.clone());
        Ok(summary)
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.config.out_dir.join(format!("epoch_{epoch:04}.ckpt"))
    }

    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.config.out_dir.join("final.ckpt")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = Meta {
            config: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            g_opt_step: self.g_opt.step,
            d_opt_step: self.d_opt.step,
            has_segnet: self.segnet.is_some(),
            history: self.history.clone(),
        };
        let mut arrays = Arrays::new();
        store_module(&self.generator, "generator", &mut arrays);
        store_module(&self.disc, "disc", &mut arrays);
        if let Some(seg) = &self.segnet {
            store_module(seg, "segnet", &mut arrays);
        }
        store_adam(&self.g_opt, "g_opt", &mut arrays);
        store_adam(&self.d_opt, "d_opt", &mut arrays);
        let meta = serde_json::to_value(meta).expect("checkpoint metadata serialises");
        write_checkpoint(path, meta, &arrays)
    }

    /// Restores the full training state saved by [`Trainer::save`].
    pub fn resume(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, arrays) = read_checkpoint(path)?;
        let meta: Meta = serde_json::from_value(meta).map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut t = Self::build(meta.config)?;
        load_module(&mut t.generator, "generator", &arrays)?;
        load_module(&mut t.disc, "disc", &arrays)?;
        if meta.has_segnet {
            let mut seg = SegNet::new(t.config.dataset.classes, t.config.seg.width, &mut rng_from_seed(0));
            load_module(&mut seg, "segnet", &arrays)?;
            seg.freeze();
            t.segnet = Some(seg);
        }
        t.g_opt = load_adam(meta.g_opt_step, "g_opt", &arrays);
        t.d_opt = load_adam(meta.d_opt_step, "d_opt", &arrays);
        t.epoch = meta.epoch;
        t.step = meta.step;
        t.history = meta.history;
        Ok(t)
    }

    /// Trains the remaining epochs, writing periodic checkpoints, the final
    /// checkpoint, `train.log` and (with a validation split) `report.txt` to
    /// the output directory. Returns the final validation report.
    pub fn fit(
        &mut self,
        train: &[SceneSample],
        val: &[SceneSample],
        progress: &mut dyn FnMut(&EpochSummary),
    ) -> Result<Option<MetricReport>> {
        let dir = self.config.out_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let log_path = dir.join("train.log");
        let file = File::options().create(true).append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let mut log = BufWriter::new(file);
        while self.epoch < self.config.epochs {
            let summary = self.run_epoch(train, val, &mut log)?;
            progress(&summary);
            let every = self.config.checkpoint_every;
            if every > 0 && self.epoch % every == 0 && self.epoch < self.config.epochs {
                self.save(self.checkpoint_path(self.epoch))?;
            }
        }
        self.save(self.final_checkpoint_path())?;
        if val.is_empty() {
            return Ok(None);
        }
        let report = evaluate(&self.generator, val)?;
        let path = dir.join("report.txt");
        fs::write(&path, report.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(Some(report))
    }
}

/// Loads the dataset, builds (or resumes) a trainer and runs it to the end.
pub fn train(
    config: TrainConfig,
    resume: Option<&Path>,
    progress: &mut dyn FnMut(&EpochSummary),
) -> Result<(Trainer, Option<MetricReport>)> {
    let (train, val) = load_splits(&config.dataset)?;
    let mut trainer = match resume {
        Some(path) => Trainer::resume(path)?,
        None => Trainer::new(config, &train)?,
    };
    let report = trainer.fit(&train, &val, progress)?;
    Ok((trainer, report))
}

#[derive(Serialize, Deserialize)]
struct SegMeta {
    classes: usize,
    width: usize,
    accuracy: Vec<f64>,
}

/// Pretrains a segmentation net on the config's training split.
pub fn pretrain_seg(config: &TrainConfig) -> Result<(SegNet<f32>, Vec<f64>)> {
    config.validate()?;
    let (train, _) = load_splits(&config.dataset)?;
    pretrain_segnet(&train, config.dataset.classes, &config.seg, sample_seed(config.seed, STREAM_SEG))
}

pub fn save_segnet(seg: &SegNet<f32>, width: usize, accuracy: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let meta = SegMeta {
        classes: seg.classes,
        width,
        accuracy: accuracy.to_vec(),
    };
    let mut arrays = Arrays::new();
    store_module(seg, "segnet", &mut arrays);
    write_checkpoint(path, serde_json::to_value(meta).expect("metadata serialises"), &arrays)
}

/// Loads a frozen segmentation net written by [`save_segnet`].
pub fn load_segnet(path: impl AsRef<Path>) -> Result<SegNet<f32>> {
    let (meta, arrays) = read_checkpoint(path)?;
    let meta: SegMeta = serde_json::from_value(meta).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let mut seg = SegNet::new(meta.classes, meta.width, &mut rng_from_seed(0));
    load_module(&mut seg, "segnet", &arrays)?;
    seg.freeze();
    Ok(seg)
}

/// Generator and configuration stored in a checkpoint.
pub fn load_generator(path: impl AsRef<Path>) -> Result<(TrainConfig, Generator<f32>)> {
    let (meta, arrays) = read_checkpoint(path)?;
    let meta: Meta = serde_json::from_value(meta).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let mut generator = Generator::new(&meta.config.generator_config(), &meta.config.ablation, &mut rng_from_seed(0))?;
    load_module(&mut generator, "generator", &arrays)?;
    Ok((meta.config, generator))
}

/// Colourises a cube file at full resolution and writes a PPM.
pub fn infer(checkpoint: impl AsRef<Path>, cube_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<RgbImage> {
    let (_, generator) = load_generator(checkpoint)?;
    let cube = normalize_cube(&read_cube(cube_path)?);
    let img = colorize(&generator, &cube)?;
    write_ppm(&img, out_path)?;
    Ok(img)
}
