//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsicolor::data_io::normalize_cube;
use hsicolor::training::{self, evaluate, infer, load_generator, pretrain_seg, read_dataset, save_segnet, synth_series, write_dataset, TrainConfig};
use hsicolor::Result;

#[derive(Parser)]
#[command(name = "hsicolor", version, about = "Infrared hyperspectral to RGB colorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired dataset (cube, RGB and mask per scene).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Index of the first scene in the seeded series.
        #[arg(long, default_value_t = 0)]
        first: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
    },
    /// Pretrain and save the segmentation net used by the segmentation loss.
    PretrainSeg {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train from a config, or continue from a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Colourise one cube at full resolution and write a PPM.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Report PSNR/SSIM/UIQI of a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { out, count, seed, first, size, bands, classes } => {
            let samples = synth_series(seed, first, count, size, bands, classes)?;
            write_dataset(&out, &samples)?;
            println!("wrote {count} scenes to {}", out.display());
        }
        Command::PretrainSeg { config, output } => {
            let cfg = TrainConfig::load(config)?;
            let (seg, acc) = pretrain_seg(&cfg)?;
            for (e, a) in acc.iter().enumerate() {
                println!("epoch={e} pixel_accuracy={a:.4}");
            }
            save_segnet(&seg, cfg.seg.width, &acc, &output)?;
        }
        Command::Train { config, resume } => {
            let cfg = match (&config, &resume) {
                (Some(path), _) => TrainConfig::load(path)?,
                (None, Some(_)) => TrainConfig::default(),
                (None, None) => {
                    return Err(hsicolor::Error::Config("train needs --config or --resume".into()));
                }
            };
            let (trainer, report) = training::train(cfg, resume.as_deref(), &mut |s| eprintln!("{}", s.line()))?;
            println!("checkpoint={}", trainer.final_checkpoint_path().display());
            if let Some(r) = report {
                print!("{}", r.to_text());
            }
        }
        Command::Infer { checkpoint, input, output } => {
            let img = infer(checkpoint, input, &output)?;
            println!("wrote {}x{} image to {}", img.width(), img.height(), output.display());
        }
        Command::Eval { checkpoint, data } => {
            let (cfg, generator) = load_generator(checkpoint)?;
            let mut samples = read_dataset(&data, cfg.dataset.classes)?;
            for s in &mut samples {
                s.cube = normalize_cube(&s.cube);
            }
            print!("{}", evaluate(&generator, &samples)?.to_text());
        }
        Command::Selftest => {
            let results = hsicolor::selftest::run();
            for r in &results {
                println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
