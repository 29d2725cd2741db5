use std::fs;
use std::path::Path;

use super::DatasetSpec;
use crate::data_io::{normalize_cube, read_cube, read_pgm, read_ppm, sample_seed, synth_scene, write_cube, write_pgm, write_ppm, SceneSample};
use crate::error::{ensure, Error, Result};

pub const CUBE_EXT: &str = "cube";

/// Synthetic scenes `first..first + count` of a seeded series.
pub fn synth_series(seed: u64, first: usize, count: usize, size: usize, bands: usize, classes: usize) -> Result<Vec<SceneSample>> {
    (first..first + count)
        .map(|i| synth_scene(sample_seed(seed, i as u64), size, size, bands, classes))
        .collect()
}

/// Writes `NNNNN.cube`, `NNNNN.ppm` and `NNNNN.pgm` per sample.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[SceneSample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, s) in samples.iter().enumerate() {
        write_cube(&s.cube, dir.join(format!("{i:05}.{CUBE_EXT}")))?;
        write_ppm(&s.rgb, dir.join(format!("{i:05}.ppm")))?;
        write_pgm(&s.mask, dir.join(format!("{i:05}.pgm")))?;
    }
    Ok(())
}

/// Reads every cube in `dir` (sorted by name) with its `.ppm` and `.pgm`
/// companions.
pub fn read_dataset(dir: impl AsRef<Path>, classes: usize) -> Result<Vec<SceneSample>> {
    let dir = dir.as_ref();
    let mut cubes: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == CUBE_EXT))
        .collect();
    cubes.sort();
    let mut out = Vec::with_capacity(cubes.len());
    for (i, path) in cubes.iter().enumerate() {
        let cube = read_cube(path)?;
        let rgb = read_ppm(path.with_extension("ppm"))?;
        let mask = read_pgm(path.with_extension("pgm"), classes)?;
        ensure!(
            (rgb.height(), rgb.width(), mask.height(), mask.width()) == (cube.height(), cube.width(), cube.height(), cube.width()),
            "{}: cube, image and mask sizes differ",
            path.display()
        );
        out.push(SceneSample { cube, rgb, mask, seed: i as u64 });
    }
    Ok(out)
}

fn normalized(mut samples: Vec<SceneSample>) -> Vec<SceneSample> {
    for s in &mut samples {
        s.cube = normalize_cube(&s.cube);
    }
    samples
}

/// Training and validation splits with min-max normalised cubes.
pub fn load_splits(spec: &DatasetSpec) -> Result<(Vec<SceneSample>, Vec<SceneSample>)> {
    let (train, val) = match &spec.train_dir {
        Some(dir) => {
            let train = read_dataset(dir, spec.classes)?;
            let val = match &spec.val_dir {
                Some(v) => read_dataset(v, spec.classes)?,
                None => Vec::new(),
            };
            (train, val)
        }
        None => (
            synth_series(spec.seed, 0, spec.train_count, spec.size, spec.bands, spec.classes)?,
            synth_series(spec.seed, spec.train_count, spec.val_count, spec.size, spec.bands, spec.classes)?,
        ),
    };
    ensure!(!train.is_empty(), "training split is empty");
    Ok((normalized(train), normalized(val)))
}
