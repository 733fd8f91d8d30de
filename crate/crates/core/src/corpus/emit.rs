//! Corpus generation to disk and loading back.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{generate_scene, SceneConfig};
use super::triplet::{measure_displacement, render_triplet, MotionPreset, PoseDelta, TripletSample};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::metrics::{segment_color_regions, SegmentationParams};
use crate::raster::RgbImage;
use crate::rng::{derive_seed, stream, tags};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CONFIG_FILE: &str = "corpus.cfg";

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
    pub size: usize,
    pub min_primitives: usize,
    pub max_primitives: usize,
    pub motion: MotionPreset,
    pub anti_alias: bool,
    pub stroke_width: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            count: 100,
            size: 64,
            min_primitives: 3,
            max_primitives: 6,
            motion: MotionPreset::Small,
            anti_alias: false,
            stroke_width: 1.0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_primitives == 0 || self.min_primitives > self.max_primitives {
            return Err(Error::Config(format!(
                "primitive range {}..={} is empty",
                self.min_primitives, self.max_primitives
            )));
        }
        if self.size < 8 {
            return Err(Error::Config(format!("canvas size {} is below 8", self.size)));
        }
        if !(self.stroke_width >= 1.0 && self.stroke_width.is_finite()) {
            return Err(Error::Config(format!("stroke width {} is below 1", self.stroke_width)));
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        kv.take_into("seed", &mut c.seed)?;
        kv.take_into("count", &mut c.count)?;
        kv.take_into("size", &mut c.size)?;
        kv.take_into("min_primitives", &mut c.min_primitives)?;
        kv.take_into("max_primitives", &mut c.max_primitives)?;
        kv.take_into("motion", &mut c.motion)?;
        kv.take_into("anti_alias", &mut c.anti_alias)?;
        kv.take_into("stroke_width", &mut c.stroke_width)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "count = {}", self.count);
        let _ = writeln!(s, "size = {}", self.size);
        let _ = writeln!(s, "min_primitives = {}", self.min_primitives);
        let _ = writeln!(s, "max_primitives = {}", self.max_primitives);
        let _ = writeln!(s, "motion = {}", self.motion);
        let _ = writeln!(s, "anti_alias = {}", self.anti_alias);
        let _ = writeln!(s, "stroke_width = {}", self.stroke_width);
        s
    }

    fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            size: self.size,
            stroke_width: self.stroke_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: usize,
    pub seed: u64,
    pub n_primitives: usize,
    pub target: String,
    pub line: String,
    pub reference: String,
    pub displacement: f64,
    pub measured_displacement: f64,
    pub target_regions: usize,
}

/// Generates sample `index` in memory. Returns the sample seed, primitive count and triplet.
pub fn generate_triplet(config: &CorpusConfig, index: usize) -> Result<(u64, usize, TripletSample)> {
    let seed = derive_seed(config.seed, tags::SCENE, index as u64);
    let n = stream(seed, tags::SCENE, 0).random_range(config.min_primitives..=config.max_primitives);
    let scene = generate_scene(seed, n, &config.scene_config())?;
    let delta = PoseDelta::random(seed, &scene, config.motion);
    Ok((seed, n, render_triplet(&scene, &delta, config.anti_alias)?))
}

fn emit_one(config: &CorpusConfig, index: usize, out: &Path) -> Result<ManifestRow> {
    let (seed, n_primitives, t) = generate_triplet(config, index)?;
    let row = ManifestRow {
        index,
        seed,
        n_primitives,
        target: format!("{index:05}_target.png"),
        line: format!("{index:05}_line.png"),
        reference: format!("{index:05}_ref.png"),
        displacement: t.displacement,
        measured_displacement: measure_displacement(&t.target, &t.reference)?,
        target_regions: segment_color_regions(&t.target, &t.lineart, &SegmentationParams::default())?.region_count(),
    };
    t.target.save(out.join(&row.target))?;
    t.lineart.save(out.join(&row.line))?;
    t.reference.save(out.join(&row.reference))?;
    Ok(row)
}

/// Writes `config.count` triplets, `manifest.csv` and `corpus.cfg` under `out`.
/// Samples are produced on up to `jobs` threads; the manifest is in index order.
pub fn emit_corpus(config: &CorpusConfig, out: &Path, jobs: usize) -> Result<Vec<ManifestRow>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rows = pool.install(|| {
        (0..config.count)
            .into_par_iter()
            .map(|i| emit_one(config, i, out))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut w = csv::Writer::from_path(out.join(MANIFEST_FILE))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    fs::write(out.join(CONFIG_FILE), config.to_kv_text())?;
    Ok(rows)
}

/// A corpus directory with its parsed manifest.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub rows: Vec<ManifestRow>,
}

#[derive(Clone, Debug)]
pub struct LoadedTriplet {
    pub target: RgbImage,
    pub line: RgbImage,
    pub reference: RgbImage,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!("no {MANIFEST_FILE} in {}", dir.display())));
        }
        let rows = csv::Reader::from_path(path)?
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
        Ok(Self { dir, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn load(&self, i: usize) -> Result<LoadedTriplet> {
        let row = &self.rows[i];
        Ok(LoadedTriplet {
            target: RgbImage::load(self.dir.join(&row.target))?,
            line: RgbImage::load(self.dir.join(&row.line))?,
            reference: RgbImage::load(self.dir.join(&row.reference))?,
        })
    }

    pub fn load_all(&self) -> Result<Vec<LoadedTriplet>> {
        (0..self.len()).map(|i| self.load(i)).collect()
    }
}
