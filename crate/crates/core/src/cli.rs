//! Command-line front end. `main` only forwards to [`run`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::ablation::{run_ablation, AblationConfig, Arm};
use crate::corpus::{emit_corpus, Corpus, CorpusConfig, LoadedTriplet, MotionPreset};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::metrics::{evaluate_pair, segment_color_regions, PairMetrics, SegmentationParams, DEFAULT_DELTA_E, DEFAULT_LINE_THRESHOLD};
use crate::model::checkpoint::{load_model, load_trainer, save_trainer};
use crate::model::{
    decode_to_image, encode_from_image, parse_pool_kernel, sample, DitModel, EncodedTriplet, ModelConfig, TrainConfig, TrainPhase, Trainer,
};
use crate::raster::RgbImage;
use crate::rng::{derive_seed, tags};
use crate::schedule::{ScheduleKind, ScheduleSpec};
use crate::token_space::Branch;

pub const LOSS_FILE: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, Parser)]
#[command(name = "hierdit", version, about = "Toy hierarchical-attention DiT for line-art colorization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic triplet corpus.
    Gen(GenArgs),
    /// Pretrain a base model, then adapt it with LoRA.
    Train(TrainArgs),
    /// Colorize line art with a trained checkpoint.
    Sample(SampleArgs),
    /// Score generated images (PSNR, SSIM, MSE_CR).
    Eval(EvalArgs),
    /// Compare training strategies and weight schedules.
    Ablate(AblateArgs),
    /// Segment a ground-truth image into colour regions.
    SegmentRegions(SegmentArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Canvas side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub min_primitives: Option<usize>,
    #[arg(long)]
    pub max_primitives: Option<usize>,
    /// none | small | large
    #[arg(long)]
    pub motion: Option<MotionPreset>,
    #[arg(long)]
    pub anti_alias: bool,
    #[arg(long)]
    pub stroke_width: Option<f64>,
    /// key = value corpus config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Model flags shared by train, sample and ablate.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Token grid side.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Patch side in pixels.
    #[arg(long)]
    pub patch: Option<usize>,
    /// LoRA rank.
    #[arg(long)]
    pub rank: Option<usize>,
    /// cos | sin | cosinv | const
    #[arg(long)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub lambda_base: Option<f64>,
    /// `random` or a kernel size.
    #[arg(long)]
    pub pool_kernel: Option<String>,
}

impl ModelArgs {
    fn apply(&self, c: &mut ModelConfig) -> Result<()> {
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.d_model, self.d_model);
        set(&mut c.heads, self.heads);
        set(&mut c.depth, self.depth);
        set(&mut c.grid, self.grid);
        set(&mut c.patch, self.patch);
        set(&mut c.rank, self.rank);
        let kind = self.schedule.unwrap_or(c.schedule.kind);
        let base = self.lambda_base.unwrap_or(c.schedule.lambda_base);
        c.schedule = ScheduleSpec::new(kind, base, c.schedule.total_steps)?;
        if let Some(k) = &self.pool_kernel {
            c.pool_kernel = parse_pool_kernel(k)?;
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by `gen`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Schedule length T.
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// key = value model config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub pretrain_steps: u64,
    #[arg(long, default_value_t = 1000)]
    pub lora_steps: u64,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-3)]
    pub lora_lr: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub grad_accum: usize,
    /// Write a checkpoint every this many updates (0: final only).
    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: u64,
    /// Train on all but the last N corpus items.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Line-art image (single-image mode).
    #[arg(long, requires = "reference", conflicts_with = "corpus")]
    pub line: Option<PathBuf>,
    #[arg(long, requires = "line")]
    pub reference: Option<PathBuf>,
    /// Colorize corpus items instead; writes `NNNNN.png` per item.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Only the last N corpus items.
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Output PNG (single image) or directory (corpus).
    #[arg(long)]
    pub out: PathBuf,
    /// Euler substeps; defaults to the schedule length.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// key = value model config that must agree with the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Generated images.
    #[arg(long)]
    pub gen: PathBuf,
    /// Ground truth and line art from a corpus; generated files are `NNNNN.png`.
    #[arg(long, conflicts_with_all = ["gt", "line"])]
    pub corpus: Option<PathBuf>,
    /// Ground-truth directory with the same file names as `--gen`.
    #[arg(long, requires = "line")]
    pub gt: Option<PathBuf>,
    #[arg(long, requires = "gt")]
    pub line: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DELTA_E)]
    pub delta_e: f64,
    #[arg(long, default_value_t = DEFAULT_LINE_THRESHOLD)]
    pub line_threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory for `report.md`, `report.csv` and `ablation.cfg`.
    #[arg(long)]
    pub out: PathBuf,
    /// key = value ablation config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Comma-separated arms: nohier, const, cos, sin, cosinv.
    #[arg(long, value_delimiter = ',')]
    pub arms: Option<Vec<Arm>>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Schedule length T, also the sampler's step count.
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long)]
    pub pretrain_steps: Option<u64>,
    #[arg(long)]
    pub lora_steps: Option<u64>,
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub line: PathBuf,
    /// Directory for `regions.png` and `regions.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA_E)]
    pub delta_e: f64,
    #[arg(long, default_value_t = DEFAULT_LINE_THRESHOLD)]
    pub line_threshold: f64,
    /// Seed of the visualization palette.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::SegmentRegions(a) => cmd_segment(&a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let mut c = match &a.config {
        Some(p) => CorpusConfig::from_kv_text(&read_text(p)?)?,
        None => CorpusConfig::default(),
    };
    c.seed = a.seed.unwrap_or(c.seed);
    c.count = a.count.unwrap_or(c.count);
    c.size = a.size.unwrap_or(c.size);
    c.min_primitives = a.min_primitives.unwrap_or(c.min_primitives);
    c.max_primitives = a.max_primitives.unwrap_or(c.max_primitives);
    c.motion = a.motion.unwrap_or(c.motion);
    c.anti_alias |= a.anti_alias;
    c.stroke_width = a.stroke_width.unwrap_or(c.stroke_width);
    let rows = emit_corpus(&c, &a.out, a.jobs)?;
    eprintln!("wrote {} triplets to {}", rows.len(), a.out.display());
    Ok(())
}

fn model_config(args: &ModelArgs, steps: Option<u32>, seed: u64, config: Option<&Path>) -> Result<ModelConfig> {
    let mut c = match config {
        Some(p) => ModelConfig::from_kv_text(&read_text(p)?)?,
        None => ModelConfig::default(),
    };
    if let Some(t) = steps {
        c.schedule = ScheduleSpec::new(c.schedule.kind, c.schedule.lambda_base, t)?;
    }
    c.seed = seed;
    args.apply(&mut c)?;
    c.validate()?;
    Ok(c)
}

/// Errors when `requested` disagrees with `stored` on anything that shapes tensors.
fn check_architecture(stored: &ModelConfig, requested: &ModelConfig) -> Result<()> {
    let pairs = [
        ("d_model", stored.d_model, requested.d_model),
        ("heads", stored.heads, requested.heads),
        ("depth", stored.depth, requested.depth),
        ("grid", stored.grid, requested.grid),
        ("patch", stored.patch, requested.patch),
        ("ffn_mult", stored.ffn_mult, requested.ffn_mult),
        ("rank", stored.rank, requested.rank),
    ];
    for (name, s, r) in pairs {
        if s != r {
            return Err(Error::Config(format!(
                "checkpoint/config mismatch: {name} is {s} in the checkpoint, {r} requested"
            )));
        }
    }
    Ok(())
}

fn encode_corpus(items: &[LoadedTriplet], model: &DitModel) -> Result<Vec<EncodedTriplet>> {
    items
        .iter()
        .map(|t| EncodedTriplet::encode(&t.target, &t.line, &t.reference, model))
        .collect()
}

/// Seed of the adapter phase that follows pretraining with `seed`.
pub fn lora_seed(seed: u64) -> u64 {
    derive_seed(seed, tags::TRAIN_ORDER, 1)
}

struct LossRow {
    global: u64,
    line: String,
}

fn read_loss_log(path: &Path) -> Result<Vec<LossRow>> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let global = rec
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("malformed {}", path.display())))?;
        rows.push(LossRow {
            global,
            line: rec.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rows)
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let corpus = Corpus::open(&a.corpus)?;
    if corpus.len() <= a.holdout {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} cannot hold out {}",
            corpus.len(),
            a.holdout
        )));
    }
    let requested = model_config(&a.model, a.steps, a.seed, a.config.as_deref())?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let t = load_trainer(p)?;
            check_architecture(&t.model.config, &requested)?;
            t
        }
        None => {
            let tc = TrainConfig {
                lr: a.lr,
                batch_size: a.batch_size,
                grad_accum: a.grad_accum,
                seed: a.seed,
            };
            Trainer::new(DitModel::new(requested)?, TrainPhase::Pretrain, tc)?
        }
    };
    let size = trainer.model.config.image_size();
    let items = corpus.load_all()?;
    let items = &items[..items.len() - a.holdout];
    if let Some(t) = items.iter().find(|t| t.target.dims() != (size, size)) {
        return Err(Error::DimensionMismatch(format!(
            "corpus images are {:?}, model expects {size}x{size}",
            t.target.dims()
        )));
    }
    let data = encode_corpus(items, &trainer.model)?;

    fs::create_dir_all(&a.out)?;
    let global = |t: &Trainer| match t.phase {
        TrainPhase::Pretrain => t.step,
        TrainPhase::Lora => a.pretrain_steps + t.step,
    };
    let log_path = a.out.join(LOSS_FILE);
    let start = global(&trainer);
    let mut log = String::from("phase,step,global_step,loss\n");
    for row in read_loss_log(&log_path)?
        .into_iter()
        .filter(|r| a.resume.is_some() && r.global <= start)
    {
        log.push_str(&row.line);
        log.push('\n');
    }

    loop {
        match trainer.phase {
            TrainPhase::Pretrain if trainer.step >= a.pretrain_steps => {
                let tc = TrainConfig {
                    lr: a.lora_lr,
                    batch_size: a.batch_size,
                    grad_accum: a.grad_accum,
                    seed: lora_seed(trainer.config.seed),
                };
                trainer = trainer.into_lora(tc)?;
                continue;
            }
            TrainPhase::Lora if trainer.step >= a.lora_steps => break,
            _ => {}
        }
        let phase = trainer.phase;
        let loss = trainer.step_on(&data)?;
        let g = global(&trainer);
        log.push_str(&format!("{phase},{},{g},{loss:?}\n", trainer.step));
        if a.checkpoint_every > 0 && g % a.checkpoint_every == 0 {
            save_trainer(a.out.join(format!("step_{g:06}.ckpt")), &trainer)?;
            fs::write(&log_path, &log)?;
        }
    }
    save_trainer(a.out.join(FINAL_CHECKPOINT), &trainer)?;
    fs::write(&log_path, &log)?;
    eprintln!(
        "trained to step {}; checkpoint {}",
        global(&trainer),
        a.out.join(FINAL_CHECKPOINT).display()
    );
    Ok(())
}

fn colorize(model: &DitModel, line: &RgbImage, reference: &RgbImage, steps: usize, seed: u64) -> Result<RgbImage> {
    let c = &model.config;
    let size = c.image_size();
    for img in [line, reference] {
        if img.dims() != (size, size) {
            return Err(Error::DimensionMismatch(format!(
                "input is {:?}, model expects {size}x{size}",
                img.dims()
            )));
        }
    }
    let l = encode_from_image(line, c.patch, c.d_model, Branch::LineArt)?;
    let r = encode_from_image(reference, c.patch, c.d_model, Branch::Reference)?;
    decode_to_image(&sample(model, &l, &r, steps, seed)?, c.patch)
}

pub fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let mut model = load_model(&a.checkpoint)?;
    let mut requested = match &a.config {
        Some(p) => ModelConfig::from_kv_text(&read_text(p)?)?,
        None => model.config.clone(),
    };
    a.model.apply(&mut requested)?;
    check_architecture(&model.config, &requested)?;
    model.config.schedule = requested.schedule;
    model.config.pool_kernel = requested.pool_kernel;
    model.config.validate()?;
    let steps = a.steps.unwrap_or(model.config.schedule.total_steps as usize);

    match (&a.line, &a.reference, &a.corpus) {
        (Some(l), Some(r), None) => {
            let img = colorize(&model, &RgbImage::load(l)?, &RgbImage::load(r)?, steps, a.seed)?;
            if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            img.save(&a.out)
        }
        (None, None, Some(dir)) => {
            let corpus = Corpus::open(dir)?;
            let first = corpus.len().saturating_sub(a.holdout.unwrap_or(corpus.len()));
            fs::create_dir_all(&a.out)?;
            pool(a.jobs)?.install(|| {
                (first..corpus.len()).into_par_iter().try_for_each(|i| {
                    let t = corpus.load(i)?;
                    let seed = derive_seed(a.seed, tags::SAMPLE_NOISE, i as u64);
                    colorize(&model, &t.line, &t.reference, steps, seed)?.save(a.out.join(format!("{i:05}.png")))
                })
            })?;
            eprintln!("wrote {} images to {}", corpus.len() - first, a.out.display());
            Ok(())
        }
        _ => Err(Error::InvalidArgument("give either --line and --reference or --corpus".into())),
    }
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::InvalidArgument(format!("{}: {e}", dir.display())))? {
        let name = e?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// `(name, gen, gt, line)` paths for every generated image.
fn eval_pairs(a: &EvalArgs) -> Result<Vec<(String, PathBuf, PathBuf, PathBuf)>> {
    let names = png_names(&a.gen)?;
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!("no PNG files in {}", a.gen.display())));
    }
    let unpaired = |n: &str| Error::InvalidArgument(format!("unpaired file {n}"));
    match (&a.corpus, &a.gt, &a.line) {
        (Some(dir), None, None) => {
            let corpus = Corpus::open(dir)?;
            names
                .into_iter()
                .map(|n| {
                    let idx: usize = n.trim_end_matches(".png").parse().map_err(|_| unpaired(&n))?;
                    let row = corpus.rows.iter().find(|r| r.index == idx).ok_or_else(|| unpaired(&n))?;
                    Ok((n.clone(), a.gen.join(&n), dir.join(&row.target), dir.join(&row.line)))
                })
                .collect()
        }
        (None, Some(gt), Some(line)) => names
            .into_iter()
            .map(|n| {
                let (g, l) = (gt.join(&n), line.join(&n));
                if !g.is_file() || !l.is_file() {
                    return Err(unpaired(&n));
                }
                Ok((n.clone(), a.gen.join(&n), g, l))
            })
            .collect(),
        _ => Err(Error::InvalidArgument("give either --corpus or both --gt and --line".into())),
    }
}

/// Per-image CSV `name,psnr,ssim,mse_cr` followed by a `mean` row.
pub fn metrics_csv(rows: &[(String, PairMetrics)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "psnr", "ssim", "mse_cr"])?;
    let fmt = |m: &PairMetrics| [format!("{:.6}", m.psnr), format!("{:.6}", m.ssim), format!("{:.8}", m.mse_cr)];
    for (name, m) in rows {
        let [p, s, c] = fmt(m);
        w.write_record([name.as_str(), &p, &s, &c])?;
    }
    let metrics: Vec<PairMetrics> = rows.iter().map(|(_, m)| *m).collect();
    if let Some(mean) = PairMetrics::mean(&metrics) {
        let [p, s, c] = fmt(&mean);
        w.write_record(["mean", &p, &s, &c])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let params = SegmentationParams {
        delta_e_threshold: a.delta_e,
        line_threshold: a.line_threshold,
        ..SegmentationParams::default()
    };
    let pairs = eval_pairs(a)?;
    let rows = pool(a.jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|(name, gen, gt, line)| {
                let m = evaluate_pair(&RgbImage::load(gen)?, &RgbImage::load(gt)?, &RgbImage::load(line)?, &params)?;
                Ok((name.clone(), m))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let text = metrics_csv(&rows)?;
    match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn ablation_config(a: &AblateArgs) -> Result<AblationConfig> {
    let mut c = AblationConfig::default();
    if let Some(p) = &a.config {
        let mut kv = KeyValues::parse(&read_text(p)?)?;
        c.apply_kv(&mut kv)?;
        kv.finish()?;
    }
    a.model.apply(&mut c.model)?;
    c.lambda_base = c.model.schedule.lambda_base;
    if let Some(t) = a.steps {
        c.model.schedule = ScheduleSpec::new(c.model.schedule.kind, c.lambda_base, t)?;
        c.sample_steps = t as usize;
    }
    if let Some(s) = &a.seed {
        c.seeds = s.clone();
    }
    if let Some(arms) = &a.arms {
        c.arms = arms.clone();
    }
    c.pretrain_steps = a.pretrain_steps.unwrap_or(c.pretrain_steps);
    c.lora_steps = a.lora_steps.unwrap_or(c.lora_steps);
    c.holdout = a.holdout.unwrap_or(c.holdout);
    c.validate()?;
    Ok(c)
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = ablation_config(a)?;
    let items = Corpus::open(&a.corpus)?.load_all()?;
    let report = pool(a.jobs)?.install(|| run_ablation(&cfg, &items, &mut |s| eprintln!("{s}")))?;
    fs::create_dir_all(&a.out)?;
    let text = report.render();
    fs::write(a.out.join("report.md"), &text)?;
    fs::write(a.out.join("report.csv"), report.to_csv()?)?;
    fs::write(a.out.join("ablation.cfg"), cfg.to_kv_text())?;
    print!("{text}");
    Ok(())
}

pub fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let gt = RgbImage::load(&a.gt)?;
    let line = RgbImage::load(&a.line)?;
    let params = SegmentationParams {
        delta_e_threshold: a.delta_e,
        line_threshold: a.line_threshold,
        ..SegmentationParams::default()
    };
    let map = segment_color_regions(&gt, &line, &params)?;
    fs::create_dir_all(&a.out)?;
    map.visualize(a.seed).save(a.out.join("regions.png"))?;
    let mut w = csv::Writer::from_path(a.out.join("regions.csv"))?;
    for row in map.table(&gt) {
        w.serialize(row)?;
    }
    w.flush()?;
    eprintln!("{} regions", map.region_count());
    Ok(())
}
