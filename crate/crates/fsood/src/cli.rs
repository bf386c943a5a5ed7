//! Command-line interface. Every JSON document written here carries the
//! tool version and the fully resolved configuration; nothing depends on the
//! clock or the environment, so equal inputs give byte-identical outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fsood_core::evaluation::{self, box_iou, GroundTruth, IouMode};
use fsood_core::fewshot::{self, EpisodeSpec, DEFAULT_BLUR_SIGMA, DEFAULT_STRIDE, DEFAULT_TILE};
use fsood_core::gradcheck::{self, GradcheckConfig};
use fsood_core::toytrain::{self, Compactness, TrainConfig};

use crate::dota;
use crate::error::{Error, Result};
use crate::formats::{self, BankCheckpoint, Envelope, EpisodeBody, MaskedImage, ReportBody, SplitFile};
use crate::raster;

#[derive(Debug, Parser)]
#[command(name = "fsood", version, about = "Few-shot oriented detection toolkit: geometry, contrastive loss, episodes and AP50")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// IoU of two boxes given as cx,cy,w,h,angle or xmin,ymin,xmax,ymax.
    Iou(IouArgs),
    /// Draw a K-shot episode from a DOTA-style dataset.
    SampleShots(SampleArgs),
    /// Blur out every unselected object of an episode.
    Mask(MaskArgs),
    /// VOC2007 11-point AP50 of detections against DOTA-style labels.
    Eval(EvalArgs),
    /// Train the projection encoder on the synthetic task.
    TrainToy(TrainArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Sliding-window crop origins for an image size.
    Tile(TileArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Obb,
    Hbb,
}

impl From<Mode> for IouMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Obb => IouMode::Obb,
            Mode::Hbb => IouMode::Hbb,
        }
    }
}

#[derive(Debug, Args)]
pub struct IouArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
    #[arg(long, value_enum, default_value_t = Mode::Obb)]
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Groups {
    All,
    Base,
    Novel,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Root holding labelTxt/ and optionally images/.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Split JSON; defaults to the DOTA split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Which category groups to sample.
    #[arg(long, value_enum, default_value_t = Groups::All)]
    pub groups: Groups,
    /// Take every instance of categories with fewer than k.
    #[arg(long)]
    pub take_all: bool,
    /// Manifest path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding <image>.png.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BLUR_SIGMA)]
    pub sigma: f64,
    /// Kernel radius in pixels; defaults to 2·sigma rounded up.
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON lines {image, category, box, score}.
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory of DOTA-style label files.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Obb)]
    pub iou_mode: Mode,
    #[arg(long, default_value_t = evaluation::DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table path.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML configuration; unspecified fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds both the synthetic data and the initialization.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long)]
    pub seed: u64,
    /// Negative control: perturb the analytic gradient.
    #[arg(long)]
    pub corrupt: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TileArgs {
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[arg(long, default_value_t = DEFAULT_TILE)]
    pub tile: u32,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    pub stride: u32,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Iou(a) => cmd_iou(&a, stdout),
        Command::SampleShots(a) => cmd_sample_shots(&a, stdout),
        Command::Mask(a) => cmd_mask(&a, stdout),
        Command::Eval(a) => cmd_eval(&a, stdout),
        Command::TrainToy(a) => cmd_train_toy(&a, stdout),
        Command::Gradcheck(a) => cmd_gradcheck(&a, stdout),
        Command::Tile(a) => cmd_tile(&a, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn emit_or_write(stdout: &mut dyn Write, out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => formats::write_file(p, text.as_bytes()),
        None => emit(stdout, text),
    }
}

fn parse_box_arg(flag: &str, s: &str) -> Result<evaluation::BoxGeom> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Usage(format!("--{flag}: expected comma-separated numbers, got {s:?}")))?;
    formats::parse_box(&values).map_err(|m| Error::Usage(format!("--{flag}: {m}")))
}

pub fn cmd_iou(args: &IouArgs, stdout: &mut dyn Write) -> Result<()> {
    let a = parse_box_arg("a", &args.a)?;
    let b = parse_box_arg("b", &args.b)?;
    emit(stdout, &format!("{:.6}\n", box_iou(&a, &b, args.mode.into())))
}

#[derive(Serialize)]
struct SampleConfig<'a> {
    dataset: &'a Path,
    split: SplitFile,
    k: usize,
    seed: u64,
    groups: Groups,
    take_all: bool,
}

pub fn cmd_sample_shots(args: &SampleArgs, stdout: &mut dyn Write) -> Result<()> {
    let (split_file, names, split) = formats::load_split(args.split.as_deref())?;
    let index = dota::load_dataset(&args.dataset, &names)?;
    let categories = match args.groups {
        Groups::All => split.base.union(&split.novel).copied().collect(),
        Groups::Base => split.base.clone(),
        Groups::Novel => split.novel.clone(),
    };
    let spec = EpisodeSpec {
        k: args.k,
        seed: args.seed,
        categories,
        take_all: args.take_all,
    };
    let selected = fewshot::sample_k_shots(&index, &spec).map_err(|e| match e {
        fewshot::FewShotError::InsufficientInstances { category, available, k } => Error::Infeasible(format!(
            "category {:?} has {available} instances, fewer than k = {k}",
            names[category as usize]
        )),
        other => other.into(),
    })?;
    let masked = fewshot::build_episode(&index, &selected)
        .into_iter()
        .map(|ep| MaskedImage {
            image: dota::image_name(index.image(ep.image).expect("episode image is indexed")).to_string(),
            regions: ep.masked.iter().map(|i| i.obb.into()).collect(),
        })
        .collect();
    let body = EpisodeBody {
        seed: args.seed,
        k: args.k,
        categories: spec.categories.iter().map(|&c| names[c as usize].clone()).collect(),
        selected: selected.into_iter().collect(),
        masked,
    };
    let resolved = SampleConfig {
        dataset: &args.dataset,
        split: SplitFile {
            categories: Some(names.clone()),
            base: Some(split.base.iter().map(|&c| names[c as usize].clone()).collect()),
            novel: split_file.novel.clone(),
        },
        k: args.k,
        seed: args.seed,
        groups: args.groups,
        take_all: args.take_all,
    };
    emit_or_write(stdout, args.out.as_deref(), &formats::to_json(&Envelope::new(resolved, body)))
}

#[derive(Serialize)]
struct MaskConfig<'a> {
    manifest: &'a Path,
    images: &'a Path,
    out: &'a Path,
    sigma: f64,
    radius: usize,
}

#[derive(Serialize)]
struct MaskedFile {
    image: String,
    regions: usize,
    changed_pixels: usize,
}

#[derive(Serialize)]
struct MaskBody {
    images: Vec<MaskedFile>,
}

pub fn cmd_mask(args: &MaskArgs, stdout: &mut dyn Write) -> Result<()> {
    let radius = args.radius.unwrap_or((2.0 * args.sigma).ceil().max(1.0) as usize);
    let manifest: Envelope<serde_json::Value, EpisodeBody> = formats::read_json(&args.manifest)?;
    let mut files = Vec::new();
    for m in &manifest.body.masked {
        let src = args.images.join(format!("{}.png", m.image));
        let img = raster::read_png(&src)?;
        let regions = m
            .regions
            .iter()
            .map(|r| fsood_core::OrientedBox::try_from(*r))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::schema(&args.manifest, 0, format!("image {}: {e}", m.image)))?;
        let out = fewshot::apply_gaussian_mask(&img, &regions, args.sigma, radius)?;
        let changed = img
            .data()
            .chunks(img.channels())
            .zip(out.data().chunks(out.channels()))
            .filter(|(a, b)| a != b)
            .count();
        raster::write_png(&args.out.join(format!("{}.png", m.image)), &out)?;
        files.push(MaskedFile {
            image: m.image.clone(),
            regions: regions.len(),
            changed_pixels: changed,
        });
    }
    let resolved = MaskConfig {
        manifest: &args.manifest,
        images: &args.images,
        out: &args.out,
        sigma: args.sigma,
        radius,
    };
    let json = formats::to_json(&Envelope::new(resolved, MaskBody { images: files }));
    formats::write_file(&args.out.join("mask_manifest.json"), json.as_bytes())?;
    emit(stdout, &json)
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    detections: &'a Path,
    labels: &'a Path,
    split: SplitFile,
    iou_mode: Mode,
    iou_threshold: f64,
}

pub fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Result<()> {
    let (_, names, split) = formats::load_split(args.split.as_deref())?;
    let files = dota::read_label_dir(&args.labels, &names)?;
    let mut images: BTreeMap<String, u32> = BTreeMap::new();
    let mut gts = Vec::new();
    for (id, f) in files.iter().enumerate() {
        images.insert(f.name.clone(), id as u32);
        gts.extend(f.objects.iter().map(|o| GroundTruth {
            image: id as u32,
            category: o.category,
            geom: o.obb.into(),
            difficult: o.difficult,
        }));
    }
    let dets = formats::read_detections(&args.detections, &names, &mut images)?;
    let report = evaluation::map_report(
        &dets,
        &gts,
        names.len() as u32,
        &split,
        args.iou_threshold,
        args.iou_mode.into(),
    )?;
    let body = ReportBody::new(&report, &names, &split);
    let resolved = EvalConfig {
        detections: &args.detections,
        labels: &args.labels,
        split: SplitFile {
            categories: Some(names.clone()),
            base: Some(split.base.iter().map(|&c| names[c as usize].clone()).collect()),
            novel: split.novel.iter().map(|&c| names[c as usize].clone()).collect(),
        },
        iou_mode: args.iou_mode,
        iou_threshold: args.iou_threshold,
    };
    let table = body.table(&names);
    emit_or_write(stdout, args.out.as_deref(), &formats::to_json(&Envelope::new(resolved, body)))?;
    match (&args.table, &args.out) {
        (Some(p), _) => formats::write_file(p, table.as_bytes()),
        (None, Some(_)) => emit(stdout, &table),
        (None, None) => Ok(()),
    }
}

#[derive(Serialize)]
struct TrainMetrics {
    initial: Compactness,
    #[serde(rename = "final")]
    final_metrics: Compactness,
    margin_gain: f64,
    iterations: u64,
    bank_len: usize,
}

/// Configuration for `train-toy`: defaults, then the TOML file, then flags.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = formats::read_text(p)?;
            toml::from_str::<TrainConfig>(&text).map_err(|e| {
                let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
                Error::schema(p, line, e.message().to_string())
            })?
        }
        None => TrainConfig::default(),
    };
    cfg.synthetic.seed = args.seed;
    cfg.init_seed = args.seed;
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_train_toy(args: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = resolve_train_config(args)?;
    let outcome = toytrain::train(&cfg)?;
    let out = &args.out;
    formats::write_file(&out.join("loss.csv"), formats::loss_csv(&outcome.history).as_bytes())?;
    let embeddings = formats::embeddings_csv(&outcome.eval_embeddings, cfg.synthetic.embed_dim, &outcome.eval_labels);
    formats::write_file(&out.join("embeddings.csv"), embeddings.as_bytes())?;
    let bank = formats::to_json(&BankCheckpoint::from_bank(&outcome.bank));
    formats::write_file(&out.join("bank.json"), bank.as_bytes())?;
    let metrics = TrainMetrics {
        margin_gain: outcome.final_metrics.margin - outcome.initial.margin,
        initial: outcome.initial.clone(),
        final_metrics: outcome.final_metrics.clone(),
        iterations: cfg.iterations,
        bank_len: outcome.bank.len(),
    };
    let json = formats::to_json(&Envelope::new(&cfg, &metrics));
    formats::write_file(&out.join("metrics.json"), json.as_bytes())?;
    emit(
        stdout,
        &format!(
            "margin {:.4} -> {:.4} (intra {:.4}, inter {:.4}) after {} iterations\n",
            metrics.initial.margin, metrics.final_metrics.margin, metrics.final_metrics.intra, metrics.final_metrics.inter, cfg.iterations
        ),
    )
}

#[derive(Serialize)]
struct GradcheckBody {
    instances: usize,
    max_rel_err: f64,
    pass: bool,
}

pub fn cmd_gradcheck(args: &GradcheckArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = GradcheckConfig {
        instances: args.instances,
        seed: args.seed,
        corrupt: args.corrupt,
        ..GradcheckConfig::default()
    };
    let report = gradcheck::run(&cfg)?;
    let body = GradcheckBody {
        instances: report.instances,
        max_rel_err: report.max_rel_err,
        pass: report.pass,
    };
    emit_or_write(stdout, args.out.as_deref(), &formats::to_json(&Envelope::new(cfg, body)))?;
    if report.pass {
        Ok(())
    } else {
        Err(Error::CheckFailed {
            max_rel_err: report.max_rel_err,
            report: Box::new(report),
        })
    }
}

#[derive(Serialize)]
struct TileBody {
    windows: Vec<fewshot::Window>,
}

pub fn cmd_tile(args: &TileArgs, stdout: &mut dyn Write) -> Result<()> {
    let windows = fewshot::tile_windows(args.width, args.height, args.tile, args.stride)?;
    emit(stdout, &formats::to_json(&Envelope::new(args, TileBody { windows })))
}
