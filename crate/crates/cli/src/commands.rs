use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use wsfl_core::head::{init_head, train_head_from, TrainConfig, TrainSample};
use wsfl_core::io::{
    read_annotations, read_binary_mask, read_detections, read_feature_file, read_head,
    read_jsonl, read_predictions, write_binary_mask, write_head, write_jsonl,
    write_metrics_report, write_predictions, write_prob_mask, AnnotationLine, PredictionLine,
};
use wsfl_core::metrics::{voc_map, ApMethod, IOU_THRESHOLD};
use wsfl_core::pipeline::{self, ImageRecord};
use wsfl_core::pseudo_mask::boxes_to_hr_mask;
use wsfl_core::synth::{synth_generate, write_dataset, SynthSpec};
use wsfl_core::tensor::{bilinear_upsample, ProbMask};
use wsfl_core::wsod::{
    filter_proposals, score_proposals, FilterConfig, Proposal, ScoredProposal,
    DEFAULT_EXEMPT_CLASSES, GT_MASK_THRESHOLD, PREDICTED_MASK_THRESHOLD,
};
use wsfl_core::wsol::{localize_dataset, LocalizationInput, MaskThreshold};
use wsfl_core::head::head_forward;

use crate::overlay;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] wsfl_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "wsfl", version, about = "Weakly supervised foreground learning on feature grids")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// key=value settings file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-image work. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known boxes.
    SynthGen(SynthGenArgs),
    /// Co-localize each category and emit one pseudo box per image.
    DdtBoxes(DdtBoxesArgs),
    /// Build feature-grid training masks from pseudo or ground-truth boxes.
    MakeMasks(MakeMasksArgs),
    /// Train the per-position foreground head.
    TrainHead(TrainHeadArgs),
    /// Predict one box per image with a trained head.
    Predict(PredictArgs),
    /// CorLoc and Top-1 Loc of predicted boxes.
    EvalWsol(EvalWsolArgs),
    /// Objectness scores and background filter labels for proposals.
    ScoreProposals(ScoreProposalsArgs),
    /// VOC-style mean average precision of detections.
    EvalMap(EvalMapArgs),
    /// Render mask heat maps with boxes as PNG images.
    RenderOverlay(RenderOverlayArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Annotation file, one JSON object per image.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory holding `<image_id>.wsft` feature files.
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub images: usize,
    #[arg(long, default_value_t = 200)]
    pub train_images: usize,
    /// Grid side length (square grids).
    #[arg(long, default_value_t = 14)]
    pub grid: usize,
    #[arg(long, default_value_t = 16)]
    pub depth: usize,
    /// Cluster mean distance in noise standard deviations.
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 5)]
    pub min_box: usize,
    #[arg(long, default_value_t = 10)]
    pub max_box: usize,
    #[arg(long, default_value_t = 0.8)]
    pub classifier_accuracy: f64,
    #[arg(long, default_value = "object")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct DdtBoxesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MakeMasksArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pseudo boxes from `ddt-boxes`.
    #[arg(long, required_unless_present = "gt_boxes", conflicts_with = "gt_boxes")]
    pub boxes: Option<PathBuf>,
    /// Use the annotations' ground-truth boxes instead of pseudo boxes.
    #[arg(long)]
    pub gt_boxes: bool,
    /// Output directory for `<image_id>.wsft` masks.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainHeadArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 12)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub decay_period: usize,
    #[arg(long, default_value_t = 0.1)]
    pub decay_factor: f64,
    /// Resume from this checkpoint instead of a seeded initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Also write the starting checkpoint here.
    #[arg(long)]
    pub save_init: Option<PathBuf>,
    /// Write the per-epoch loss trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdMode {
    Absolute,
    Relative,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Binarization threshold for upsampled masks.
    #[arg(long, default_value_t = 0.5)]
    pub mask_threshold: f64,
    /// `relative` scales the threshold by each mask's maximum.
    #[arg(long, value_enum, default_value_t = ThresholdMode::Absolute)]
    pub threshold_mode: ThresholdMode,
}

impl MaskArgs {
    fn threshold(&self) -> MaskThreshold {
        match self.threshold_mode {
            ThresholdMode::Absolute => MaskThreshold::Absolute(self.mask_threshold),
            ThresholdMode::Relative => MaskThreshold::Relative(self.mask_threshold),
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Also write each grid-resolution probability mask here.
    #[arg(long)]
    pub masks_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalWsolArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreProposalsArgs {
    #[arg(long)]
    pub proposals: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained head; required unless `--gt-masks`.
    #[arg(long, required_unless_present = "gt_masks")]
    pub head: Option<PathBuf>,
    /// Score against masks built from the ground-truth boxes.
    #[arg(long)]
    pub gt_masks: bool,
    /// Filter threshold; 0.2 for predicted masks, 0.5 for ground-truth masks.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated classes that are never filtered.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EXEMPT_CLASSES.map(String::from))]
    pub exempt: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalMapArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Area under the full precision envelope instead of 11-point AP.
    #[arg(long)]
    pub all_point: bool,
    #[arg(long, default_value_t = IOU_THRESHOLD)]
    pub iou_threshold: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderOverlayArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub head: PathBuf,
    /// Boxes to draw; recomputed from the head when absent.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    let seed = cli.seed;
    match cli.command {
        Command::SynthGen(a) => synth_gen(a, seed),
        Command::DdtBoxes(a) => ddt_boxes(a, seed),
        Command::MakeMasks(a) => make_masks(a),
        Command::TrainHead(a) => train(a, seed),
        Command::Predict(a) => predict(a),
        Command::EvalWsol(a) => eval_wsol(a, seed),
        Command::ScoreProposals(a) => score(a),
        Command::EvalMap(a) => eval_map(a, seed),
        Command::RenderOverlay(a) => render(a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn grid_file(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.wsft"))
}

fn with_path<T>(path: &Path, r: wsfl_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        wsfl_core::Error::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Invalid(format!("{}: {other}", path.display())),
    })
}

fn load_images(data: &DataArgs) -> Result<Vec<ImageRecord>> {
    let annotations = with_path(&data.annotations, read_annotations(&data.annotations))?;
    let images = annotations
        .into_par_iter()
        .map(|annotation| {
            let path = grid_file(&data.features, &annotation.image_id);
            let features = with_path(&path, read_feature_file(&path))?;
            Ok(ImageRecord {
                annotation,
                features,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!("loaded {} images from {}", images.len(), data.annotations.display());
    Ok(images)
}

fn emit_report(report: &Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => with_path(path, write_metrics_report(path, report)),
        None => {
            println!("{}", serde_json::to_string_pretty(report).expect("serializable"));
            Ok(())
        }
    }
}

fn synth_gen(a: SynthGenArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        images: a.images,
        train_images: a.train_images,
        grid_height: a.grid,
        grid_width: a.grid,
        depth: a.depth,
        separation: a.separation,
        min_box: a.min_box,
        max_box: a.max_box,
        classifier_accuracy: a.classifier_accuracy,
        label: a.label,
        seed,
    };
    let dataset = synth_generate(&spec)?;
    with_path(&a.out, write_dataset(&a.out, &dataset))?;
    log::info!(
        "wrote {} train and {} test images to {}",
        dataset.train.len(),
        dataset.test.len(),
        a.out.display()
    );
    Ok(())
}

fn ddt_boxes(a: DdtBoxesArgs, seed: u64) -> Result<()> {
    let images = load_images(&a.data)?;
    let boxes = pipeline::ddt_boxes(&images, seed)?;
    with_path(&a.out, write_predictions(&a.out, &boxes))
}

fn make_masks(a: MakeMasksArgs) -> Result<()> {
    let images = load_images(&a.data)?;
    let pseudo = match &a.boxes {
        Some(path) => Some(with_path(path, read_predictions(path))?),
        None => None,
    };
    if let Some(p) = &pseudo {
        let known: BTreeSet<&str> = p.iter().map(|l| l.image_id.as_str()).collect();
        if let Some(img) = images.iter().find(|i| !known.contains(i.annotation.image_id.as_str())) {
            return Err(CliError::Invalid(format!(
                "no pseudo box for image {}",
                img.annotation.image_id
            )));
        }
    }
    let masks = pipeline::build_masks(&images, pseudo.as_deref())?;
    create_dir(&a.out)?;
    images
        .par_iter()
        .zip(&masks)
        .try_for_each(|(img, m)| {
            let path = grid_file(&a.out, &img.annotation.image_id);
            with_path(&path, write_binary_mask(&path, m))
        })?;
    log::info!("wrote {} masks to {}", masks.len(), a.out.display());
    Ok(())
}

fn train(a: TrainHeadArgs, seed: u64) -> Result<()> {
    let images = load_images(&a.data)?;
    let samples = images
        .into_par_iter()
        .map(|img| {
            let path = grid_file(&a.masks, &img.annotation.image_id);
            let mask = with_path(&path, read_binary_mask(&path))?;
            Ok(TrainSample::new(img.annotation.image_id, img.features, mask)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let config = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        decay_period: a.decay_period,
        decay_factor: a.decay_factor,
        seed,
    };
    config.validate()?;
    let depth = samples
        .first()
        .ok_or_else(|| CliError::Invalid("no training images".into()))?
        .features
        .depth();
    let init = match &a.init {
        Some(path) => with_path(path, read_head(path))?,
        None => init_head(depth, seed)?,
    };
    if let Some(path) = &a.save_init {
        with_path(path, write_head(path, &init))?;
    }
    let outcome = train_head_from(init, &samples, &config)?;
    log::info!(
        "trained on {} images, final loss {:.6}",
        samples.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(path) = &a.trace {
        let trace = json!({ "loss_per_epoch": outcome.loss_trace });
        with_path(path, write_metrics_report(path, &trace))?;
    }
    with_path(&a.out, write_head(&a.out, &outcome.head))
}

fn predict(a: PredictArgs) -> Result<()> {
    let head = with_path(&a.head, read_head(&a.head))?;
    let images = load_images(&a.data)?;
    let loc = pipeline::predict(&head, &images, a.mask.threshold())?;
    for f in &loc.failures {
        log::error!("image {}: {}", f.image_id, f.error);
    }
    let mut lines = pipeline::to_prediction_lines(&loc);
    if let Some(dir) = &a.masks_out {
        create_dir(dir)?;
        for (line, r) in lines.iter_mut().zip(&loc.results) {
            let path = grid_file(dir, &r.image_id);
            with_path(&path, write_prob_mask(&path, &r.mask))?;
            line.mask_path = Some(path.to_string_lossy().into_owned());
        }
    }
    with_path(&a.out, write_predictions(&a.out, &lines))?;
    if !loc.failures.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} of {} images failed",
            loc.failures.len(),
            images.len()
        )));
    }
    Ok(())
}

pub fn wsol_report(metrics: &pipeline::WsolMetrics, config: Value) -> Value {
    json!({
        "command": "eval-wsol",
        "config": config,
        "metrics": metrics,
    })
}

fn eval_wsol(a: EvalWsolArgs, seed: u64) -> Result<()> {
    let predictions = with_path(&a.predictions, read_predictions(&a.predictions))?;
    let annotations = with_path(&a.annotations, read_annotations(&a.annotations))?;
    let metrics = pipeline::evaluate_wsol(&predictions, &annotations)?;
    log::info!("corloc {:.4} over {} images", metrics.corloc, metrics.images);
    let config = json!({
        "annotations": file_name(&a.annotations),
        "iou_threshold": IOU_THRESHOLD,
        "predictions": file_name(&a.predictions),
        "seed": seed,
    });
    emit_report(&wsol_report(&metrics, config), a.out.as_deref())
}

fn score(a: ScoreProposalsArgs) -> Result<()> {
    let proposals: Vec<Proposal> = with_path(&a.proposals, read_jsonl(&a.proposals))?;
    let threshold = a.threshold.unwrap_or(if a.gt_masks {
        GT_MASK_THRESHOLD
    } else {
        PREDICTED_MASK_THRESHOLD
    });
    let config = FilterConfig {
        threshold,
        exempt_classes: a.exempt.iter().filter(|c| !c.is_empty()).cloned().collect(),
    };
    let head = match (&a.head, a.gt_masks) {
        (_, true) => None,
        (Some(path), false) => Some(with_path(path, read_head(path))?),
        (None, false) => return Err(CliError::Usage("--head is required without --gt-masks".into())),
    };

    let annotations = with_path(&a.data.annotations, read_annotations(&a.data.annotations))?;
    let by_id: BTreeMap<&str, &AnnotationLine> =
        annotations.iter().map(|l| (l.image_id.as_str(), l)).collect();
    let mut grouped: BTreeMap<&str, Vec<(usize, Proposal)>> = BTreeMap::new();
    for (i, p) in proposals.iter().enumerate() {
        if !by_id.contains_key(p.image_id.as_str()) {
            return Err(CliError::Invalid(format!(
                "proposal {} refers to unknown image {}",
                i + 1,
                p.image_id
            )));
        }
        grouped.entry(p.image_id.as_str()).or_default().push((i, p.clone()));
    }

    let per_image = grouped
        .par_iter()
        .map(|(id, items)| {
            let ann = by_id[id];
            let dims = ann.dims()?;
            let mask = match &head {
                Some(h) => {
                    let path = grid_file(&a.data.features, id);
                    let features = with_path(&path, read_feature_file(&path))?;
                    bilinear_upsample(&head_forward(h, &features)?, dims)?
                }
                None => {
                    let hr = boxes_to_hr_mask(&ann.boxes, dims)?;
                    ProbMask::new(dims.height, dims.width, hr.as_targets().collect())?
                }
            };
            let props: Vec<Proposal> = items.iter().map(|(_, p)| p.clone()).collect();
            let scored = score_proposals(&mask, &props)?;
            Ok(items.iter().map(|(i, _)| *i).zip(scored).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut slots: Vec<Option<ScoredProposal>> = vec![None; proposals.len()];
    for (i, s) in per_image.into_iter().flatten() {
        slots[i] = Some(s);
    }
    let scored: Vec<ScoredProposal> = slots.into_iter().map(|s| s.expect("every proposal scored")).collect();
    let filtered = filter_proposals(scored, &config)?;
    log::info!(
        "{} of {} proposals marked background at threshold {}",
        filtered.iter().filter(|s| s.filtered).count(),
        filtered.len(),
        config.threshold
    );
    with_path(&a.out, write_jsonl(&a.out, &filtered))
}

fn eval_map(a: EvalMapArgs, seed: u64) -> Result<()> {
    let detections = with_path(&a.detections, read_detections(&a.detections))?;
    let annotations = with_path(&a.annotations, read_annotations(&a.annotations))?;
    let gt = annotations
        .iter()
        .map(AnnotationLine::to_ground_truth)
        .collect::<wsfl_core::Result<Vec<_>>>()?;
    if !(0.0..=1.0).contains(&a.iou_threshold) {
        return Err(CliError::Invalid(format!("iou threshold {} outside [0, 1]", a.iou_threshold)));
    }
    let method = if a.all_point { ApMethod::AllPoint } else { ApMethod::ElevenPoint };
    let report = voc_map(&detections, &gt, a.iou_threshold, method);
    log::info!("mAP {:.4} over {} classes", report.map, report.per_class.len());
    let doc = json!({
        "command": "eval-map",
        "config": {
            "annotations": file_name(&a.annotations),
            "ap_method": method,
            "detections": file_name(&a.detections),
            "iou_threshold": a.iou_threshold,
            "seed": seed,
        },
        "metrics": {
            "map": report.map,
            "per_class": report.per_class,
        },
        "warnings": report.warnings,
    });
    emit_report(&doc, a.out.as_deref())
}

fn render(a: RenderOverlayArgs) -> Result<()> {
    let head = with_path(&a.head, read_head(&a.head))?;
    let images = load_images(&a.data)?;
    let given: Option<BTreeMap<String, PredictionLine>> = match &a.predictions {
        Some(path) => Some(
            with_path(path, read_predictions(path))?
                .into_iter()
                .map(|p| (p.image_id.clone(), p))
                .collect(),
        ),
        None => None,
    };
    let inputs = images
        .iter()
        .map(|img| {
            Ok(LocalizationInput {
                image_id: img.annotation.image_id.clone(),
                features: img.features.clone(),
                image: img.annotation.dims()?,
            })
        })
        .collect::<wsfl_core::Result<Vec<_>>>()?;
    let loc = localize_dataset(&head, &inputs, a.mask.threshold());
    create_dir(&a.out)?;
    loc.results.par_iter().try_for_each(|r| {
        let ann = &images
            .iter()
            .find(|i| i.annotation.image_id == r.image_id)
            .expect("result for a loaded image")
            .annotation;
        let upsampled = bilinear_upsample(&r.mask, r.upsampled)?;
        let predicted = given
            .as_ref()
            .and_then(|m| m.get(&r.image_id))
            .map_or(r.bbox, |p| p.bbox);
        let path = a.out.join(format!("{}.png", r.image_id));
        overlay::render(&upsampled, &ann.boxes, &predicted)
            .save(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    })?;
    log::info!("rendered {} overlays into {}", loc.results.len(), a.out.display());
    Ok(())
}
