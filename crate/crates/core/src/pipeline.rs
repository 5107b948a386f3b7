//! The end-to-end chain: pseudo boxes, grid masks, head training, box
//! prediction and evaluation. The CLI runs the same steps one file at a
//! time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Map;

use crate::ddt::{ddt_pseudo_box, fit_ddt};
use crate::error::{Error, Result};
use crate::head::{train_head, PixelHead, TrainConfig, TrainOutcome, TrainSample};
use crate::io::{AnnotationLine, PredictionLine};
use crate::metrics::{corloc, iou, top1_loc, ClsFlag, GroundTruthRecord};
use crate::pseudo_mask::{generate_training_masks, BoxSource, MaskRequest};
use crate::tensor::{BBox, BinaryMask, FeatureMap};
use crate::wsol::{localize_dataset, DatasetLocalization, LocalizationInput, MaskThreshold};

/// An annotated image with its feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub annotation: AnnotationLine,
    pub features: FeatureMap,
}

/// Fits one co-localization model per label and boxes every image, in
/// input order.
pub fn ddt_boxes(images: &[ImageRecord], seed: u64) -> Result<Vec<PredictionLine>> {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        by_label.entry(img.annotation.label.as_str()).or_default().push(i);
    }
    let mut boxes: Vec<Option<BBox>> = vec![None; images.len()];
    for (label, members) in by_label {
        let features: Vec<FeatureMap> = members.iter().map(|&i| images[i].features.clone()).collect();
        let model = fit_ddt(label, &features, seed)?;
        log::info!(
            "category {label:?}: {} images, leading eigenvalue {:.4}",
            members.len(),
            model.eigenvalue
        );
        let found = members
            .par_iter()
            .map(|&i| {
                let img = &images[i];
                ddt_pseudo_box(&model, &img.features, img.annotation.dims()?)
            })
            .collect::<Result<Vec<_>>>()?;
        for (&i, b) in members.iter().zip(found) {
            boxes[i] = Some(b);
        }
    }
    Ok(images
        .iter()
        .zip(boxes)
        .map(|(img, b)| PredictionLine {
            image_id: img.annotation.image_id.clone(),
            bbox: b.expect("every image belongs to one label"),
            mask_path: None,
            extra: Map::new(),
        })
        .collect())
}

/// Grid masks from pseudo boxes (`Some`) or from the annotations' own
/// ground-truth boxes (`None`).
pub fn build_masks(images: &[ImageRecord], pseudo: Option<&[PredictionLine]>) -> Result<Vec<BinaryMask>> {
    let lookup: Option<BTreeMap<&str, BBox>> =
        pseudo.map(|p| p.iter().map(|l| (l.image_id.as_str(), l.bbox)).collect());
    let requests = images
        .iter()
        .map(|img| {
            let a = &img.annotation;
            let boxes = match &lookup {
                Some(map) => map.get(a.image_id.as_str()).copied().into_iter().collect(),
                None => a.boxes.clone(),
            };
            Ok(MaskRequest {
                image_id: a.image_id.clone(),
                grid_height: img.features.height(),
                grid_width: img.features.width(),
                image: a.dims()?,
                boxes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let source = if pseudo.is_some() {
        BoxSource::Pseudo
    } else {
        BoxSource::GroundTruth
    };
    generate_training_masks(&requests, source)
}

pub fn train(images: &[ImageRecord], masks: &[BinaryMask], config: &TrainConfig) -> Result<TrainOutcome> {
    if images.len() != masks.len() {
        return Err(Error::invalid(format!(
            "{} images but {} masks",
            images.len(),
            masks.len()
        )));
    }
    let samples = images
        .iter()
        .zip(masks)
        .map(|(img, m)| TrainSample::new(img.annotation.image_id.clone(), img.features.clone(), m.clone()))
        .collect::<Result<Vec<_>>>()?;
    train_head(&samples, config)
}

pub fn predict(head: &PixelHead, images: &[ImageRecord], threshold: MaskThreshold) -> Result<DatasetLocalization> {
    let inputs = images
        .iter()
        .map(|img| {
            Ok(LocalizationInput {
                image_id: img.annotation.image_id.clone(),
                features: img.features.clone(),
                image: img.annotation.dims()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(localize_dataset(head, &inputs, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WsolMetrics {
    pub images: usize,
    pub corloc: f64,
    /// Present when every annotation carries a classification flag.
    pub top1_loc: Option<f64>,
}

pub fn evaluate_wsol(predictions: &[PredictionLine], annotations: &[AnnotationLine]) -> Result<WsolMetrics> {
    let gt = annotations
        .iter()
        .map(AnnotationLine::to_ground_truth)
        .collect::<Result<Vec<GroundTruthRecord>>>()?;
    let preds: Vec<(String, BBox)> = predictions.iter().map(|p| (p.image_id.clone(), p.bbox)).collect();
    let corloc = corloc(&preds, &gt)?;
    let flags: Option<Vec<ClsFlag<'_>>> = annotations
        .iter()
        .map(|a| {
            a.top1_correct.map(|t| ClsFlag {
                image_id: &a.image_id,
                top1_correct: t,
            })
        })
        .collect();
    let top1_loc = flags.map(|f| top1_loc(&preds, &gt, &f)).transpose()?;
    Ok(WsolMetrics {
        images: gt.len(),
        corloc,
        top1_loc,
    })
}

/// Mean IoU of each image's box against the best of its ground-truth boxes.
pub fn mean_box_iou(boxes: &[PredictionLine], annotations: &[AnnotationLine]) -> Result<f64> {
    let by_id: BTreeMap<&str, &AnnotationLine> = annotations.iter().map(|a| (a.image_id.as_str(), a)).collect();
    if boxes.is_empty() {
        return Err(Error::invalid("no boxes to compare"));
    }
    let mut total = 0.0;
    for p in boxes {
        let a = by_id
            .get(p.image_id.as_str())
            .ok_or_else(|| Error::invalid(format!("no annotation for image {}", p.image_id)))?;
        total += a.boxes.iter().map(|g| iou(&p.bbox, g)).fold(0.0, f64::max);
    }
    Ok(total / boxes.len() as f64)
}

pub fn to_prediction_lines(loc: &DatasetLocalization) -> Vec<PredictionLine> {
    loc.results
        .iter()
        .map(|r| PredictionLine {
            image_id: r.image_id.clone(),
            bbox: r.bbox,
            mask_path: None,
            extra: Map::new(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub mask_threshold: MaskThreshold,
    /// Seed for co-localization; training uses `train.seed`.
    pub seed: u64,
}

impl PipelineConfig {
    /// Settings for small synthetic sets, where the large-scale recipe
    /// would take only a handful of steps.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            train: TrainConfig {
                batch_size: 16,
                learning_rate: 0.05,
                momentum: 0.9,
                weight_decay: 1e-4,
                epochs: 12,
                decay_period: 4,
                decay_factor: 0.1,
                seed,
            },
            mask_threshold: MaskThreshold::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub pseudo_boxes: Vec<PredictionLine>,
    /// Mean IoU of the pseudo boxes against training ground truth.
    pub pseudo_box_iou: f64,
    pub training: TrainOutcome,
    pub predictions: Vec<PredictionLine>,
    pub metrics: WsolMetrics,
}

/// Trains on `train` with masks from the given source and evaluates box
/// predictions on `test`.
pub fn run_end_to_end(
    train_set: &[ImageRecord],
    test_set: &[ImageRecord],
    config: &PipelineConfig,
    source: BoxSource,
) -> Result<EndToEnd> {
    let pseudo_boxes = ddt_boxes(train_set, config.seed)?;
    let train_annotations: Vec<AnnotationLine> = train_set.iter().map(|i| i.annotation.clone()).collect();
    let pseudo_box_iou = mean_box_iou(&pseudo_boxes, &train_annotations)?;
    let masks = match source {
        BoxSource::Pseudo => build_masks(train_set, Some(&pseudo_boxes))?,
        BoxSource::GroundTruth => build_masks(train_set, None)?,
    };
    let training = train(train_set, &masks, &config.train)?;
    let loc = predict(&training.head, test_set, config.mask_threshold)?;
    if let Some(f) = loc.failures.first() {
        return Err(Error::invalid(format!("image {}: {}", f.image_id, f.error)));
    }
    let predictions = to_prediction_lines(&loc);
    let test_annotations: Vec<AnnotationLine> = test_set.iter().map(|i| i.annotation.clone()).collect();
    let metrics = evaluate_wsol(&predictions, &test_annotations)?;
    Ok(EndToEnd {
        pseudo_boxes,
        pseudo_box_iou,
        training,
        predictions,
        metrics,
    })
}
