//! Localization and detection metrics: IoU, CorLoc, Top-1 Loc and
//! VOC-style mean average precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{BBox, ImageDims};

/// Localization counts as correct at or above this IoU.
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub dims: ImageDims,
    pub label: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class: String,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClsFlag<'a> {
    pub image_id: &'a str,
    pub top1_correct: bool,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

/// Per GT image (in GT order): whether the prediction reaches the IoU
/// threshold against any of the image's boxes.
pub fn localization_hits(predictions: &[(String, BBox)], gt: &[GroundTruthRecord]) -> Result<Vec<bool>> {
    let by_id: HashMap<&str, &BBox> = predictions.iter().map(|(id, b)| (id.as_str(), b)).collect();
    let missing: Vec<&str> = gt
        .iter()
        .map(|g| g.image_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "no prediction for {} image(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(gt
        .iter()
        .map(|g| {
            let pred = by_id[g.image_id.as_str()];
            g.boxes
                .iter()
                .map(|b| iou(pred, b))
                .fold(0.0, f64::max)
                >= IOU_THRESHOLD
        })
        .collect())
}

fn fraction(hits: impl Iterator<Item = bool>) -> Result<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for h in hits {
        n += 1;
        k += h as usize;
    }
    if n == 0 {
        return Err(Error::invalid("no ground-truth images to evaluate"));
    }
    Ok(k as f64 / n as f64)
}

/// Fraction of GT images whose predicted box matches one of their boxes.
pub fn corloc(predictions: &[(String, BBox)], gt: &[GroundTruthRecord]) -> Result<f64> {
    fraction(localization_hits(predictions, gt)?.into_iter())
}

/// Fraction of GT images that are both classified and localized correctly.
pub fn top1_loc(
    predictions: &[(String, BBox)],
    gt: &[GroundTruthRecord],
    flags: &[ClsFlag<'_>],
) -> Result<f64> {
    let by_id: HashMap<&str, bool> = flags.iter().map(|f| (f.image_id, f.top1_correct)).collect();
    let missing: Vec<&str> = gt
        .iter()
        .map(|g| g.image_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "no classification flag for {} image(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let hits = localization_hits(predictions, gt)?;
    fraction(
        gt.iter()
            .zip(hits)
            .map(|(g, hit)| hit && by_id[g.image_id.as_str()]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    #[default]
    ElevenPoint,
    /// Area under the monotone precision envelope.
    AllPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub ap: f64,
    pub gt_instances: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub map: f64,
    pub per_class: BTreeMap<String, ClassAp>,
    pub warnings: Vec<String>,
}

fn detection_order(a: &DetectionRecord, b: &DetectionRecord) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.bbox.y1.total_cmp(&b.bbox.y1))
        .then_with(|| a.bbox.x1.total_cmp(&b.bbox.x1))
        .then_with(|| a.bbox.y2.total_cmp(&b.bbox.y2))
        .then_with(|| a.bbox.x2.total_cmp(&b.bbox.x2))
}

/// True-positive flags for one class's detections, already sorted.
fn match_detections(
    sorted: &[&DetectionRecord],
    gt_boxes: &HashMap<&str, Vec<BBox>>,
    iou_threshold: f64,
) -> Vec<bool> {
    let mut matched: HashMap<&str, Vec<bool>> = gt_boxes
        .iter()
        .map(|(id, boxes)| (*id, vec![false; boxes.len()]))
        .collect();
    sorted
        .iter()
        .map(|det| {
            let Some(boxes) = gt_boxes.get(det.image_id.as_str()) else {
                return false;
            };
            let used = matched.get_mut(det.image_id.as_str()).expect("same keys");
            let mut best: Option<(usize, f64)> = None;
            for (i, b) in boxes.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let o = iou(&det.bbox, b);
                if best.is_none_or(|(_, v)| o > v) {
                    best = Some((i, o));
                }
            }
            match best {
                Some((i, o)) if o >= iou_threshold => {
                    used[i] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

fn average_precision(tp: &[bool], gt_instances: usize, method: ApMethod) -> f64 {
    if gt_instances == 0 || tp.is_empty() {
        return 0.0;
    }
    // (true positives, detections) after each rank
    let mut counts = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        counts.push((hits, k + 1));
    }
    let precision = |(h, k): (usize, usize)| h as f64 / k as f64;
    match method {
        ApMethod::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|step| {
                    counts
                        .iter()
                        .filter(|&&(h, _)| h * 10 >= step * gt_instances)
                        .map(|&c| precision(c))
                        .fold(0.0, f64::max)
                })
                .sum();
            total / 11.0
        }
        ApMethod::AllPoint => {
            let mut envelope: Vec<f64> = counts.iter().map(|&c| precision(c)).collect();
            for i in (0..envelope.len().saturating_sub(1)).rev() {
                envelope[i] = envelope[i].max(envelope[i + 1]);
            }
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (i, &(h, _)) in counts.iter().enumerate() {
                let recall = h as f64 / gt_instances as f64;
                area += (recall - prev_recall) * envelope[i];
                prev_recall = recall;
            }
            area
        }
    }
}

pub fn voc_map(
    detections: &[DetectionRecord],
    gt: &[GroundTruthRecord],
    iou_threshold: f64,
    method: ApMethod,
) -> MapReport {
    let mut gt_by_class: BTreeMap<&str, HashMap<&str, Vec<BBox>>> = BTreeMap::new();
    for g in gt {
        gt_by_class
            .entry(g.label.as_str())
            .or_default()
            .entry(g.image_id.as_str())
            .or_default()
            .extend(g.boxes.iter().copied());
    }
    let mut dets_by_class: BTreeMap<&str, Vec<&DetectionRecord>> = BTreeMap::new();
    for d in detections {
        dets_by_class.entry(d.class.as_str()).or_default().push(d);
    }

    let classes: BTreeSet<&str> = gt_by_class.keys().chain(dets_by_class.keys()).copied().collect();
    let empty = HashMap::new();
    let mut per_class = BTreeMap::new();
    let mut warnings = Vec::new();
    for class in classes {
        let gt_boxes = gt_by_class.get(class).unwrap_or(&empty);
        let gt_instances: usize = gt_boxes.values().map(Vec::len).sum();
        let mut dets = dets_by_class.remove(class).unwrap_or_default();
        dets.sort_by(|a, b| detection_order(a, b));
        if gt_instances == 0 {
            let msg = format!("class {class:?} has {} detections but no ground truth", dets.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let tp = match_detections(&dets, gt_boxes, iou_threshold);
        per_class.insert(
            class.to_string(),
            ClassAp {
                ap: average_precision(&tp, gt_instances, method),
                gt_instances,
                detections: dets.len(),
            },
        );
    }

    let scored: Vec<f64> = per_class
        .values()
        .filter(|c| c.gt_instances > 0)
        .map(|c| c.ap)
        .collect();
    let map = if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    MapReport {
        map,
        per_class,
        warnings,
    }
}
