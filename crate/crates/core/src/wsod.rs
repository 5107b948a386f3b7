//! Proposal objectness from foreground masks, and the background filter
//! labels handed to a detector's refinement stage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BBox, ProbMask};

/// Filter threshold for masks predicted by a trained head.
pub const PREDICTED_MASK_THRESHOLD: f64 = 0.2;
/// Filter threshold for masks built from ground-truth boxes.
pub const GT_MASK_THRESHOLD: f64 = 0.5;
/// Classes never filtered by default (VOC names for person and plant).
pub const DEFAULT_EXEMPT_CLASSES: [&str; 2] = ["person", "pottedplant"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Class the detector currently assigns to the proposal.
    #[serde(rename = "class", default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub objectness: f64,
    pub filtered: bool,
    #[serde(rename = "class", default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

/// Pixel indices `floor(lo) <= i < ceil(hi)`, clipped to `[0, limit)`.
fn raster_span(lo: f64, hi: f64, limit: usize) -> (usize, usize) {
    let a = (lo.floor().max(0.0) as usize).min(limit);
    let b = (hi.ceil().max(0.0) as usize).min(limit);
    (a, b)
}

/// Mean mask value over every pixel the proposal touches.
pub fn proposal_objectness(mask: &ProbMask, bbox: &BBox) -> Result<f64> {
    let (x0, x1) = raster_span(bbox.x1, bbox.x2, mask.width());
    let (y0, y1) = raster_span(bbox.y1, bbox.y2, mask.height());
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::invalid(format!(
            "proposal {:?} covers no pixels of a {}x{} mask",
            bbox.to_array(),
            mask.width(),
            mask.height()
        )));
    }
    let mut sum = 0.0;
    for y in y0..y1 {
        let row = &mask.values()[y * mask.width()..(y + 1) * mask.width()];
        sum += row[x0..x1].iter().sum::<f64>();
    }
    let mean = sum / ((x1 - x0) * (y1 - y0)) as f64;
    Ok(mean.clamp(0.0, 1.0))
}

pub fn score_proposals(mask: &ProbMask, proposals: &[Proposal]) -> Result<Vec<ScoredProposal>> {
    proposals
        .iter()
        .map(|p| {
            Ok(ScoredProposal {
                image_id: p.image_id.clone(),
                bbox: p.bbox,
                objectness: proposal_objectness(mask, &p.bbox)?,
                filtered: false,
                class: p.class.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub threshold: f64,
    pub exempt_classes: BTreeSet<String>,
}

impl FilterConfig {
    pub fn for_predicted_masks() -> Self {
        Self {
            threshold: PREDICTED_MASK_THRESHOLD,
            exempt_classes: DEFAULT_EXEMPT_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn for_gt_masks() -> Self {
        Self {
            threshold: GT_MASK_THRESHOLD,
            ..Self::for_predicted_masks()
        }
    }
}

/// Marks proposals scoring strictly below the threshold as background,
/// unless their class is exempt.
pub fn filter_proposals(
    scored: Vec<ScoredProposal>,
    config: &FilterConfig,
) -> Result<Vec<ScoredProposal>> {
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(Error::invalid(format!(
            "filter threshold {} outside [0, 1]",
            config.threshold
        )));
    }
    Ok(scored
        .into_iter()
        .map(|mut s| {
            let exempt = s
                .class
                .as_ref()
                .is_some_and(|c| config.exempt_classes.contains(c));
            s.filtered = s.objectness < config.threshold && !exempt;
            s
        })
        .collect())
}
