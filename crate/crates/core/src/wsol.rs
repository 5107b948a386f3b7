//! Box extraction from predicted foreground masks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::head::{head_forward, PixelHead};
use crate::tensor::{
    bilinear_upsample, binarize, connected_components, largest_component, BBox, Component,
    FeatureMap, ImageDims, ProbMask,
};

/// How the upsampled mask is binarized before component extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskThreshold {
    /// Keep pixels with probability at least this value.
    Absolute(f64),
    /// Keep pixels at least this fraction of the mask maximum.
    Relative(f64),
}

impl Default for MaskThreshold {
    fn default() -> Self {
        MaskThreshold::Absolute(0.5)
    }
}

impl MaskThreshold {
    fn resolve(self, mask: &ProbMask) -> Result<f64> {
        let value = match self {
            MaskThreshold::Absolute(t) | MaskThreshold::Relative(t) => t,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("mask threshold {value} outside [0, 1]")));
        }
        Ok(match self {
            MaskThreshold::Absolute(t) => t,
            MaskThreshold::Relative(t) => t * mask.max_value(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationResult {
    pub image_id: String,
    pub bbox: BBox,
    /// Grid-resolution prediction.
    pub mask: ProbMask,
    pub upsampled: ImageDims,
    /// Pixel count of the component the box was taken from; 0 when the
    /// box came from the argmax fallback.
    pub component_pixels: usize,
}

/// Predicted mask, upsampled and split into foreground components, for
/// inspecting more than the single scored box.
#[derive(Debug, Clone)]
pub struct MaskRegions {
    pub upsampled: ProbMask,
    pub components: Vec<Component>,
}

pub fn predict_regions(
    head: &PixelHead,
    features: &FeatureMap,
    image: ImageDims,
    threshold: MaskThreshold,
) -> Result<(ProbMask, MaskRegions)> {
    let mask = head_forward(head, features)?;
    let upsampled = bilinear_upsample(&mask, image)?;
    let cut = threshold.resolve(&upsampled)?;
    let components = connected_components(&binarize(&upsampled, cut)?);
    Ok((
        mask,
        MaskRegions {
            upsampled,
            components,
        },
    ))
}

/// One box per image: the largest foreground component of the upsampled
/// prediction, or the arg-max pixel when nothing survives the threshold.
pub fn localize_image(
    image_id: &str,
    head: &PixelHead,
    features: &FeatureMap,
    image: ImageDims,
    threshold: MaskThreshold,
) -> Result<LocalizationResult> {
    let (mask, regions) = predict_regions(head, features, image, threshold)?;
    let (bbox, component_pixels) = match largest_component(&regions.components) {
        Some(c) => (c.bbox().expect("components are non-empty"), c.len()),
        None => {
            let (y, x) = regions.upsampled.argmax();
            let b = BBox::new(x as f64, y as f64, (x + 1) as f64, (y + 1) as f64)?;
            (b, 0)
        }
    };
    Ok(LocalizationResult {
        image_id: image_id.to_string(),
        bbox,
        mask,
        upsampled: image,
        component_pixels,
    })
}

#[derive(Debug, Clone)]
pub struct LocalizationInput {
    pub image_id: String,
    pub features: FeatureMap,
    pub image: ImageDims,
}

#[derive(Debug)]
pub struct ImageFailure {
    pub image_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct DatasetLocalization {
    pub results: Vec<LocalizationResult>,
    pub failures: Vec<ImageFailure>,
}

/// Localizes every image in input order. A failing image is recorded and
/// skipped; the others still run.
pub fn localize_dataset(
    head: &PixelHead,
    inputs: &[LocalizationInput],
    threshold: MaskThreshold,
) -> DatasetLocalization {
    let outcomes: Vec<_> = inputs
        .par_iter()
        .map(|i| localize_image(&i.image_id, head, &i.features, i.image, threshold))
        .collect();
    let mut out = DatasetLocalization::default();
    for (input, outcome) in inputs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => out.results.push(r),
            Err(error) => {
                log::warn!("image {}: {error}", input.image_id);
                out.failures.push(ImageFailure {
                    image_id: input.image_id.clone(),
                    error,
                });
            }
        }
    }
    if !out.failures.is_empty() {
        log::warn!(
            "{} of {} images failed to localize",
            out.failures.len(),
            inputs.len()
        );
    }
    out
}
