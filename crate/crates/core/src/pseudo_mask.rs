//! Box annotations to binary foreground masks at image and feature-grid
//! resolution.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{BBox, BinaryMask, ImageDims};

/// Feature-grid resolution paired with the image it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskGrid {
    pub height: usize,
    pub width: usize,
    pub image: ImageDims,
}

impl MaskGrid {
    pub fn new(height: usize, width: usize, image: ImageDims) -> Result<Self> {
        if height == 0 || width == 0 || height > image.height || width > image.width {
            return Err(Error::invalid(format!(
                "grid {height}x{width} must be between 1x1 and the image size {}x{}",
                image.height, image.width
            )));
        }
        Ok(Self {
            height,
            width,
            image,
        })
    }

    /// Pixel index range `[lo, hi)` assigned to grid cell `g` along an axis
    /// of `pixels` pixels split into `cells` cells.
    fn cell_span(g: usize, cells: usize, pixels: usize) -> (usize, usize) {
        let lo = (g * pixels).div_ceil(cells);
        let hi = ((g + 1) * pixels).div_ceil(cells);
        (lo, hi)
    }
}

fn check_boxes(boxes: &[BBox], image: ImageDims) -> Result<()> {
    boxes.iter().try_for_each(|b| b.check_within(image))
}

/// Pixel index range covered by `[lo, hi)` along one axis.
fn pixel_range(lo: f64, hi: f64) -> std::ops::Range<usize> {
    (lo.ceil() as usize)..(hi.ceil() as usize)
}

/// Full-resolution union mask of the boxes.
pub fn boxes_to_hr_mask(boxes: &[BBox], image: ImageDims) -> Result<BinaryMask> {
    check_boxes(boxes, image)?;
    let mut mask = BinaryMask::zeros(image.height, image.width)?;
    for b in boxes {
        for y in pixel_range(b.y1, b.y2) {
            for x in pixel_range(b.x1, b.x2) {
                mask.set(y, x, true);
            }
        }
    }
    Ok(mask)
}

/// Grid-resolution mask: a cell is foreground when at least half of its
/// pixels are covered by the union of the boxes.
pub fn boxes_to_lr_mask(boxes: &[BBox], grid: MaskGrid) -> Result<BinaryMask> {
    let hr = boxes_to_hr_mask(boxes, grid.image)?;
    let (h, w) = (grid.image.height, grid.image.width);

    // summed-area table with a zero border row/column
    let mut sat = vec![0u32; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += hr.get(y, x) as u32;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let count = |y0: usize, y1: usize, x0: usize, x1: usize| {
        sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0]
            - sat[y0 * (w + 1) + x1]
            - sat[y1 * (w + 1) + x0]
    };

    let mut out = BinaryMask::zeros(grid.height, grid.width)?;
    for gy in 0..grid.height {
        let (y0, y1) = MaskGrid::cell_span(gy, grid.height, h);
        for gx in 0..grid.width {
            let (x0, x1) = MaskGrid::cell_span(gx, grid.width, w);
            let area = ((y1 - y0) * (x1 - x0)) as u32;
            out.set(gy, gx, 2 * count(y0, y1, x0, x1) >= area);
        }
    }
    Ok(out)
}

/// Where the training boxes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSource {
    /// Co-localization output, exactly one box per image.
    Pseudo,
    /// Ground-truth annotations, possibly several boxes per image.
    GroundTruth,
}

#[derive(Debug, Clone)]
pub struct MaskRequest {
    pub image_id: String,
    pub grid_height: usize,
    pub grid_width: usize,
    pub image: ImageDims,
    pub boxes: Vec<BBox>,
}

pub fn generate_training_masks(
    requests: &[MaskRequest],
    source: BoxSource,
) -> Result<Vec<BinaryMask>> {
    requests
        .par_iter()
        .map(|r| {
            if source == BoxSource::Pseudo && r.boxes.is_empty() {
                return Err(Error::invalid(format!(
                    "image {}: pseudo-box mode needs a box for every image",
                    r.image_id
                )));
            }
            let grid = MaskGrid::new(r.grid_height, r.grid_width, r.image)?;
            boxes_to_lr_mask(&r.boxes, grid)
                .map_err(|e| Error::invalid(format!("image {}: {e}", r.image_id)))
        })
        .collect()
}
