//! Synthetic feature grids with a known object box per image.
//!
//! Every image gets one box on the grid. Descriptors inside it are drawn
//! around a foreground mean, the rest around a background mean, with unit
//! isotropic noise. The means sit `separation` noise deviations apart along
//! a seeded random direction.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::Map;

use crate::error::{Error, Result};
use crate::io::{write_annotations, write_feature_file, AnnotationLine};
use crate::pipeline::ImageRecord;
use crate::tensor::{BBox, FeatureMap};

/// Image pixels per grid cell along each axis.
pub const STRIDE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub images: usize,
    /// The first `train_images` images form the training split.
    pub train_images: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub depth: usize,
    /// Distance between the two cluster means in noise deviations.
    pub separation: f64,
    /// Box side length range in grid cells, inclusive.
    pub min_box: usize,
    pub max_box: usize,
    /// Probability that an image's top-1 classification flag is set.
    pub classifier_accuracy: f64,
    pub label: String,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            images: 300,
            train_images: 200,
            grid_height: 14,
            grid_width: 14,
            depth: 16,
            separation: 4.0,
            min_box: 5,
            max_box: 10,
            classifier_accuracy: 0.8,
            label: "object".into(),
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(format!("synthetic spec: {m}")));
        if self.images == 0 || self.train_images > self.images {
            return fail(format!(
                "need 1 or more images and train_images <= images, got {} / {}",
                self.train_images, self.images
            ));
        }
        if self.grid_height == 0 || self.grid_width == 0 || self.depth == 0 {
            return fail("grid and depth must be positive".into());
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return fail(format!("separation {} must be finite and >= 0", self.separation));
        }
        if self.min_box == 0
            || self.min_box > self.max_box
            || self.max_box > self.grid_height.min(self.grid_width)
        {
            return fail(format!(
                "box range {}..={} must be non-empty and fit the {}x{} grid",
                self.min_box, self.max_box, self.grid_height, self.grid_width
            ));
        }
        if !(0.0..=1.0).contains(&self.classifier_accuracy) {
            return fail("classifier_accuracy must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
}

fn unit_direction(rng: &mut ChaCha8Rng, depth: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..depth).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn generate_image(spec: &SynthSpec, index: usize, direction: &[f64]) -> Result<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let (gh, gw) = (spec.grid_height, spec.grid_width);
    let bw = rng.random_range(spec.min_box..=spec.max_box);
    let bh = rng.random_range(spec.min_box..=spec.max_box);
    let x0 = rng.random_range(0..=gw - bw);
    let y0 = rng.random_range(0..=gh - bh);

    let half = spec.separation / 2.0;
    let mut values = Vec::with_capacity(gh * gw * spec.depth);
    for y in 0..gh {
        for x in 0..gw {
            let inside = (x0..x0 + bw).contains(&x) && (y0..y0 + bh).contains(&y);
            let offset = if inside { half } else { -half };
            for &u in direction {
                let noise: f64 = StandardNormal.sample(&mut rng);
                values.push((offset * u + noise) as f32);
            }
        }
    }
    let top1_correct = rng.random_bool(spec.classifier_accuracy);

    let s = STRIDE as f64;
    let bbox = BBox::new(
        x0 as f64 * s,
        y0 as f64 * s,
        (x0 + bw) as f64 * s,
        (y0 + bh) as f64 * s,
    )?;
    Ok(ImageRecord {
        annotation: AnnotationLine {
            image_id: format!("synth_{index:05}"),
            width: gw * STRIDE,
            height: gh * STRIDE,
            label: spec.label.clone(),
            boxes: vec![bbox],
            top1_correct: Some(top1_correct),
            extra: Map::new(),
        },
        features: FeatureMap::new(gh, gw, spec.depth, values)?,
    })
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let direction = unit_direction(&mut rng, spec.depth);
    let mut images = (0..spec.images)
        .into_par_iter()
        .map(|i| generate_image(spec, i, &direction))
        .collect::<Result<Vec<_>>>()?;
    let test = images.split_off(spec.train_images);
    Ok(SynthDataset {
        train: images,
        test,
    })
}

/// Writes `<dir>/annotations.jsonl` and `<dir>/features/<image_id>.wsft`.
pub fn write_split(dir: &Path, images: &[ImageRecord]) -> Result<()> {
    let features = dir.join("features");
    fs::create_dir_all(&features)?;
    images.par_iter().try_for_each(|img| {
        write_feature_file(
            &features.join(format!("{}.wsft", img.annotation.image_id)),
            &img.features,
        )
    })?;
    let lines: Vec<AnnotationLine> = images.iter().map(|i| i.annotation.clone()).collect();
    write_annotations(&dir.join("annotations.jsonl"), &lines)
}

pub fn write_dataset(dir: &Path, dataset: &SynthDataset) -> Result<()> {
    write_split(&dir.join("train"), &dataset.train)?;
    write_split(&dir.join("test"), &dataset.test)
}
