//! Co-localization by deep descriptor transformation.
//!
//! All descriptors of one category are pooled, centered, and projected onto
//! the dominant principal axis of their covariance. Positions projecting
//! positive are taken as the common object; the largest connected positive
//! region gives one pseudo box per image.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{largest_component_bbox, BBox, BinaryMask, FeatureMap, ImageDims};

pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 1000;
/// The iterated operator is `C^(2^SQUARINGS)`, which shares its dominant
/// eigenvector with `C` but separates it from the runner-up much faster.
const SQUARINGS: usize = 6;
const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DdtModel {
    pub category: String,
    pub mean: Vec<f64>,
    /// Unit-norm dominant eigenvector of the descriptor covariance.
    pub axis: Vec<f64>,
    pub eigenvalue: f64,
}

impl DdtModel {
    pub fn depth(&self) -> usize {
        self.mean.len()
    }

    fn project_descriptor(&self, f: &[f32]) -> f64 {
        f.iter()
            .zip(&self.mean)
            .zip(&self.axis)
            .map(|((&v, &m), &a)| (v as f64 - m) * a)
            .sum()
    }
}

/// Signed projection of every grid position onto the model axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ProjectionMap {
    pub fn positive_mask(&self) -> BinaryMask {
        let bits = self.values.iter().map(|&v| v > 0.0).collect();
        BinaryMask::new(self.height, self.width, bits).expect("projection grid is non-empty")
    }
}

/// Row-major `d x d` symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SymMatrix {
    pub(crate) dim: usize,
    pub(crate) data: Vec<f64>,
}

impl SymMatrix {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    fn squared_normalized(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                let row_i = &self.data[i * d..(i + 1) * d];
                let row_j = &self.data[j * d..(j + 1) * d];
                let v: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                out.data[i * d + j] = v;
                out.data[j * d + i] = v;
            }
        }
        let norm = out.data.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.data.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

fn check_depths(features: &[FeatureMap], depth: usize) -> Result<()> {
    match features.iter().position(|f| f.depth() != depth) {
        Some(i) => Err(Error::invalid(format!(
            "feature map {i} has depth {}, expected {depth}",
            features[i].depth()
        ))),
        None => Ok(()),
    }
}

/// Sample mean and covariance over every position of every map, accumulated
/// in f64. Per-image partials are reduced in input order.
pub(crate) fn descriptor_moments(features: &[FeatureMap]) -> (Vec<f64>, SymMatrix, usize) {
    let d = features[0].depth();
    let n: usize = features.iter().map(FeatureMap::positions).sum();

    let sums: Vec<Vec<f64>> = features
        .par_iter()
        .map(|f| {
            let mut s = vec![0.0; d];
            for desc in f.descriptors() {
                s.iter_mut().zip(desc).for_each(|(a, &v)| *a += v as f64);
            }
            s
        })
        .collect();
    let mut mean = vec![0.0; d];
    for s in &sums {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let partials: Vec<Vec<f64>> = features
        .par_iter()
        .map(|f| {
            let mut acc = vec![0.0; d * d];
            let mut centered = vec![0.0; d];
            for desc in f.descriptors() {
                for ((c, &v), m) in centered.iter_mut().zip(desc).zip(&mean) {
                    *c = v as f64 - m;
                }
                for i in 0..d {
                    let ci = centered[i];
                    for j in i..d {
                        acc[i * d + j] += ci * centered[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut cov = SymMatrix::zeros(d);
    for p in &partials {
        cov.data.iter_mut().zip(p).for_each(|(c, v)| *c += v);
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.data[i * d + j] / n as f64;
            cov.data[i * d + j] = v;
            cov.data[j * d + i] = v;
        }
    }
    (mean, cov, n)
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Dominant eigenvector of a positive semi-definite matrix by power
/// iteration from a seeded random start.
pub(crate) fn dominant_eigenvector(cov: &SymMatrix, seed: u64) -> Result<Vec<f64>> {
    let scale = cov.trace();
    let mut op = SymMatrix {
        dim: cov.dim,
        data: cov.data.iter().map(|v| v / scale).collect(),
    };
    for _ in 0..SQUARINGS {
        op = op.squared_normalized();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..cov.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);

    for iteration in 0..POWER_MAX_ITERATIONS {
        let mut next = op.mul_vec(&v);
        if normalize(&mut next) == 0.0 {
            return Err(Error::DegenerateModel(
                "power iteration collapsed to the zero vector".into(),
            ));
        }
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = next;
        if delta < POWER_TOLERANCE {
            log::debug!("power iteration converged after {} steps", iteration + 1);
            break;
        }
    }
    Ok(v)
}

/// Learns the co-localization axis for one category.
pub fn fit_ddt(category: &str, features: &[FeatureMap], seed: u64) -> Result<DdtModel> {
    let first = features
        .first()
        .ok_or_else(|| Error::invalid("co-localization needs at least one feature map"))?;
    check_depths(features, first.depth())?;
    let total: usize = features.iter().map(FeatureMap::positions).sum();
    if total < 2 {
        return Err(Error::invalid(
            "co-localization needs at least two descriptor positions",
        ));
    }

    let (mean, cov, _) = descriptor_moments(features);
    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    if cov.trace() <= 1e-24 * mean_sq.max(1.0) {
        return Err(Error::DegenerateModel(format!(
            "category {category:?}: all descriptors are identical"
        )));
    }

    let mut axis = dominant_eigenvector(&cov, seed)?;
    let cv = cov.mul_vec(&axis);
    let eigenvalue = axis.iter().zip(&cv).map(|(a, b)| a * b).sum::<f64>().max(0.0);
    let residual = cv
        .iter()
        .zip(&axis)
        .map(|(c, a)| (c - eigenvalue * a).powi(2))
        .sum::<f64>()
        .sqrt();
    if residual >= RESIDUAL_TOLERANCE * eigenvalue.max(1.0) {
        return Err(Error::DegenerateModel(format!(
            "category {category:?}: eigen-residual {residual:e} after {POWER_MAX_ITERATIONS} iterations"
        )));
    }

    let mut model = DdtModel {
        category: category.to_string(),
        mean,
        axis: axis.clone(),
        eigenvalue,
    };
    // orient the axis so the strongest response projects positive
    let mut strongest = 0.0f64;
    for f in features {
        for desc in f.descriptors() {
            let p = model.project_descriptor(desc);
            if p.abs() > strongest.abs() {
                strongest = p;
            }
        }
    }
    if strongest < 0.0 {
        axis.iter_mut().for_each(|a| *a = -*a);
        model.axis = axis;
    }
    Ok(model)
}

pub fn ddt_project(model: &DdtModel, features: &FeatureMap) -> Result<ProjectionMap> {
    if features.depth() != model.depth() {
        return Err(Error::invalid(format!(
            "feature depth {} does not match model depth {}",
            features.depth(),
            model.depth()
        )));
    }
    Ok(ProjectionMap {
        height: features.height(),
        width: features.width(),
        values: features
            .descriptors()
            .map(|d| model.project_descriptor(d))
            .collect(),
    })
}

/// Scales a grid-coordinate box to pixel coordinates.
pub fn grid_box_to_pixels(b: &BBox, grid_h: usize, grid_w: usize, image: ImageDims) -> BBox {
    BBox {
        x1: b.x1 * image.width as f64 / grid_w as f64,
        y1: b.y1 * image.height as f64 / grid_h as f64,
        x2: b.x2 * image.width as f64 / grid_w as f64,
        y2: b.y2 * image.height as f64 / grid_h as f64,
    }
}

/// One pseudo box per image: the largest positive region, or the whole
/// image when nothing projects positive.
pub fn ddt_pseudo_box(model: &DdtModel, features: &FeatureMap, image: ImageDims) -> Result<BBox> {
    let projection = ddt_project(model, features)?;
    Ok(match largest_component_bbox(&projection.positive_mask()) {
        Some(b) => grid_box_to_pixels(&b, features.height(), features.width(), image),
        None => image.full_box(),
    })
}
