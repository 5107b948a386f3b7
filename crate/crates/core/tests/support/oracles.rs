//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use wsfl_core::metrics::{DetectionRecord, GroundTruthRecord};
use wsfl_core::{BBox, ProbMask};

/// All eigenpairs of a symmetric `d x d` row-major matrix by cyclic Jacobi
/// rotations, sorted by descending eigenvalue.
pub fn jacobi_eigen(matrix: &[f64], d: usize) -> Vec<(f64, Vec<f64>)> {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * d + j] * a[i * d + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|j| (a[j * d + j], (0..d).map(|k| v[k * d + j]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

/// Sample covariance (divided by N) of row vectors.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let mut c = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    c.iter_mut().for_each(|x| *x /= n);
    c
}

/// Low-resolution mask by counting covered pixels per cell. Pixel `p` belongs
/// to cell `floor(p * cells / pixels)` and is covered when its left/top edge
/// lies inside a box.
pub fn coverage_mask(boxes: &[BBox], grid_h: usize, grid_w: usize, img_h: usize, img_w: usize) -> Vec<bool> {
    let mut covered = vec![0usize; grid_h * grid_w];
    let mut total = vec![0usize; grid_h * grid_w];
    for y in 0..img_h {
        for x in 0..img_w {
            let cell = (y * grid_h / img_h) * grid_w + x * grid_w / img_w;
            total[cell] += 1;
            let (px, py) = (x as f64, y as f64);
            if boxes.iter().any(|b| b.x1 <= px && px < b.x2 && b.y1 <= py && py < b.y2) {
                covered[cell] += 1;
            }
        }
    }
    covered.iter().zip(&total).map(|(&c, &t)| 2 * c >= t).collect()
}

/// Mean mask value over pixels whose unit square overlaps the open box.
pub fn objectness_oracle(mask: &ProbMask, b: &BBox) -> Option<f64> {
    let d = mask.dims();
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..d.height {
        for x in 0..d.width {
            let (px, py) = (x as f64, y as f64);
            if px < b.x2 && px + 1.0 > b.x1 && py < b.y2 && py + 1.0 > b.y1 {
                sum += mask.get(y, x);
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / ((a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter)
}

/// Per-class 11-point AP and their mean over classes with ground truth.
pub fn brute_force_map(
    dets: &[DetectionRecord],
    gt: &[GroundTruthRecord],
    iou_threshold: f64,
) -> (f64, BTreeMap<String, f64>) {
    let mut classes: Vec<String> = gt.iter().map(|g| g.label.clone()).collect();
    classes.sort();
    classes.dedup();
    let mut per_class = BTreeMap::new();
    for class in &classes {
        let mut gts: Vec<(String, BBox, bool)> = gt
            .iter()
            .filter(|g| &g.label == class)
            .flat_map(|g| g.boxes.iter().map(move |b| (g.image_id.clone(), *b, false)))
            .collect();
        let npos = gts.len();
        let mut ranked: Vec<&DetectionRecord> = dets.iter().filter(|d| &d.class == class).collect();
        ranked.sort_by(|a, b| {
            let key = |d: &DetectionRecord| (d.image_id.clone(), d.bbox.y1, d.bbox.x1, d.bbox.y2, d.bbox.x2);
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| key(a).partial_cmp(&key(b)).unwrap())
        });
        let mut tp = 0usize;
        let mut curve = Vec::new();
        for (rank, det) in ranked.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (k, (img, b, used)) in gts.iter().enumerate() {
                if *used || img != &det.image_id {
                    continue;
                }
                let o = overlap(&det.bbox, b);
                if best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((k, o));
                }
            }
            if let Some((k, o)) = best {
                if o >= iou_threshold {
                    gts[k].2 = true;
                    tp += 1;
                }
            }
            curve.push((tp, tp as f64 / (rank + 1) as f64));
        }
        let ap = if npos == 0 {
            0.0
        } else {
            (0..=10)
                .map(|step| {
                    curve
                        .iter()
                        .filter(|(t, _)| t * 10 >= step * npos)
                        .map(|&(_, p)| p)
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 11.0
        };
        per_class.insert(class.clone(), ap);
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    (map, per_class)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += h;
            down[i] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}
