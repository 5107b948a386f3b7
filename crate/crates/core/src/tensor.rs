//! Dense grids, masks and box geometry shared by the rest of the crate.
//!
//! Grids are stored row-major. A [`FeatureMap`] keeps its channels innermost,
//! so the descriptor at `(y, x)` is the contiguous slice starting at
//! `(y * width + x) * depth`.

use std::collections::VecDeque;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageDims {
    pub height: usize,
    pub width: usize,
}

impl ImageDims {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn full_box(&self) -> BBox {
        BBox {
            x1: 0.0,
            y1: 0.0,
            x2: self.width as f64,
            y2: self.height as f64,
        }
    }
}

/// Axis-aligned half-open rectangle `[x1, x2) x [y1, y2)` in continuous
/// pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("box {coords:?} has non-finite coordinates")));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::invalid(format!("box {coords:?} has negative coordinates")));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid(format!(
                "box {coords:?} is empty or not in (x1, y1, x2, y2) coordinate order"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn fits(&self, dims: ImageDims) -> bool {
        self.x2 <= dims.width as f64 && self.y2 <= dims.height as f64
    }

    pub fn check_within(&self, dims: ImageDims) -> Result<()> {
        if self.fits(dims) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "box {:?} exceeds image bounds {}x{} (width x height)",
                self.to_array(),
                dims.width,
                dims.height
            )))
        }
    }

    /// Pixel `(x, y)` lies inside iff `x1 <= x < x2` and `y1 <= y < y2`.
    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as f64, y as f64);
        self.x1 <= x && x < self.x2 && self.y1 <= y && y < self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> BBox {
        BBox {
            x1: self.x1 * sx,
            y1: self.y1 * sy,
            x2: self.x2 * sx,
            y2: self.y2 * sy,
        }
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(deserializer)?;
        BBox::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// Per-image `h x w x d` descriptor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    depth: usize,
    values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, depth: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || depth == 0 {
            return Err(Error::invalid(format!(
                "feature map dims must be positive, got {height}x{width}x{depth}"
            )));
        }
        let expected = height * width * depth;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "feature map {height}x{width}x{depth} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature value {i} is not finite")));
        }
        Ok(Self {
            height,
            width,
            depth,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn descriptor(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.depth;
        &self.values[start..start + self.depth]
    }

    /// Descriptors in raster order.
    pub fn descriptors(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.depth)
    }
}

/// Per-position foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ProbMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(height, width, values.len())?;
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid(format!(
                "mask value {} at index {i} is outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims {
            height: self.height,
            width: self.width,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Raster position of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_grid(height, width, bits.len())?;
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_targets(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
    }
}

fn check_grid(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::invalid(format!(
            "mask dims must be positive, got {height}x{width}"
        )));
    }
    if len != height * width {
        return Err(Error::invalid(format!(
            "mask {height}x{width} needs {} values, got {len}",
            height * width
        )));
    }
    Ok(())
}

/// Source-grid sample positions for one output axis under the half-pixel
/// convention: (lower index, upper index, weight of upper).
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}

/// Resizes a mask with bilinear interpolation, half-pixel centers and edge
/// clamping.
pub fn bilinear_upsample(mask: &ProbMask, target: ImageDims) -> Result<ProbMask> {
    if target.height == 0 || target.width == 0 {
        return Err(Error::invalid("upsample target dims must be positive"));
    }
    let xs = axis_taps(mask.width, target.width);
    let ys = axis_taps(mask.height, target.height);
    let mut out = Vec::with_capacity(target.height * target.width);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(mask.get(y0, x0), mask.get(y0, x1), tx);
            let bottom = lerp(mask.get(y1, x0), mask.get(y1, x1), tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    ProbMask::new(target.height, target.width, out)
}

/// Bit is set iff the value is at least `threshold`.
pub fn binarize(mask: &ProbMask, threshold: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!(
            "binarization threshold {threshold} outside [0, 1]"
        )));
    }
    let bits = mask.values.iter().map(|&v| v >= threshold).collect();
    BinaryMask::new(mask.height, mask.width, bits)
}

/// One 8-connected region. Pixels are `(y, x)` in BFS discovery order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(usize, usize)>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Tight half-open box around the component.
    pub fn bbox(&self) -> Option<BBox> {
        let &(y0, x0) = self.pixels.first()?;
        let (mut ymin, mut ymax, mut xmin, mut xmax) = (y0, y0, x0, x0);
        for &(y, x) in &self.pixels[1..] {
            ymin = ymin.min(y);
            ymax = ymax.max(y);
            xmin = xmin.min(x);
            xmax = xmax.max(x);
        }
        Some(BBox {
            x1: xmin as f64,
            y1: ymin as f64,
            x2: (xmax + 1) as f64,
            y2: (ymax + 1) as f64,
        })
    }
}

/// Labels the set bits into 8-connected components, ordered by the raster
/// position of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            pixels.push((y, x));
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask.bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        components.push(Component { pixels });
    }
    components
}

/// Picks the component with the most pixels; the earliest one wins ties.
pub fn largest_component(components: &[Component]) -> Option<&Component> {
    components
        .iter()
        .fold(None, |best: Option<&Component>, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        })
}

pub fn largest_component_bbox(mask: &BinaryMask) -> Option<BBox> {
    largest_component(&connected_components(mask)).and_then(Component::bbox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_bilinear(mask: &ProbMask, target: ImageDims) -> Vec<f64> {
        let (h, w) = (mask.height() as f64, mask.width() as f64);
        let mut out = Vec::new();
        for yo in 0..target.height {
            for xo in 0..target.width {
                let sy = ((yo as f64 + 0.5) * h / target.height as f64 - 0.5).clamp(0.0, h - 1.0);
                let sx = ((xo as f64 + 0.5) * w / target.width as f64 - 0.5).clamp(0.0, w - 1.0);
                let (y0, x0) = (sy.floor(), sx.floor());
                let (y1, x1) = ((y0 + 1.0).min(h - 1.0), (x0 + 1.0).min(w - 1.0));
                let (fy, fx) = (sy - y0, sx - x0);
                let v = |y: f64, x: f64| mask.get(y as usize, x as usize);
                out.push(
                    v(y0, x0) * (1.0 - fy) * (1.0 - fx)
                        + v(y0, x1) * (1.0 - fy) * fx
                        + v(y1, x0) * fy * (1.0 - fx)
                        + v(y1, x1) * fy * fx,
                );
            }
        }
        out
    }

    #[test]
    fn upsample_constant_field() {
        let mask = ProbMask::filled(14, 14, 0.7).unwrap();
        let up = bilinear_upsample(&mask, ImageDims::new(224, 224).unwrap()).unwrap();
        assert!(up.values().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn upsample_single_cell() {
        let mask = ProbMask::filled(1, 1, 0.31).unwrap();
        let up = bilinear_upsample(&mask, ImageDims::new(5, 9).unwrap()).unwrap();
        assert_eq!(up.dims(), ImageDims::new(5, 9).unwrap());
        assert!(up.values().iter().all(|&v| v == 0.31));
    }

    #[test]
    fn upsample_checkerboard_matches_formula() {
        let mask = ProbMask::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let target = ImageDims::new(4, 4).unwrap();
        let up = bilinear_upsample(&mask, target).unwrap();
        let expected = reference_bilinear(&mask, target);
        for (a, b) in up.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // corners clamp to the source cells, interior cells blend
        assert_eq!(up.get(0, 0), 0.0);
        assert!((up.get(0, 1) - 0.25).abs() < 1e-12);
        assert!((up.get(1, 1) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn upsample_rejects_zero_target() {
        let mask = ProbMask::filled(2, 2, 0.5).unwrap();
        let err = bilinear_upsample(&mask, ImageDims { height: 0, width: 3 });
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn empty_mask_is_rejected() {
        assert!(ProbMask::new(0, 3, vec![]).is_err());
    }

    #[test]
    fn binarize_boundaries() {
        let m = ProbMask::filled(2, 2, 0.7).unwrap();
        assert_eq!(binarize(&m, 0.5).unwrap().count_ones(), 4);
        assert_eq!(binarize(&m, 0.7).unwrap().count_ones(), 4);
        let m = ProbMask::new(1, 2, vec![0.1, 0.25]).unwrap();
        assert_eq!(binarize(&m, 0.2).unwrap().bits(), &[false, true]);
        assert!(binarize(&m, 1.5).is_err());
        assert!(binarize(&m, -0.1).is_err());
    }

    #[test]
    fn two_blocks_two_components() {
        let mut m = BinaryMask::zeros(6, 6).unwrap();
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1), (4, 4), (4, 5), (5, 4), (5, 5)] {
            m.set(y, x, true);
        }
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.len() == 4));
        assert_eq!(comps[0].pixels[0], (0, 0));
    }

    #[test]
    fn diagonal_neighbours_join() {
        let m = BinaryMask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(connected_components(&m).len(), 1);
    }

    #[test]
    fn all_zero_has_no_components() {
        let m = BinaryMask::zeros(4, 4).unwrap();
        assert!(connected_components(&m).is_empty());
        assert_eq!(largest_component_bbox(&m), None);
    }

    #[test]
    fn one_pixel_box_is_tight() {
        let mut m = BinaryMask::zeros(8, 8).unwrap();
        m.set(3, 5, true);
        assert_eq!(
            largest_component_bbox(&m),
            Some(BBox::new(5.0, 3.0, 6.0, 4.0).unwrap())
        );
    }

    #[test]
    fn largest_block_wins() {
        let mut m = BinaryMask::zeros(6, 6).unwrap();
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1), (4, 4)] {
            m.set(y, x, true);
        }
        assert_eq!(
            largest_component_bbox(&m),
            Some(BBox::new(0.0, 0.0, 2.0, 2.0).unwrap())
        );
    }

    #[test]
    fn equal_sizes_prefer_first_in_raster_order() {
        let mut m = BinaryMask::zeros(5, 5).unwrap();
        m.set(4, 0, true);
        m.set(0, 4, true);
        assert_eq!(
            largest_component_bbox(&m),
            Some(BBox::new(4.0, 0.0, 5.0, 1.0).unwrap())
        );
    }

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(5.0, 0.0, 5.0, 3.0).is_err());
        assert!(BBox::new(0.0, 4.0, 2.0, 1.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 2.0, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        let err = serde_json::from_str::<BBox>("[0, 10, 5, 3]").unwrap_err();
        assert!(err.to_string().contains("coordinate order"));
    }

    fn flood_fill_sizes(mask: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
        // recursive-stack flood fill, scanning row by row
        let (h, w) = (mask.height() as i64, mask.width() as i64);
        let mut label = vec![usize::MAX; (h * w) as usize];
        let mut comps = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let idx = (y * w + x) as usize;
                if !mask.bits()[idx] || label[idx] != usize::MAX {
                    continue;
                }
                let id = comps.len();
                let mut stack = vec![(y, x)];
                let mut pix = Vec::new();
                label[idx] = id;
                while let Some((cy, cx)) = stack.pop() {
                    pix.push((cy as usize, cx as usize));
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (ny, nx) = (cy + dy, cx + dx);
                            if ny < 0 || nx < 0 || ny >= h || nx >= w {
                                continue;
                            }
                            let j = (ny * w + nx) as usize;
                            if mask.bits()[j] && label[j] == usize::MAX {
                                label[j] = id;
                                stack.push((ny, nx));
                            }
                        }
                    }
                }
                comps.push(pix);
            }
        }
        comps
    }

    fn random_mask(seed: u64, h: usize, w: usize, density: f64) -> BinaryMask {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let bits = (0..h * w).map(|_| rng.random_bool(density)).collect();
        BinaryMask::new(h, w, bits).unwrap()
    }

    #[test]
    fn component_count_matches_flood_fill_oracle() {
        for seed in 0..1000 {
            let m = random_mask(seed, 20, 20, 0.15 + (seed % 7) as f64 * 0.08);
            let ours = connected_components(&m);
            let oracle = flood_fill_sizes(&m);
            assert_eq!(ours.len(), oracle.len(), "seed {seed}");

            let best = oracle.iter().fold(None::<&Vec<(usize, usize)>>, |b, c| match b {
                Some(b) if b.len() >= c.len() => Some(b),
                _ => Some(c),
            });
            let expected = best.map(|pix| {
                let xmin = pix.iter().map(|p| p.1).min().unwrap();
                let xmax = pix.iter().map(|p| p.1).max().unwrap();
                let ymin = pix.iter().map(|p| p.0).min().unwrap();
                let ymax = pix.iter().map(|p| p.0).max().unwrap();
                BBox::new(xmin as f64, ymin as f64, (xmax + 1) as f64, (ymax + 1) as f64).unwrap()
            });
            assert_eq!(largest_component_bbox(&m), expected, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn upsample_preserves_range_and_constants(
            h in 1usize..9, w in 1usize..9, th in 1usize..40, tw in 1usize..40,
            vals in proptest::collection::vec(0.0f64..=1.0, 64), c in 0.0f64..=1.0,
        ) {
            let mask = ProbMask::new(h, w, vals[..h * w].to_vec()).unwrap();
            let target = ImageDims::new(th, tw).unwrap();
            let up = bilinear_upsample(&mask, target).unwrap();
            let lo = mask.values().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mask.max_value();
            prop_assert!(up.values().iter().all(|&v| v >= lo && v <= hi));

            let flat = ProbMask::filled(h, w, c).unwrap();
            let up = bilinear_upsample(&flat, target).unwrap();
            prop_assert!(up.values().iter().all(|&v| v == c));

            let same = bilinear_upsample(&mask, mask.dims()).unwrap();
            prop_assert_eq!(same.values(), mask.values());
        }

        #[test]
        fn binarize_is_monotone(vals in proptest::collection::vec(0.0f64..=1.0, 16),
                                t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let m = ProbMask::new(4, 4, vals).unwrap();
            let a = binarize(&m, lo).unwrap();
            let b = binarize(&m, hi).unwrap();
            prop_assert!(a.bits().iter().zip(b.bits()).all(|(&x, &y)| x || !y));
        }

        #[test]
        fn components_partition_and_box_is_tight(seed in 0u64..10_000, density in 0.05f64..0.9) {
            let m = random_mask(seed, 12, 15, density);
            let comps = connected_components(&m);
            let mut covered = [false; 12 * 15];
            for c in &comps {
                for &(y, x) in &c.pixels {
                    prop_assert!(m.get(y, x));
                    prop_assert!(!covered[y * 15 + x]);
                    covered[y * 15 + x] = true;
                }
            }
            prop_assert_eq!(&covered[..], m.bits());

            if let Some(best) = largest_component(&comps) {
                let b = best.bbox().unwrap();
                prop_assert!(best.pixels.iter().all(|&(y, x)| b.contains_pixel(x, y)));
                let on = |f: &dyn Fn(&(usize, usize)) -> bool| best.pixels.iter().any(f);
                prop_assert!(on(&|p| p.1 as f64 == b.x1));
                prop_assert!(on(&|p| p.1 as f64 == b.x2 - 1.0));
                prop_assert!(on(&|p| p.0 as f64 == b.y1));
                prop_assert!(on(&|p| p.0 as f64 == b.y2 - 1.0));
            }
        }
    }
}
