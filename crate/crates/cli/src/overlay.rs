//! PNG overlays: mask heat map, ground-truth boxes in green, prediction in red.

use image::{Rgb, RgbImage};
use wsfl_core::{BBox, ProbMask};

const GT_COLOR: Rgb<u8> = Rgb([40, 220, 60]);
const PRED_COLOR: Rgb<u8> = Rgb([235, 40, 40]);

fn heat(p: f64) -> Rgb<u8> {
    let v = (p.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([v, v / 2, 255 - v])
}

fn outline(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let clamp = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi - 1);
    let (x1, y1) = (clamp(b.x1.floor(), w), clamp(b.y1.floor(), h));
    let (x2, y2) = (clamp(b.x2.ceil() - 1.0, w), clamp(b.y2.ceil() - 1.0, h));
    for x in x1..=x2 {
        img.put_pixel(x, y1, color);
        img.put_pixel(x, y2, color);
    }
    for y in y1..=y2 {
        img.put_pixel(x1, y, color);
        img.put_pixel(x2, y, color);
    }
}

pub fn render(mask: &ProbMask, gt: &[BBox], predicted: &BBox) -> RgbImage {
    let d = mask.dims();
    let (h, w) = (d.height, d.width);
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| heat(mask.get(y as usize, x as usize)));
    for b in gt {
        outline(&mut img, b, GT_COLOR);
    }
    outline(&mut img, predicted, PRED_COLOR);
    img
}
