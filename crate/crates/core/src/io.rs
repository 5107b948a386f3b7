//! On-disk formats.
//!
//! Feature file (`.wsft`), little-endian:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 4     | magic `WSFT`                    |
//! | 2     | version, `u16` = 1              |
//! | 12    | `h`, `w`, `d` as `u32`          |
//! | 4·hwd | `f32` values, `(y, x, c)` order |
//!
//! Head checkpoint (`.wsfh`): magic `WSFH`, `u16` version 1, `u32` depth,
//! then `depth + 1` `f64` values (weights, then bias).
//!
//! Records are JSON lines, one object per line.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::head::PixelHead;
use crate::metrics::{DetectionRecord, GroundTruthRecord};
use crate::tensor::{BBox, BinaryMask, FeatureMap, ImageDims, ProbMask};

pub const FEATURE_MAGIC: &[u8; 4] = b"WSFT";
pub const HEAD_MAGIC: &[u8; 4] = b"WSFH";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.bytes.len() as u64,
                message: format!(
                    "file truncated while reading {what}: needed {n} bytes at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::Parse {
                offset: 0,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let offset = self.pos as u64;
        let v = u16::from_le_bytes(self.take(2, "version")?.try_into().unwrap());
        if v != FORMAT_VERSION {
            return Err(Error::Parse {
                offset,
                message: format!("unsupported version {v}"),
            });
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub fn encode_feature_map(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.values().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [map.height(), map.width(), map.depth()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap> {
    let mut cur = Cursor::new(bytes);
    cur.magic(FEATURE_MAGIC)?;
    cur.version()?;
    let h = cur.u32("height")? as usize;
    let w = cur.u32("width")? as usize;
    let d = cur.u32("depth")? as usize;
    if h == 0 || w == 0 || d == 0 {
        return Err(Error::Parse {
            offset: 6,
            message: format!("zero dimension in {h}x{w}x{d}"),
        });
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .ok_or_else(|| Error::Parse {
            offset: 6,
            message: format!("dims {h}x{w}x{d} overflow"),
        })?;
    let payload_start = cur.pos;
    let payload = cur.take(count.saturating_mul(4), "payload")?;
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse {
                offset: (payload_start + 4 * i) as u64,
                message: format!("non-finite value {v}"),
            });
        }
        values.push(v);
    }
    cur.finish()?;
    FeatureMap::new(h, w, d, values)
}

pub fn write_feature_file(path: &Path, map: &FeatureMap) -> Result<()> {
    fs::write(path, encode_feature_map(map))?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMap> {
    decode_feature_map(&fs::read(path)?)
}

/// Masks are stored as single-channel feature files.
pub fn write_prob_mask(path: &Path, mask: &ProbMask) -> Result<()> {
    let values = mask.values().iter().map(|&v| v as f32).collect();
    write_feature_file(path, &FeatureMap::new(mask.height(), mask.width(), 1, values)?)
}

pub fn read_prob_mask(path: &Path) -> Result<ProbMask> {
    let map = read_feature_file(path)?;
    if map.depth() != 1 {
        return Err(Error::invalid(format!(
            "{}: mask files have depth 1, found {}",
            path.display(),
            map.depth()
        )));
    }
    ProbMask::new(
        map.height(),
        map.width(),
        map.values().iter().map(|&v| v as f64).collect(),
    )
}

pub fn write_binary_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let values = mask.as_targets().map(|v| v as f32).collect();
    write_feature_file(path, &FeatureMap::new(mask.height(), mask.width(), 1, values)?)
}

pub fn read_binary_mask(path: &Path) -> Result<BinaryMask> {
    let mask = read_prob_mask(path)?;
    if let Some(v) = mask.values().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!(
            "{}: binary mask holds value {v}",
            path.display()
        )));
    }
    BinaryMask::new(
        mask.height(),
        mask.width(),
        mask.values().iter().map(|&v| v == 1.0).collect(),
    )
}

pub fn encode_head(head: &PixelHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * (head.depth() + 1));
    out.extend_from_slice(HEAD_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(head.depth() as u32).to_le_bytes());
    for v in head.weights.iter().chain(std::iter::once(&head.bias)) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_head(bytes: &[u8]) -> Result<PixelHead> {
    let mut cur = Cursor::new(bytes);
    cur.magic(HEAD_MAGIC)?;
    cur.version()?;
    let d = cur.u32("depth")? as usize;
    if d == 0 {
        return Err(Error::Parse {
            offset: 6,
            message: "head depth is zero".into(),
        });
    }
    let start = cur.pos;
    let payload = cur.take((d + 1) * 8, "parameters")?;
    let mut params = Vec::with_capacity(d + 1);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse {
                offset: (start + 8 * i) as u64,
                message: format!("non-finite parameter {v}"),
            });
        }
        params.push(v);
    }
    cur.finish()?;
    let bias = params.pop().expect("d + 1 values");
    PixelHead::new(params, bias)
}

pub fn write_head(path: &Path, head: &PixelHead) -> Result<()> {
    fs::write(path, encode_head(head))?;
    Ok(())
}

pub fn read_head(path: &Path) -> Result<PixelHead> {
    decode_head(&fs::read(path)?)
}

/// Parses one JSON object per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn check_unique<'a>(ids: impl Iterator<Item = (usize, &'a str)>) -> Result<()> {
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            return Err(Error::Record {
                line,
                message: format!("duplicate image id {id:?}"),
            });
        }
    }
    Ok(())
}

/// One annotated image. Fields this crate does not know are carried through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub label: String,
    #[serde(default)]
    pub boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top1_correct: Option<bool>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AnnotationLine {
    pub fn dims(&self) -> Result<ImageDims> {
        ImageDims::new(self.height, self.width)
    }

    pub fn to_ground_truth(&self) -> Result<GroundTruthRecord> {
        if self.boxes.is_empty() {
            return Err(Error::invalid(format!(
                "image {} has no ground-truth boxes",
                self.image_id
            )));
        }
        Ok(GroundTruthRecord {
            image_id: self.image_id.clone(),
            dims: self.dims()?,
            label: self.label.clone(),
            boxes: self.boxes.clone(),
        })
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>> {
    let lines: Vec<AnnotationLine> = read_jsonl(path)?;
    check_unique(lines.iter().enumerate().map(|(i, l)| (i + 1, l.image_id.as_str())))?;
    for (i, a) in lines.iter().enumerate() {
        let dims = a.dims().map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        for b in &a.boxes {
            b.check_within(dims).map_err(|e| Error::Record {
                line: i + 1,
                message: format!("image {}: {e}", a.image_id),
            })?;
        }
    }
    Ok(lines)
}

pub fn write_annotations(path: &Path, lines: &[AnnotationLine]) -> Result<()> {
    write_jsonl(path, lines)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    check_unique(lines.iter().enumerate().map(|(i, l)| (i + 1, l.image_id.as_str())))?;
    Ok(lines)
}

pub fn write_predictions(path: &Path, lines: &[PredictionLine]) -> Result<()> {
    write_jsonl(path, lines)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    pub image_id: String,
    pub class: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let lines: Vec<DetectionLine> = read_jsonl(path)?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            if !l.score.is_finite() {
                return Err(Error::Record {
                    line: i + 1,
                    message: "detection score is not finite".into(),
                });
            }
            Ok(DetectionRecord {
                image_id: l.image_id,
                class: l.class,
                score: l.score,
                bbox: l.bbox,
            })
        })
        .collect()
}

pub fn write_metrics_report(path: &Path, report: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
