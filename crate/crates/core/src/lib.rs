//! Foreground learning from weak labels on precomputed feature grids.
//!
//! The pipeline turns image-level labels into foreground masks without any
//! location supervision:
//!
//! 1. [`ddt`] co-localizes each category and yields one pseudo box per image.
//! 2. [`pseudo_mask`] quantizes boxes to feature-grid masks.
//! 3. [`head`] trains a per-position sigmoid classifier on those masks.
//! 4. [`wsol`] turns predicted masks into boxes; [`wsod`] scores detection
//!    proposals with them.
//!
//! [`metrics`] implements CorLoc, Top-1 Loc and VOC mAP. [`io`] holds the
//! binary and JSON-lines formats, [`synth`] a generator of synthetic grids
//! with known boxes.

pub mod ddt;
pub mod error;
pub mod head;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod pseudo_mask;
pub mod synth;
pub mod tensor;
pub mod wsod;
pub mod wsol;

pub use error::{Error, Result};
pub use tensor::{BBox, BinaryMask, FeatureMap, ImageDims, ProbMask};
