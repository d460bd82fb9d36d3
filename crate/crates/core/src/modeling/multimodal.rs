//! Image region features and multimodal input assembly.
//!
//! Region features are read from per-image binary files, `<image_id>.rgn`,
//! little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "RGNF"
//! version  u32      1
//! n_v      u32      number of regions
//! d_v      u32      feature dimension (2048 for the reference detector)
//! flags    u32      bit 0: bounding boxes follow the features
//! data     f32 × n_v × d_v, row-major
//! boxes    f32 × n_v × 4   (x1, y1, x2, y2, image-normalized), if flagged
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::modeling::input::SegmentKind;

pub const REGION_FILE_MAGIC: &[u8; 4] = b"RGNF";
pub const REGION_FILE_VERSION: u32 = 1;
/// Feature dimension of the reference object detector.
pub const REFERENCE_REGION_DIM: usize = 2048;
pub const BOX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatureSet {
    features: Array2<f64>,
    boxes: Option<Array2<f64>>,
}

impl RegionFeatureSet {
    pub fn new(features: Array2<f64>, boxes: Option<Array2<f64>>) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("region features are not finite".into()));
        }
        if let Some(b) = &boxes {
            if b.dim() != (features.nrows(), BOX_DIM) || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "expected {}×{BOX_DIM} finite boxes, got {:?}",
                    features.nrows(),
                    b.dim()
                )));
            }
        }
        Ok(Self { features, boxes })
    }

    pub fn n_v(&self) -> usize {
        self.features.nrows()
    }

    pub fn d_v(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn boxes(&self) -> Option<&Array2<f64>> {
        self.boxes.as_ref()
    }
}

pub fn write_region_file(path: impl AsRef<Path>, regions: &RegionFeatureSet) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(REGION_FILE_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(REGION_FILE_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(regions.n_v() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(regions.d_v() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(u32::from(regions.boxes.is_some())).map_err(io)?;
    for v in regions.features.iter() {
        w.write_f32::<LittleEndian>(*v as f32).map_err(io)?;
    }
    if let Some(b) = &regions.boxes {
        for v in b.iter() {
            w.write_f32::<LittleEndian>(*v as f32).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_region_file(path: impl AsRef<Path>) -> Result<RegionFeatureSet> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let bad = |what: &str| Error::parse(path, what);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != REGION_FILE_MAGIC {
        return Err(bad("not a region feature file"));
    }
    let mut header = [0u32; 4];
    for h in &mut header {
        *h = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
    }
    let [version, n_v, d_v, flags] = header;
    if version != REGION_FILE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let (n_v, d_v) = (n_v as usize, d_v as usize);
    let mut read_block = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0f32; len];
        r.read_f32_into::<LittleEndian>(&mut buf)
            .map_err(|_| bad("truncated feature data"))?;
        Ok(buf.into_iter().map(f64::from).collect())
    };
    let features = Array2::from_shape_vec((n_v, d_v), read_block(n_v * d_v)?)
        .map_err(|e| bad(&e.to_string()))?;
    let boxes = if flags & 1 == 1 {
        Some(
            Array2::from_shape_vec((n_v, BOX_DIM), read_block(n_v * BOX_DIM)?)
                .map_err(|e| bad(&e.to_string()))?,
        )
    } else {
        None
    };
    RegionFeatureSet::new(features, boxes).map_err(|e| bad(&e.to_string()))
}

pub fn region_file_path(dir: &Path, image_id: ImageId) -> PathBuf {
    dir.join(format!("{}.rgn", image_id.0))
}

/// Loads the region files of the given images from a directory.
pub fn load_region_dir(
    dir: impl AsRef<Path>,
    images: &BTreeSet<ImageId>,
) -> Result<BTreeMap<ImageId, RegionFeatureSet>> {
    let dir = dir.as_ref();
    images
        .iter()
        .map(|&img| Ok((img, read_region_file(region_file_path(dir, img))?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionConfig {
    /// Feature dimension the region projection expects.
    pub feature_dim: usize,
    /// Append the four box coordinates to every region feature.
    #[serde(default)]
    pub include_boxes: bool,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            feature_dim: REFERENCE_REGION_DIM,
            include_boxes: false,
        }
    }
}

impl RegionConfig {
    /// Width of one region slot after optional box concatenation.
    pub fn slot_dim(&self) -> usize {
        self.feature_dim + if self.include_boxes { BOX_DIM } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutSlot {
    Text(SegmentKind),
    Region(usize),
}

/// Question text, optional caption text, then one slot per region.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalInput {
    pub text_segments: Vec<(SegmentKind, String)>,
    /// `n_v × slot_dim` region slots, in region order.
    pub region_slots: Array2<f64>,
}

impl MultimodalInput {
    pub fn layout(&self) -> Vec<LayoutSlot> {
        self.text_segments
            .iter()
            .map(|(k, _)| LayoutSlot::Text(*k))
            .chain((0..self.region_slots.nrows()).map(LayoutSlot::Region))
            .collect()
    }
}

impl fmt::Display for MultimodalInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .text_segments
            .iter()
            .map(|(k, _)| match k {
                SegmentKind::Question => "question".to_string(),
                SegmentKind::Caption => "caption".to_string(),
                SegmentKind::Special => "special".to_string(),
            })
            .collect();
        parts.push(format!("{} region slots", self.region_slots.nrows()));
        write!(f, "[{}]", parts.join(" | "))
    }
}

/// Assembles the input of an image-feature model: the question, the caption
/// when given (early fusion), then the region slots. Box coordinates are only
/// appended when `config.include_boxes` is set.
pub fn assemble_multimodal_input(
    question: &str,
    caption: Option<&str>,
    regions: &RegionFeatureSet,
    config: &RegionConfig,
) -> Result<MultimodalInput> {
    if regions.n_v() == 0 {
        return Err(Error::Precondition("image has no region features".into()));
    }
    if regions.d_v() != config.feature_dim {
        return Err(Error::Config(format!(
            "region features have dimension {}, projection expects {}",
            regions.d_v(),
            config.feature_dim
        )));
    }
    let region_slots = if config.include_boxes {
        let boxes = regions.boxes().ok_or_else(|| {
            Error::Config("box concatenation enabled but the feature file has no boxes".into())
        })?;
        ndarray::concatenate(ndarray::Axis(1), &[regions.features.view(), boxes.view()])
            .expect("row counts match")
    } else {
        regions.features.clone()
    };

    let mut text_segments = vec![(SegmentKind::Question, question.to_string())];
    if let Some(c) = caption {
        text_segments.push((SegmentKind::Caption, c.to_string()));
    }
    Ok(MultimodalInput {
        text_segments,
        region_slots,
    })
}
