//! Per-frame instance-mask documents.
//!
//! ```json
//! {
//!   "image_size": [375, 1242],
//!   "instances": [
//!     {"id": 0, "class": "Car", "rle": {"size": [375, 1242], "counts": [1200, 35, 340]}}
//!   ]
//! }
//! ```
//!
//! `counts` is uncompressed COCO run-length coding: column-major pixel
//! order, alternating runs beginning with a run of zeros.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, malformed, IoError};
use crate::cpst::{CpstError, ImageSize, InstanceMask};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleJson {
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub id: u32,
    pub class: String,
    /// Segmenter confidence; carried through but not used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub rle: RleJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDocument {
    pub image_size: [usize; 2],
    pub instances: Vec<InstanceJson>,
}

impl MaskDocument {
    pub fn from_masks(size: ImageSize, masks: &[InstanceMask]) -> Self {
        Self {
            image_size: [size.height, size.width],
            instances: masks
                .iter()
                .map(|m| InstanceJson {
                    id: m.id(),
                    class: m.class().to_string(),
                    score: None,
                    rle: RleJson {
                        size: [m.size().height, m.size().width],
                        counts: m.to_rle(),
                    },
                })
                .collect(),
        }
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(self.image_size[0], self.image_size[1])
    }

    /// Decodes every instance. Instance sizes must match the document size
    /// and ids must be unique.
    pub fn decode(&self, path: &Path) -> Result<Vec<InstanceMask>, IoError> {
        let size = self.image_size();
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            if inst.rle.size != self.image_size {
                return Err(malformed(
                    path,
                    format!("instance {} has size {:?}, document is {:?}", inst.id, inst.rle.size, self.image_size),
                ));
            }
            let wrap = |source| IoError::Mask {
                path: path.to_path_buf(),
                source,
            };
            if !seen.insert(inst.id) {
                return Err(wrap(CpstError::DuplicateInstance(inst.id)));
            }
            out.push(InstanceMask::from_rle(inst.id, inst.class.clone(), size, &inst.rle.counts).map_err(wrap)?);
        }
        Ok(out)
    }
}

pub fn parse_masks(text: &str, path: &Path) -> Result<(ImageSize, Vec<InstanceMask>), IoError> {
    let doc: MaskDocument = serde_json::from_str(text).map_err(|e| malformed(path, e.to_string()))?;
    let masks = doc.decode(path)?;
    Ok((doc.image_size(), masks))
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<(ImageSize, Vec<InstanceMask>), IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_masks(&text, path)
}

pub fn write_masks(path: impl AsRef<Path>, size: ImageSize, masks: &[InstanceMask]) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string(&MaskDocument::from_masks(size, masks)).expect("mask document serializes");
    fs::write(path, text).map_err(io_err(path))
}
