//! Dataset directory layout:
//!
//! ```text
//! root/velodyne/<frame>.bin
//! root/calib/<frame>.txt
//! root/masks/<frame>.json
//! root/label_2/<frame>.txt      ground truth, optional
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::kitti::{read_calib, read_labels, read_point_cloud, write_calib, write_labels, write_point_cloud, LabelRecord};
use super::masks::{read_masks, write_masks};
use super::{io_err, IoError};
use crate::cpst::{CalibrationSet, InstanceMask};
use crate::eval::LabeledBox;
use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn velodyne(&self, frame: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{frame}.bin"))
    }

    pub fn calib(&self, frame: &str) -> PathBuf {
        self.root.join("calib").join(format!("{frame}.txt"))
    }

    pub fn masks(&self, frame: &str) -> PathBuf {
        self.root.join("masks").join(format!("{frame}.json"))
    }

    pub fn labels(&self, frame: &str) -> PathBuf {
        self.root.join("label_2").join(format!("{frame}.txt"))
    }

    pub fn create_dirs(&self) -> Result<(), IoError> {
        for sub in ["velodyne", "calib", "masks", "label_2"] {
            let dir = self.root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(())
    }

    /// Frame ids with a point cloud, sorted.
    pub fn frames(&self) -> Result<Vec<String>, IoError> {
        let dir = self.root.join("velodyne");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "bin") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Loads one frame. Ground truth is read when `with_gt` is set and the
    /// label file exists.
    pub fn load(&self, frame: &str, with_gt: bool) -> Result<FrameBundle, IoError> {
        let cloud = read_point_cloud(self.velodyne(frame))?;
        let (size, masks) = read_masks(self.masks(frame))?;
        let calib = read_calib(self.calib(frame), Some(size))?;
        let label_path = self.labels(frame);
        let gt = if with_gt && label_path.exists() {
            Some(read_labeled(&label_path, &calib)?)
        } else {
            None
        };
        Ok(FrameBundle {
            frame: frame.to_string(),
            cloud,
            calib,
            masks,
            gt,
        })
    }

    pub fn save(&self, bundle: &FrameBundle) -> Result<(), IoError> {
        self.create_dirs()?;
        let f = &bundle.frame;
        write_point_cloud(self.velodyne(f), &bundle.cloud)?;
        write_calib(self.calib(f), &bundle.calib)?;
        write_masks(self.masks(f), bundle.calib.image_size, &bundle.masks)?;
        if let Some(gt) = &bundle.gt {
            let records: Vec<LabelRecord> = gt
                .iter()
                .map(|b| LabelRecord {
                    class: b.class.clone(),
                    bbox: b.bbox,
                    score: 1.0,
                })
                .collect();
            write_labels(self.labels(f), &records, &bundle.calib)?;
        }
        Ok(())
    }
}

/// Reads a label file as class-tagged LiDAR boxes.
pub fn read_labeled(path: &Path, calib: &CalibrationSet) -> Result<Vec<LabeledBox>, IoError> {
    Ok(read_labels(path, calib)?
        .into_iter()
        .map(|o| LabeledBox {
            class: o.class,
            bbox: o.bbox,
        })
        .collect())
}

/// Everything the pipeline needs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame: String,
    pub cloud: PointCloud,
    pub calib: CalibrationSet,
    pub masks: Vec<InstanceMask>,
    pub gt: Option<Vec<LabeledBox>>,
}
