//! Readers and writers for the on-disk dataset: KITTI point clouds,
//! calibration and label files, and run-length mask documents.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod dataset;
pub mod kitti;
pub mod masks;

pub use dataset::{DatasetLayout, FrameBundle};
pub use kitti::{
    read_calib, read_labels, read_point_cloud, write_calib, write_labels, write_point_cloud, KittiObject, LabelRecord,
};
pub use masks::{read_masks, write_masks, MaskDocument};

use crate::cpst::CpstError;
use crate::geometry::GeometryError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },
    #[error("{path}: missing key `{key}`")]
    MissingKey { path: PathBuf, key: String },
    #[error("{path}: {source}")]
    Mask {
        path: PathBuf,
        #[source]
        source: CpstError,
    },
    #[error("{path}: {source}")]
    Geometry {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn malformed(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}
