//! Confident-point semantic transfer: shrink each 2D instance mask to its
//! central region, project the LiDAR frame into the image and collect the
//! points that land on a shrunk mask as that instance's seed points.

use std::collections::HashSet;

use thiserror::Error;

pub mod mask;
pub mod projection;

pub use mask::{shrink_mask, ImageSize, InstanceMask, PixelBounds, RetainedRegion, ShrunkMask};
pub use projection::{project_points, CalibrationSet, PixelProjection};

use crate::geometry::PointCloud;

#[derive(Debug, Error)]
pub enum CpstError {
    #[error("shrink factor must lie in (0, 1], got {0}")]
    InvalidShrinkFactor(f64),
    #[error("mask {0} has no set pixel")]
    EmptyMask(u32),
    #[error("mask {0} has a zero-sized image")]
    EmptyImage(u32),
    #[error("mask {id} has {got} pixels, expected {expected}")]
    MaskLength { id: u32, expected: usize, got: usize },
    #[error("run-length counts of mask {id} cover {got} pixels, expected {expected}")]
    RleLength { id: u32, expected: usize, got: u64 },
    #[error("mask {id} is {mask:?} but the calibration image is {calib:?}")]
    ImageSizeMismatch { id: u32, mask: ImageSize, calib: ImageSize },
    #[error("instance id {0} appears more than once")]
    DuplicateInstance(u32),
    #[error("calibration contains non-finite entries")]
    NonFiniteCalibration,
    #[error("calibration chain is not invertible")]
    SingularCalibration,
    #[error("invalid image size {0:?}")]
    InvalidImageSize(ImageSize),
}

/// Confident points of one instance: indices into the frame's cloud,
/// ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPointSet {
    pub instance_id: u32,
    pub class: String,
    pub indices: Vec<usize>,
}

impl SeedPointSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Transfers shrunk masks onto the cloud.
///
/// A point joins an instance when its projection falls on a set pixel of
/// that instance's shrunk mask. A point claimed by several shrunk masks goes
/// to the one whose retained-region center is nearest in pixel space, ties
/// to the lower instance id. Instances left without seeds are omitted; the
/// output is ordered by instance id.
pub fn extract_seed_points(
    cloud: &PointCloud,
    masks: &[InstanceMask],
    calib: &CalibrationSet,
    gamma: f64,
) -> Result<Vec<SeedPointSet>, CpstError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CpstError::InvalidShrinkFactor(gamma));
    }
    let mut ids = HashSet::new();
    for m in masks {
        if m.size() != calib.image_size {
            return Err(CpstError::ImageSizeMismatch {
                id: m.id(),
                mask: m.size(),
                calib: calib.image_size,
            });
        }
        if !ids.insert(m.id()) {
            return Err(CpstError::DuplicateInstance(m.id()));
        }
    }
    if masks.is_empty() {
        return Ok(Vec::new());
    }

    let mut shrunk: Vec<(ShrunkMask, &InstanceMask)> = masks
        .iter()
        .map(|m| shrink_mask(m, gamma).map(|s| (s, m)))
        .collect::<Result<_, _>>()?;
    shrunk.retain(|(s, _)| !s.is_empty());
    shrunk.sort_by_key(|(s, _)| s.instance_id());

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); shrunk.len()];
    for (idx, proj) in project_points(cloud, calib).iter().enumerate() {
        let Some((u, v)) = proj.pixel() else { continue };
        let mut best: Option<(usize, f64)> = None;
        for (k, (s, _)) in shrunk.iter().enumerate() {
            if !s.contains(u, v) {
                continue;
            }
            let (cu, cv) = s.region().center();
            let d2 = (proj.u - cu).powi(2) + (proj.v - cv).powi(2);
            // Strict comparison keeps the lower id on ties; `shrunk` is id-sorted.
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((k, d2));
            }
        }
        if let Some((k, _)) = best {
            members[k].push(idx);
        }
    }

    Ok(shrunk
        .iter()
        .zip(members)
        .filter(|(_, idx)| !idx.is_empty())
        .map(|((s, m), indices)| SeedPointSet {
            instance_id: s.instance_id(),
            class: m.class().to_string(),
            indices,
        })
        .collect())
}
