//! Camera calibration and LiDAR-to-image projection.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use super::mask::ImageSize;
use super::CpstError;
use crate::geometry::{Point, PointCloud};

/// KITTI-style calibration: `P` (3×4 camera projection), `R` (3×3
/// rectification) and `T` (3×4 LiDAR→camera extrinsic).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub projection: Matrix3x4<f64>,
    pub rectification: Matrix3<f64>,
    pub velo_to_cam: Matrix3x4<f64>,
    pub image_size: ImageSize,
}

/// A LiDAR point expressed in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    /// Depth along the rectified camera's optical axis, meters.
    pub depth: f64,
    pub valid: bool,
}

impl PixelProjection {
    /// Integer pixel `(u, v)` for a valid projection.
    pub fn pixel(&self) -> Option<(usize, usize)> {
        self.valid.then(|| (self.u.floor() as usize, self.v.floor() as usize))
    }
}

fn homogeneous_3x4(m: &Matrix3x4<f64>) -> Matrix4<f64> {
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 4>(0, 0).copy_from(m);
    out
}

impl CalibrationSet {
    pub fn new(
        projection: Matrix3x4<f64>,
        rectification: Matrix3<f64>,
        velo_to_cam: Matrix3x4<f64>,
        image_size: ImageSize,
    ) -> Result<Self, CpstError> {
        let finite = projection.iter().chain(rectification.iter()).chain(velo_to_cam.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(CpstError::NonFiniteCalibration);
        }
        if image_size.height == 0 || image_size.width == 0 {
            return Err(CpstError::InvalidImageSize(image_size));
        }
        Ok(Self {
            projection,
            rectification,
            velo_to_cam,
            image_size,
        })
    }

    /// Pinhole camera with focal length `f` and principal point `(cu, cv)`,
    /// identity rectification and extrinsic.
    pub fn pinhole(f: f64, cu: f64, cv: f64, image_size: ImageSize) -> Result<Self, CpstError> {
        #[rustfmt::skip]
        let p = Matrix3x4::new(
            f, 0.0, cu, 0.0,
            0.0, f, cv, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        Self::new(p, Matrix3::identity(), Matrix3x4::identity(), image_size)
    }

    /// Pinhole camera behind a KITTI-style extrinsic: camera `x` is LiDAR
    /// `−y`, camera `y` is LiDAR `−z` and camera `z` is LiDAR `x`. Unlike
    /// [`pinhole`](Self::pinhole), LiDAR yaw maps onto label `rotation_y`.
    pub fn forward_pinhole(f: f64, cu: f64, cv: f64, image_size: ImageSize) -> Result<Self, CpstError> {
        let base = Self::pinhole(f, cu, cv, image_size)?;
        #[rustfmt::skip]
        let tr = Matrix3x4::new(
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
        );
        Self::new(base.projection, base.rectification, tr, image_size)
    }

    /// `R · T` as a homogeneous 4×4 transform from LiDAR to the rectified
    /// camera frame.
    pub fn lidar_to_rect(&self) -> Matrix4<f64> {
        let mut r = Matrix4::identity();
        r.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rectification);
        r * homogeneous_3x4(&self.velo_to_cam)
    }

    pub fn rect_to_lidar(&self) -> Result<Matrix4<f64>, CpstError> {
        self.lidar_to_rect().try_inverse().ok_or(CpstError::SingularCalibration)
    }

    pub fn to_camera(&self, p: &Point) -> Vector3<f64> {
        (self.lidar_to_rect() * p.to_homogeneous()).xyz()
    }

    /// Projects a point already expressed in the rectified camera frame.
    pub fn project_camera(&self, cam: &Vector3<f64>) -> PixelProjection {
        let pix = self.projection * Vector4::new(cam.x, cam.y, cam.z, 1.0);
        let (u, v) = (pix.x / pix.z, pix.y / pix.z);
        let depth = cam.z;
        let valid = depth > 0.0
            && pix.z > 0.0
            && u.is_finite()
            && v.is_finite()
            && u >= 0.0
            && v >= 0.0
            && u < self.image_size.width as f64
            && v < self.image_size.height as f64;
        PixelProjection { u, v, depth, valid }
    }

    pub fn project_point(&self, p: &Point) -> PixelProjection {
        self.project_camera(&self.to_camera(p))
    }
}

/// Projects every point of the cloud; points behind the camera or outside
/// the half-open image domain `[0, W) × [0, H)` are flagged invalid.
pub fn project_points(cloud: &PointCloud, calib: &CalibrationSet) -> Vec<PixelProjection> {
    let m = calib.lidar_to_rect();
    cloud
        .points()
        .iter()
        .map(|p| calib.project_camera(&(m * p.to_homogeneous()).xyz()))
        .collect()
}
