//! KITTI object-benchmark formats.
//!
//! - velodyne: little-endian `f32` quadruples `(x, y, z, intensity)`.
//! - calib: `KEY: v v v ...` lines; `P2`, `R0_rect` and `Tr_velo_to_cam` are
//!   read. An optional `image_size: H W` line carries the image dimensions.
//! - labels: 15 columns, plus a 16th score column for detections.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use super::{io_err, malformed, IoError};
use crate::cpst::{CalibrationSet, ImageSize};
use crate::geometry::{OrientedBox3D, Point, PointCloud};

pub fn parse_point_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud, IoError> {
    if !bytes.len().is_multiple_of(16) {
        return Err(malformed(path, format!("{} bytes is not a multiple of 16", bytes.len())));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    let mut intensity = Vec::with_capacity(bytes.len() / 16);
    for (i, chunk) in bytes.chunks_exact(16).enumerate() {
        let v: [f32; 4] = std::array::from_fn(|k| f32::from_le_bytes(chunk[4 * k..4 * k + 4].try_into().unwrap()));
        if !v.iter().all(|x| x.is_finite()) {
            return Err(malformed(path, format!("point {i} has a non-finite value")));
        }
        points.push(Point::new(v[0] as f64, v[1] as f64, v[2] as f64));
        intensity.push(v[3]);
    }
    PointCloud::with_intensity(points, intensity).map_err(|source| IoError::Geometry {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<PointCloud, IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_point_cloud(&bytes, path)
}

/// Coordinates are stored as `f32`; intensity defaults to 0 when absent.
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for (i, p) in cloud.points().iter().enumerate() {
        let intensity = cloud.intensity().map_or(0.0, |v| v[i]);
        for x in [p.x as f32, p.y as f32, p.z as f32, intensity] {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_point_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, encode_point_cloud(cloud)).map_err(io_err(path))
}

fn parse_values(path: &Path, line: usize, text: &str) -> Result<Vec<f64>, IoError> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| IoError::MalformedLine {
                path: path.to_path_buf(),
                line,
                reason: format!("`{t}` is not a number"),
            })
        })
        .collect()
}

/// Parses calibration text. `fallback_size` is used when the file has no
/// `image_size` line.
pub fn parse_calib(text: &str, path: &Path, fallback_size: Option<ImageSize>) -> Result<CalibrationSet, IoError> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    let mut size = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(IoError::MalformedLine {
                path: path.to_path_buf(),
                line: n + 1,
                reason: "expected `KEY: values`".into(),
            });
        };
        let expect = |count: usize| -> Result<Vec<f64>, IoError> {
            let v = parse_values(path, n + 1, rest)?;
            if v.len() != count {
                return Err(IoError::MalformedLine {
                    path: path.to_path_buf(),
                    line: n + 1,
                    reason: format!("`{key}` needs {count} values, found {}", v.len()),
                });
            }
            Ok(v)
        };
        match key.trim() {
            "P2" => p2 = Some(Matrix3x4::from_row_slice(&expect(12)?)),
            "R0_rect" => r0 = Some(Matrix3::from_row_slice(&expect(9)?)),
            "Tr_velo_to_cam" => tr = Some(Matrix3x4::from_row_slice(&expect(12)?)),
            "image_size" => {
                let v = expect(2)?;
                if v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
                    return Err(IoError::MalformedLine {
                        path: path.to_path_buf(),
                        line: n + 1,
                        reason: "image_size needs two positive integers".into(),
                    });
                }
                size = Some(ImageSize::new(v[0] as usize, v[1] as usize));
            }
            _ => {}
        }
    }
    let missing = |key: &str| IoError::MissingKey {
        path: path.to_path_buf(),
        key: key.to_string(),
    };
    let p2 = p2.ok_or_else(|| missing("P2"))?;
    let r0 = r0.ok_or_else(|| missing("R0_rect"))?;
    let tr = tr.ok_or_else(|| missing("Tr_velo_to_cam"))?;
    let size = size.or(fallback_size).ok_or_else(|| missing("image_size"))?;
    CalibrationSet::new(p2, r0, tr, size).map_err(|source| IoError::Mask {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_calib(path: impl AsRef<Path>, fallback_size: Option<ImageSize>) -> Result<CalibrationSet, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_calib(&text, path, fallback_size)
}

fn join_row_major<const R: usize, const C: usize>(
    m: &nalgebra::Matrix<f64, nalgebra::Const<R>, nalgebra::Const<C>, nalgebra::ArrayStorage<f64, R, C>>,
) -> String {
    let mut parts = Vec::with_capacity(R * C);
    for r in 0..R {
        for c in 0..C {
            parts.push(format!("{:e}", m[(r, c)]));
        }
    }
    parts.join(" ")
}

/// Shortest round-trip float formatting, so parse∘format is exact.
pub fn format_calib(calib: &CalibrationSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "P2: {}", join_row_major(&calib.projection));
    let _ = writeln!(s, "R0_rect: {}", join_row_major(&calib.rectification));
    let _ = writeln!(s, "Tr_velo_to_cam: {}", join_row_major(&calib.velo_to_cam));
    let _ = writeln!(s, "image_size: {} {}", calib.image_size.height, calib.image_size.width);
    s
}

pub fn write_calib(path: impl AsRef<Path>, calib: &CalibrationSet) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, format_calib(calib)).map_err(io_err(path))
}

/// A box to be written as a label line.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub class: String,
    pub bbox: OrientedBox3D,
    pub score: f64,
}

/// A label line parsed back into the LiDAR frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiObject {
    pub class: String,
    pub bbox: OrientedBox3D,
    pub score: Option<f64>,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Camera-frame label geometry of a LiDAR box: bottom-center location and
/// `rotation_y`, the heading angle about the camera `y` axis.
pub fn box_to_camera(b: &OrientedBox3D, calib: &CalibrationSet) -> (Vector3<f64>, f64) {
    let m = calib.lidar_to_rect();
    let c = b.center();
    let bottom = Point::new(c.x, c.y, c.z - b.height() / 2.0);
    let loc = (m * bottom.to_homogeneous()).xyz();
    let (s, co) = b.yaw().sin_cos();
    let heading = m.fixed_view::<3, 3>(0, 0) * Vector3::new(co, s, 0.0);
    (loc, wrap_angle((-heading.z).atan2(heading.x)))
}

/// Inverse of [`box_to_camera`].
pub fn box_from_camera(
    location: Vector3<f64>,
    rotation_y: f64,
    dims_lwh: Vector3<f64>,
    calib: &CalibrationSet,
) -> Result<OrientedBox3D, String> {
    let inv = calib.rect_to_lidar().map_err(|e| e.to_string())?;
    let bottom = (inv * Vector4::new(location.x, location.y, location.z, 1.0)).xyz();
    let heading = inv.fixed_view::<3, 3>(0, 0) * Vector3::new(rotation_y.cos(), 0.0, -rotation_y.sin());
    let yaw = heading.y.atan2(heading.x);
    let center = Point::new(bottom.x, bottom.y, bottom.z + dims_lwh.z / 2.0);
    OrientedBox3D::new(center, dims_lwh, yaw).map_err(|e| e.to_string())
}

/// Pixel AABB of the projected corners in front of the camera, clamped to
/// the image. `None` when the whole box is behind the camera.
pub fn image_bbox(b: &OrientedBox3D, calib: &CalibrationSet) -> Option<[f64; 4]> {
    let m = calib.lidar_to_rect();
    let mut acc: Option<[f64; 4]> = None;
    for corner in b.corners() {
        let cam = (m * corner.to_homogeneous()).xyz();
        if cam.z <= 0.0 {
            continue;
        }
        let pr = calib.project_camera(&cam);
        acc = Some(match acc {
            None => [pr.u, pr.v, pr.u, pr.v],
            Some(a) => [a[0].min(pr.u), a[1].min(pr.v), a[2].max(pr.u), a[3].max(pr.v)],
        });
    }
    let (w, h) = ((calib.image_size.width - 1) as f64, (calib.image_size.height - 1) as f64);
    acc.map(|a| [a[0].clamp(0.0, w), a[1].clamp(0.0, h), a[2].clamp(0.0, w), a[3].clamp(0.0, h)])
}

/// Formats one label line. The flag is false when the box lies entirely
/// behind the camera and the 2D box was written as zeros.
pub fn format_label(record: &LabelRecord, calib: &CalibrationSet) -> (String, bool) {
    let (loc, ry) = box_to_camera(&record.bbox, calib);
    let alpha = wrap_angle(ry - loc.x.atan2(loc.z));
    let bbox2d = image_bbox(&record.bbox, calib);
    let b2 = bbox2d.unwrap_or([0.0; 4]);
    let b = &record.bbox;
    let line = format!(
        "{} 0.00 0 {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.4}",
        record.class,
        alpha,
        b2[0],
        b2[1],
        b2[2],
        b2[3],
        b.height(),
        b.width(),
        b.length(),
        loc.x,
        loc.y,
        loc.z,
        ry,
        record.score
    );
    (line, bbox2d.is_some())
}

pub fn format_labels(records: &[LabelRecord], calib: &CalibrationSet) -> String {
    let mut s = String::new();
    for r in records {
        let (line, projected) = format_label(r, calib);
        if !projected {
            log::warn!("{} box at {:?} is behind the camera; 2D box zeroed", r.class, r.bbox.center());
        }
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn write_labels(path: impl AsRef<Path>, records: &[LabelRecord], calib: &CalibrationSet) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, format_labels(records, calib)).map_err(io_err(path))
}

pub fn parse_labels(text: &str, path: &Path, calib: &CalibrationSet) -> Result<Vec<KittiObject>, IoError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| IoError::MalformedLine {
            path: path.to_path_buf(),
            line: n + 1,
            reason,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "DontCare" {
            continue;
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(bad(format!("expected 15 or 16 columns, found {}", fields.len())));
        }
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("`{t}` is not a number"))))
            .collect::<Result<_, _>>()?;
        // nums: truncated occluded alpha x1 y1 x2 y2 h w l x y z ry [score]
        let dims = Vector3::new(nums[9], nums[8], nums[7]);
        let location = Vector3::new(nums[10], nums[11], nums[12]);
        let bbox = box_from_camera(location, nums[13], dims, calib).map_err(bad)?;
        out.push(KittiObject {
            class: fields[0].to_string(),
            bbox,
            score: nums.get(14).copied(),
        });
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>, calib: &CalibrationSet) -> Result<Vec<KittiObject>, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_labels(&text, path, calib)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    /// KITTI-style extrinsic: camera x = −lidar y, y = −lidar z, z = lidar x.
    pub(crate) fn axis_swap_calib() -> CalibrationSet {
        #[rustfmt::skip]
        let tr = Matrix3x4::new(
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, -1.0, -0.08,
            1.0, 0.0, 0.0, -0.27,
        );
        #[rustfmt::skip]
        let p2 = Matrix3x4::new(
            720.0, 0.0, 621.0, 0.0,
            0.0, 720.0, 187.5, 0.0,
            0.0, 0.0, 1.0, 0.0,
        );
        CalibrationSet::new(p2, Matrix3::identity(), tr, ImageSize::new(375, 1242)).unwrap()
    }

    #[test]
    fn golden_point_bytes() {
        let mut bytes = Vec::new();
        for v in [1.5f32, -2.25, 0.125, 0.5, 10.0, 20.0, -1.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = parse_point_cloud(&bytes, p()).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(*cloud.point(0), Point::new(1.5, -2.25, 0.125));
        assert_eq!(*cloud.point(1), Point::new(10.0, 20.0, -1.0));
        assert_eq!(cloud.intensity().unwrap(), &[0.5, 0.0]);
        assert_eq!(encode_point_cloud(&cloud), bytes);
    }

    #[test]
    fn empty_cloud_file() {
        assert!(parse_point_cloud(&[], p()).unwrap().is_empty());
    }

    #[test]
    fn truncated_cloud_is_rejected() {
        assert!(matches!(parse_point_cloud(&[0u8; 20], p()), Err(IoError::Malformed { .. })));
        let mut bytes = vec![0u8; 16];
        bytes[0..4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(parse_point_cloud(&bytes, p()), Err(IoError::Malformed { .. })));
    }

    #[test]
    fn calib_requires_every_key() {
        let full = format_calib(&axis_swap_calib());
        let without_r0: String = full.lines().filter(|l| !l.starts_with("R0_rect")).map(|l| format!("{l}\n")).collect();
        match parse_calib(&without_r0, p(), None) {
            Err(IoError::MissingKey { key, .. }) => assert_eq!(key, "R0_rect"),
            other => panic!("unexpected {other:?}"),
        }
        let short = full.replace("R0_rect: 1e0", "R0_rect:");
        assert!(matches!(parse_calib(&short, p(), None), Err(IoError::MalformedLine { .. })));
    }

    #[test]
    fn calib_image_size_falls_back() {
        let text: String = format_calib(&axis_swap_calib()).lines().filter(|l| !l.starts_with("image_size")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_calib(&text, p(), None), Err(IoError::MissingKey { .. })));
        let c = parse_calib(&text, p(), Some(ImageSize::new(10, 20))).unwrap();
        assert_eq!(c.image_size, ImageSize::new(10, 20));
    }

    #[test]
    fn identity_calibration_location() {
        let calib = CalibrationSet::pinhole(500.0, 320.0, 240.0, ImageSize::new(480, 640)).unwrap();
        let b = OrientedBox3D::new(Point::new(1.0, 0.5, 12.0), Vector3::new(4.0, 1.8, 1.5), 0.3).unwrap();
        let (loc, _) = box_to_camera(&b, &calib);
        assert!((loc - Vector3::new(1.0, 0.5, 11.25)).norm() < 1e-12);
    }

    #[test]
    fn kitti_convention_rotation_y() {
        // A car heading along +x (forward) in LiDAR has rotation_y = −π/2.
        let calib = axis_swap_calib();
        let b = OrientedBox3D::new(Point::new(10.0, 0.0, -0.9), Vector3::new(4.0, 1.8, 1.5), 0.0).unwrap();
        let (loc, ry) = box_to_camera(&b, &calib);
        assert!((ry + PI / 2.0).abs() < 1e-12);
        assert!((loc - Vector3::new(0.0, 1.57, 9.73)).norm() < 1e-9);
    }

    #[test]
    fn score_has_four_decimals() {
        let calib = axis_swap_calib();
        let b = OrientedBox3D::new(Point::new(10.0, 0.0, -0.9), Vector3::new(4.0, 1.8, 1.5), 0.0).unwrap();
        let (line, projected) = format_label(
            &LabelRecord {
                class: "Car".into(),
                bbox: b,
                score: 1.0,
            },
            &calib,
        );
        assert!(projected);
        assert!(line.ends_with(" 1.0000"), "{line}");
        assert!(line.starts_with("Car 0.00 0 "));
        assert_eq!(line.split_whitespace().count(), 16);
    }

    #[test]
    fn box_behind_camera_gets_zero_2d_box() {
        let calib = axis_swap_calib();
        let b = OrientedBox3D::new(Point::new(-10.0, 0.0, -0.9), Vector3::new(4.0, 1.8, 1.5), 0.0).unwrap();
        let (line, projected) = format_label(
            &LabelRecord {
                class: "Car".into(),
                bbox: b,
                score: 0.5,
            },
            &calib,
        );
        assert!(!projected);
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(&f[4..8], &["0.00", "0.00", "0.00", "0.00"]);
    }

    #[test]
    fn dont_care_and_bad_lines() {
        let calib = axis_swap_calib();
        let text = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n\
                    Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n";
        let objs = parse_labels(text, p(), &calib).unwrap();
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].score, None);
        assert!((objs[0].bbox.length() - 3.64).abs() < 1e-12);
        match parse_labels("Car 0 0 1 2 3\n", p(), &calib) {
            Err(IoError::MalformedLine { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_labels("\nCar 0.00 0 x 1 1 1 1 1 1 1 1 1 1 1\n", p(), &calib) {
            Err(IoError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn cloud_round_trip(pts in proptest::collection::vec((-80.0..80.0f32, -80.0..80.0f32, -3.0..3.0f32, 0.0..1.0f32), 0..50)) {
            let cloud = PointCloud::with_intensity(
                pts.iter().map(|(x, y, z, _)| Point::new(*x as f64, *y as f64, *z as f64)).collect(),
                pts.iter().map(|t| t.3).collect(),
            ).unwrap();
            prop_assert_eq!(parse_point_cloud(&encode_point_cloud(&cloud), p()).unwrap(), cloud);
        }

        #[test]
        fn label_round_trip_within_rounding(
            x in 5.0..60.0f64, y in -20.0..20.0f64, z in -1.5..0.5f64,
            l in 0.5..6.0f64, w in 0.4..2.5f64, h in 0.8..2.5f64, yaw in -1.5..1.5f64, score in 0.0..1.0f64,
        ) {
            let calib = axis_swap_calib();
            let b = OrientedBox3D::new(Point::new(x, y, z), Vector3::new(l, w, h), yaw).unwrap();
            let rec = LabelRecord { class: "Car".into(), bbox: b, score };
            let text = format_labels(&[rec], &calib);
            let back = parse_labels(&text, p(), &calib).unwrap().remove(0);
            let r = back.bbox;
            prop_assert!((r.length() - l).abs() <= 0.005 + 1e-9);
            prop_assert!((r.width() - w).abs() <= 0.005 + 1e-9);
            prop_assert!((r.height() - h).abs() <= 0.005 + 1e-9);
            let bottom = |q: &OrientedBox3D| Vector3::new(q.center().x, q.center().y, q.center().z - q.height() / 2.0);
            let d = bottom(&r) - bottom(&b);
            prop_assert!(d.iter().all(|v| v.abs() <= 0.005 + 1e-9), "{d:?}");
            let dyaw = (r.yaw() - b.yaw()).rem_euclid(PI);
            prop_assert!(dyaw.min(PI - dyaw) <= 0.005 + 1e-9);
            prop_assert!((back.score.unwrap() - score).abs() <= 0.00005 + 1e-12);
        }

        #[test]
        fn calib_round_trip_is_exact(vals in proptest::collection::vec(-1000.0..1000.0f64, 33)) {
            let c = CalibrationSet::new(
                Matrix3x4::from_row_slice(&vals[0..12]),
                Matrix3::from_row_slice(&vals[12..21]),
                Matrix3x4::from_row_slice(&vals[21..33]),
                ImageSize::new(375, 1242),
            ).unwrap();
            prop_assert_eq!(parse_calib(&format_calib(&c), p(), None).unwrap(), c);
        }
    }
}
