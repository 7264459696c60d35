//! Geometry primitives shared by every pipeline stage.
//!
//! Frame convention: right-handed LiDAR frame, `z` up, yaw measured
//! counterclockwise from `+x` about `+z` (the KITTI velodyne convention).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod polygon;

pub type Point = Point3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box size must be strictly positive and finite, got ({0}, {1}, {2})")]
    InvalidSize(f64, f64, f64),
    #[error("box pose must be finite")]
    NonFinitePose,
    #[error("point {0} has a non-finite coordinate")]
    NonFinitePoint(usize),
    #[error("intensity channel has {got} values for {expected} points")]
    IntensityLength { expected: usize, got: usize },
    #[error("meta shape for `{0}` needs three positive finite extents")]
    InvalidMetaShape(String),
}

/// A frame of LiDAR returns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    intensity: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinitePoint(i));
        }
        Ok(Self {
            points,
            intensity: None,
        })
    }

    pub fn with_intensity(points: Vec<Point>, intensity: Vec<f32>) -> Result<Self, GeometryError> {
        if intensity.len() != points.len() {
            return Err(GeometryError::IntensityLength {
                expected: points.len(),
                got: intensity.len(),
            });
        }
        let mut cloud = Self::new(points)?;
        cloud.intensity = Some(intensity);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn intensity(&self) -> Option<&[f32]> {
        self.intensity.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point {
        &self.points[index]
    }
}

/// Maps any angle onto the canonical yaw interval `[-π/2, π/2)`.
///
/// A rectangle is symmetric under a half turn, so `θ` and `θ + π` describe
/// the same box.
pub fn canonical_yaw(yaw: f64) -> f64 {
    let mut y = yaw - PI * ((yaw + FRAC_PI_2) / PI).floor();
    if y >= FRAC_PI_2 {
        y -= PI;
    }
    if y < -FRAC_PI_2 {
        y += PI;
    }
    y
}

/// An oriented 3D box: center, `(l, w, h)` extents along the box-frame
/// `x`, `y`, `z` axes and a yaw about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3D {
    center: Point,
    size: Vector3<f64>,
    yaw: f64,
}

impl OrientedBox3D {
    /// Builds a box, canonicalizing the yaw into `[-π/2, π/2)`.
    pub fn new(center: Point, size: Vector3<f64>, yaw: f64) -> Result<Self, GeometryError> {
        if !(size.iter().all(|s| s.is_finite() && *s > 0.0)) {
            return Err(GeometryError::InvalidSize(size.x, size.y, size.z));
        }
        if !(center.iter().all(|c| c.is_finite()) && yaw.is_finite()) {
            return Err(GeometryError::NonFinitePose);
        }
        Ok(Self {
            center,
            size,
            yaw: canonical_yaw(yaw),
        })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn size(&self) -> &Vector3<f64> {
        &self.size
    }

    pub fn length(&self) -> f64 {
        self.size.x
    }

    pub fn width(&self) -> f64 {
        self.size.y
    }

    pub fn height(&self) -> f64 {
        self.size.z
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn volume(&self) -> f64 {
        self.size.x * self.size.y * self.size.z
    }

    pub fn bev_area(&self) -> f64 {
        self.size.x * self.size.y
    }

    pub fn z_range(&self) -> (f64, f64) {
        let half = self.size.z / 2.0;
        (self.center.z - half, self.center.z + half)
    }

    /// Expresses `p` in the box frame: translate by `-center`, then rotate
    /// by `-yaw` about `z`.
    pub fn to_box_frame(&self, p: &Point) -> Vector3<f64> {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    /// Inverse of [`to_box_frame`](Self::to_box_frame).
    pub fn from_box_frame(&self, local: &Vector3<f64>) -> Point {
        let (s, c) = self.yaw.sin_cos();
        Point::new(
            self.center.x + c * local.x - s * local.y,
            self.center.y + s * local.x + c * local.y,
            self.center.z + local.z,
        )
    }

    /// Boundary-inclusive membership test.
    pub fn contains(&self, p: &Point) -> bool {
        self.contains_with_slack(p, 0.0)
    }

    pub fn contains_with_slack(&self, p: &Point, slack: f64) -> bool {
        let q = self.to_box_frame(p);
        q.x.abs() <= self.size.x / 2.0 + slack
            && q.y.abs() <= self.size.y / 2.0 + slack
            && q.z.abs() <= self.size.z / 2.0 + slack
    }

    /// The eight corners.
    ///
    /// Indices 0..4 are the bottom face (`z = -h/2`) and 4..8 the top face;
    /// within a face the order is `(+l,+w)`, `(-l,+w)`, `(-l,-w)`, `(+l,-w)`
    /// in half-extents, counterclockwise seen from above.
    pub fn corners(&self) -> [Point; 8] {
        let h = self.size / 2.0;
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut out = [Point::origin(); 8];
        for (face, sz) in [-1.0, 1.0].into_iter().enumerate() {
            for (i, (sx, sy)) in signs.iter().enumerate() {
                out[face * 4 + i] = self.from_box_frame(&Vector3::new(sx * h.x, sy * h.y, sz * h.z));
            }
        }
        out
    }

    /// Footprint rectangle in the horizontal plane, counterclockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let c = self.corners();
        [
            [c[0].x, c[0].y],
            [c[1].x, c[1].y],
            [c[2].x, c[2].y],
            [c[3].x, c[3].y],
        ]
    }

    /// True when every parameter of `other` is within `tol` of `self`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.center - other.center).iter().all(|d| d.abs() <= tol)
            && (self.size - other.size).iter().all(|d| d.abs() <= tol)
            && (self.yaw - other.yaw).abs() <= tol
    }
}

pub fn box_corners(b: &OrientedBox3D) -> [Point; 8] {
    b.corners()
}

pub fn point_in_box(p: &Point, b: &OrientedBox3D) -> bool {
    b.contains(p)
}

pub fn to_box_frame(p: &Point, b: &OrientedBox3D) -> Vector3<f64> {
    b.to_box_frame(p)
}

/// Per-class template of box proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaShape {
    pub class: String,
    /// `(l, w, h)` scaled to sum to one.
    pub normalized: [f64; 3],
    /// The extents in meters the template was built from.
    pub extents: [f64; 3],
}

impl MetaShape {
    pub fn from_extents(class: impl Into<String>, extents: [f64; 3]) -> Result<Self, GeometryError> {
        let class = class.into();
        if !extents.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(GeometryError::InvalidMetaShape(class));
        }
        Ok(Self {
            normalized: normalize_shape(extents),
            extents,
            class,
        })
    }
}

/// Scales a triple of positive extents to sum to one.
pub fn normalize_shape(extents: [f64; 3]) -> [f64; 3] {
    let sum: f64 = extents.iter().sum();
    extents.map(|e| e / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bx(c: [f64; 3], s: [f64; 3], yaw: f64) -> OrientedBox3D {
        OrientedBox3D::new(Point::new(c[0], c[1], c[2]), Vector3::new(s[0], s[1], s[2]), yaw).unwrap()
    }

    #[test]
    fn unit_cube_corners() {
        let b = bx([0.0; 3], [1.0; 3], 0.0);
        let mut seen: Vec<[i32; 3]> = b
            .corners()
            .iter()
            .map(|p| [p.x, p.y, p.z].map(|c| (c * 2.0).round() as i32))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 8);
        assert!(b.corners().iter().all(|p| p.iter().all(|c| (c.abs() - 0.5).abs() < 1e-15)));
    }

    #[test]
    fn quarter_turn_swaps_footprint_extents() {
        let b = bx([0.0; 3], [2.0, 1.0, 1.0], FRAC_PI_2);
        let xs = b.corners().map(|p| p.x);
        let ys = b.corners().map(|p| p.y);
        let span = |v: [f64; 8]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert_abs_diff_eq!(span(xs), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(span(ys), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn corners_match_rotation_matrix() {
        let yaw = PI / 6.0;
        let b = bx([1.0, -2.0, 0.5], [4.0, 2.0, 1.5], yaw);
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let corners = b.corners();
        for (face, sz) in [-1.0, 1.0].into_iter().enumerate() {
            for (i, (sx, sy)) in signs.iter().enumerate() {
                let local = Vector3::new(sx * 2.0, sy * 1.0, sz * 0.75);
                let expected = Point::new(1.0, -2.0, 0.5) + rot * local;
                assert_abs_diff_eq!(corners[face * 4 + i], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn membership_is_boundary_inclusive() {
        let b = bx([0.0; 3], [2.0, 2.0, 2.0], 0.3);
        assert!(b.contains(&Point::origin()));
        let face = b.from_box_frame(&Vector3::new(1.0, 0.0, 0.0));
        let q = b.to_box_frame(&face);
        // Snap to the exact face so rounding in the rotation cannot push it out.
        let on_face = b.from_box_frame(&Vector3::new(q.x.min(1.0), q.y, q.z));
        assert!(b.contains(&on_face));
        let axis_aligned = bx([0.0; 3], [2.0, 2.0, 2.0], 0.0);
        assert!(axis_aligned.contains(&Point::new(1.0, 0.0, 0.0)));
        assert!(axis_aligned.contains(&Point::new(1.0, 1.0, 1.0)));
        assert!(!axis_aligned.contains(&Point::new(1.0 + 1e-9, 0.0, 0.0)));
    }

    #[test]
    fn box_frame_of_center_and_corner() {
        let b = bx([3.0, 4.0, 5.0], [1.0; 3], 0.7);
        assert_abs_diff_eq!(b.to_box_frame(&Point::new(3.0, 4.0, 5.0)), Vector3::zeros(), epsilon = 1e-15);
        for c in b.corners() {
            let q = b.to_box_frame(&c);
            assert!(q.iter().all(|v| (v.abs() - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn yaw_is_canonicalized() {
        for yaw in [-10.0, -PI, -FRAC_PI_2, 0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, 7.5] {
            let y = canonical_yaw(yaw);
            assert!((-FRAC_PI_2..FRAC_PI_2).contains(&y), "{yaw} -> {y}");
            let turns = (yaw - y) / PI;
            assert_abs_diff_eq!(turns, turns.round(), epsilon = 1e-12);
        }
        assert_eq!(canonical_yaw(FRAC_PI_2), -FRAC_PI_2);
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(OrientedBox3D::new(Point::origin(), Vector3::new(0.0, 1.0, 1.0), 0.0).is_err());
        assert!(OrientedBox3D::new(Point::origin(), Vector3::new(1.0, -1.0, 1.0), 0.0).is_err());
        assert!(OrientedBox3D::new(Point::new(f64::NAN, 0.0, 0.0), Vector3::new(1.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn meta_shape_normalizes() {
        let m = MetaShape::from_extents("Car", [3.9, 1.6, 1.56]).unwrap();
        assert_abs_diff_eq!(m.normalized.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(MetaShape::from_extents("Car", [1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn cloud_rejects_non_finite() {
        assert_eq!(
            PointCloud::new(vec![Point::origin(), Point::new(0.0, f64::INFINITY, 0.0)]),
            Err(GeometryError::NonFinitePoint(1))
        );
    }

    // Half-space oracle: a point is inside iff it lies on the inner side of
    // all six face planes, each plane built from three corners.
    fn half_space_inside(b: &OrientedBox3D, p: &Point) -> bool {
        let c = b.corners();
        let faces = [
            [0, 1, 2], // bottom
            [4, 6, 5], // top
            [0, 3, 7], // +l
            [1, 5, 6], // -l
            [0, 4, 5], // +w
            [2, 6, 7], // -w
        ];
        let centroid = c.iter().fold(Vector3::zeros(), |acc, q| acc + q.coords) / 8.0;
        faces.iter().all(|f| {
            let n = (c[f[1]] - c[f[0]]).cross(&(c[f[2]] - c[f[0]]));
            let inward = (Point::from(centroid) - c[f[0]]).dot(&n).signum();
            (p - c[f[0]]).dot(&n) * inward >= -1e-9
        })
    }

    proptest! {
        #[test]
        fn corners_land_on_half_extents(
            cx in -50.0..50.0f64, cy in -50.0..50.0f64, cz in -3.0..3.0f64,
            l in 0.1..10.0f64, w in 0.1..10.0f64, h in 0.1..5.0f64, yaw in -10.0..10.0f64,
        ) {
            let b = bx([cx, cy, cz], [l, w, h], yaw);
            for c in b.corners() {
                let q = b.to_box_frame(&c);
                prop_assert!((q.x.abs() - l / 2.0).abs() < 1e-9);
                prop_assert!((q.y.abs() - w / 2.0).abs() < 1e-9);
                prop_assert!((q.z.abs() - h / 2.0).abs() < 1e-9);
            }
        }

        #[test]
        fn box_frame_round_trip(
            px in -50.0..50.0f64, py in -50.0..50.0f64, pz in -5.0..5.0f64, yaw in -10.0..10.0f64,
        ) {
            let b = bx([1.0, 2.0, 0.3], [2.0, 1.0, 1.0], yaw);
            let p = Point::new(px, py, pz);
            let back = b.from_box_frame(&b.to_box_frame(&p));
            prop_assert!((back - p).norm() < 1e-12);
        }

        #[test]
        fn membership_matches_half_space_oracle(
            px in -4.0..4.0f64, py in -4.0..4.0f64, pz in -2.0..2.0f64,
            l in 0.5..5.0f64, w in 0.5..5.0f64, h in 0.5..3.0f64, yaw in -4.0..4.0f64,
        ) {
            let b = bx([0.2, -0.1, 0.0], [l, w, h], yaw);
            let p = Point::new(px, py, pz);
            // Skip points within rounding distance of a face.
            let q = b.to_box_frame(&p);
            let margin = (q.x.abs() - l / 2.0).abs().min((q.y.abs() - w / 2.0).abs()).min((q.z.abs() - h / 2.0).abs());
            prop_assume!(margin > 1e-7);
            prop_assert_eq!(b.contains(&p), half_space_inside(&b, &p));
        }

        #[test]
        fn membership_invariant_under_rigid_motion(
            px in -4.0..4.0f64, py in -4.0..4.0f64, pz in -2.0..2.0f64,
            yaw in -4.0..4.0f64, rot in -4.0..4.0f64, tx in -20.0..20.0f64, ty in -20.0..20.0f64,
        ) {
            let b = bx([0.5, 0.0, 0.0], [3.0, 1.5, 1.2], yaw);
            let p = Point::new(px, py, pz);
            let q = b.to_box_frame(&p);
            let margin = (q.x.abs() - 1.5).abs().min((q.y.abs() - 0.75).abs()).min((q.z.abs() - 0.6).abs());
            prop_assume!(margin > 1e-7);
            let (s, c) = rot.sin_cos();
            let mv = |v: &Point| Point::new(c * v.x - s * v.y + tx, s * v.x + c * v.y + ty, v.z);
            let moved = bx([mv(b.center()).x, mv(b.center()).y, 0.0], [3.0, 1.5, 1.2], yaw + rot);
            prop_assert_eq!(b.contains(&p), moved.contains(&mv(&p)));
        }

        #[test]
        fn half_turn_yaw_keeps_point_set(
            px in -3.0..3.0f64, py in -3.0..3.0f64, yaw in -4.0..4.0f64,
        ) {
            let a = bx([0.0; 3], [4.0, 2.0, 1.0], yaw);
            let b = bx([0.0; 3], [4.0, 2.0, 1.0], yaw + PI);
            let c = bx([0.0; 3], [2.0, 4.0, 1.0], yaw + FRAC_PI_2);
            let p = Point::new(px, py, 0.0);
            let q = a.to_box_frame(&p);
            prop_assume!((q.x.abs() - 2.0).abs() > 1e-7 && (q.y.abs() - 1.0).abs() > 1e-7);
            prop_assert_eq!(a.contains(&p), b.contains(&p));
            prop_assert_eq!(a.contains(&p), c.contains(&p));
        }
    }
}
