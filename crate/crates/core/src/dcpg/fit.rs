//! Search-based L-shape box fitting with the closeness criterion.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;

use super::DcpgError;
use crate::geometry::{OrientedBox3D, Point};

/// Yaw search step.
pub const YAW_STEP_DEG: usize = 1;
/// Lower clamp on point-to-edge distances in the closeness score, meters.
pub const CLOSENESS_FLOOR: f64 = 1e-3;
/// Horizontal extent below which a footprint axis counts as degenerate,
/// and the minimum extent given to any fitted axis.
pub const MIN_EXTENT: f64 = 1e-3;

/// Closeness of the points to the rectangle edges aligned with heading
/// `theta`: each point contributes the inverse of its distance to the
/// nearest of the four fitted edges.
pub fn closeness_score(points: &[[f64; 2]], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let proj: Vec<(f64, f64)> = points.iter().map(|p| (p[0] * c + p[1] * s, -p[0] * s + p[1] * c)).collect();
    let (mut min1, mut max1, mut min2, mut max2) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(a, b) in &proj {
        min1 = min1.min(a);
        max1 = max1.max(a);
        min2 = min2.min(b);
        max2 = max2.max(b);
    }
    proj.iter()
        .map(|&(a, b)| {
            let d1 = (a - min1).min(max1 - a);
            let d2 = (b - min2).min(max2 - b);
            1.0 / d1.min(d2).max(CLOSENESS_FLOOR)
        })
        .sum()
}

/// Fits an oriented box to a cluster.
///
/// Yaw is searched over `[0°, 90°)` in 1° steps; the footprint is the
/// min/max rectangle in the best frame and the height the z-extent. The
/// longer footprint side becomes the length, so `l ≥ w` always holds.
pub fn fit_box(points: &[Point]) -> Result<OrientedBox3D, DcpgError> {
    if points.len() < 3 {
        return Err(DcpgError::DegenerateCluster(format!("{} points", points.len())));
    }
    // Work relative to the first point to keep the projections well scaled.
    let origin = points[0];
    let flat: Vec<[f64; 2]> = points.iter().map(|p| [p.x - origin.x, p.y - origin.y]).collect();

    let mut best = (0.0, f64::MIN);
    for deg in (0..90).step_by(YAW_STEP_DEG) {
        let theta = (deg as f64).to_radians();
        let score = closeness_score(&flat, theta);
        if score > best.1 {
            best = (theta, score);
        }
    }
    let theta = best.0;
    let (s, c) = theta.sin_cos();
    let (mut min1, mut max1, mut min2, mut max2) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let (mut zmin, mut zmax) = (f64::MAX, f64::MIN);
    for (p, q) in flat.iter().zip(points) {
        let a = p[0] * c + p[1] * s;
        let b = -p[0] * s + p[1] * c;
        min1 = min1.min(a);
        max1 = max1.max(a);
        min2 = min2.min(b);
        max2 = max2.max(b);
        zmin = zmin.min(q.z);
        zmax = zmax.max(q.z);
    }
    let (e1, e2) = (max1 - min1, max2 - min2);
    if e1 < MIN_EXTENT && e2 < MIN_EXTENT {
        return Err(DcpgError::DegenerateCluster(format!("footprint {e1:.2e} x {e2:.2e} m")));
    }
    let (m1, m2) = ((min1 + max1) / 2.0, (min2 + max2) / 2.0);
    let center = Point::new(
        origin.x + m1 * c - m2 * s,
        origin.y + m1 * s + m2 * c,
        (zmin + zmax) / 2.0,
    );
    let h = (zmax - zmin).max(MIN_EXTENT);
    let (l, w, yaw) = if e1 >= e2 {
        (e1, e2.max(MIN_EXTENT), theta)
    } else {
        (e2, e1.max(MIN_EXTENT), theta + FRAC_PI_2)
    };
    OrientedBox3D::new(center, Vector3::new(l, w, h), yaw).map_err(|e| DcpgError::DegenerateCluster(e.to_string()))
}
