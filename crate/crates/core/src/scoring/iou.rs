use crate::geometry::polygon::{area, intersection_area};
use crate::geometry::OrientedBox3D;

/// Overlap area of the two rotated footprints.
pub fn bev_intersection_area(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    // Cheap reject on the circumscribed circles.
    let ra = 0.5 * a.length().hypot(a.width());
    let rb = 0.5 * b.length().hypot(b.width());
    let dc = (a.center().x - b.center().x).hypot(a.center().y - b.center().y);
    if dc > ra + rb {
        return 0.0;
    }
    intersection_area(&a.bev_corners(), &b.bev_corners())
}

/// Bird's-eye-view IoU of two oriented boxes.
pub fn bev_iou(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = area(&a.bev_corners()) + area(&b.bev_corners()) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
