//! Convex polygon clipping (Sutherland–Hodgman) and shoelace area.
//!
//! Polygons are vertex lists in counterclockwise order.

pub type Vertex = [f64; 2];

/// Signed shoelace area; positive for counterclockwise polygons.
pub fn signed_area(poly: &[Vertex]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

pub fn area(poly: &[Vertex]) -> f64 {
    signed_area(poly).abs()
}

#[inline]
fn cross(o: Vertex, a: Vertex, b: Vertex) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn line_intersection(p: Vertex, q: Vertex, a: Vertex, b: Vertex) -> Vertex {
    // Intersection of segment p→q with the infinite line through a→b.
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Clips `subject` against the convex counterclockwise polygon `clip`.
///
/// Returns the intersection polygon; empty when they do not overlap.
pub fn clip_convex(subject: &[Vertex], clip: &[Vertex]) -> Vec<Vertex> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= 0.0;
            let prev_in = cross(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

/// Area of the intersection of two convex counterclockwise polygons.
pub fn intersection_area(a: &[Vertex], b: &[Vertex]) -> f64 {
    area(&clip_convex(a, b))
}
