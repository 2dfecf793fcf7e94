//! Small planar predicates shared by the mesh and the defect meter.

use crate::Vec2;

/// Twice the signed area of `(a, b, c)`; positive when counterclockwise.
#[inline]
pub fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Closed-segment intersection test (touching and collinear overlap count).
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Open-segment crossing: the interiors intersect in exactly one point.
pub fn segments_cross_properly(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

// Assumes `p` is collinear with `a`, `b`.
fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Area of the intersection of two counterclockwise triangles.
pub fn triangle_intersection_area(a: [Vec2; 3], b: [Vec2; 3]) -> f64 {
    let mut poly: Vec<Vec2> = a.to_vec();
    for k in 0..3 {
        let e0 = b[k];
        let e1 = b[(k + 1) % 3];
        let input = std::mem::take(&mut poly);
        if input.is_empty() {
            break;
        }
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let dc = orient(e0, e1, cur);
            let dp = orient(e0, e1, prev);
            if dc >= 0.0 {
                if dp < 0.0 {
                    poly.push(prev + (cur - prev) * (dp / (dp - dc)));
                }
                poly.push(cur);
            } else if dp >= 0.0 {
                poly.push(prev + (cur - prev) * (dp / (dp - dc)));
            }
        }
    }
    polygon_area(&poly)
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        twice += cross(poly[i], poly[(i + 1) % poly.len()]);
    }
    0.5 * twice
}
