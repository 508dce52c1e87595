//! Planar geometry: convex hulls, rotating-calipers minimum-area rectangles
//! and axis-aligned boxes.

use std::f64::consts::PI;

use crate::error::{ensure, Result};

pub type Point = (f64, f64);

#[inline]
fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Axis-aligned box, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Aabb {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Tight envelope of a point set; `None` for an empty set.
    pub fn envelope(points: &[Point]) -> Option<Self> {
        let first = *points.first()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.0, first.1, first.0, first.1);
        for &(x, y) in &points[1..] {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some(Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> Point {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self::new(self.x * sx, self.y * sy, self.w * sx, self.h * sy)
    }
}

/// Rectangle with arbitrary orientation. `angle` is the direction of the
/// `size.0` side, in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct RotatedRect {
    pub center: Point,
    pub size: (f64, f64),
    pub angle: f64,
}

impl RotatedRect {
    pub fn new(center: Point, size: (f64, f64), angle: f64) -> Self {
        let mut angle = angle.rem_euclid(PI);
        if angle >= PI {
            angle = 0.0;
        }
        Self {
            center,
            size,
            angle,
        }
    }

    pub fn area(&self) -> f64 {
        self.size.0 * self.size.1
    }

    /// Corners in counter-clockwise order (for a y-up frame).
    pub fn corners(&self) -> [Point; 4] {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (hw, hh) = (self.size.0 / 2.0, self.size.1 / 2.0);
        let u = (c * hw, s * hw);
        let v = (-s * hh, c * hh);
        let (cx, cy) = self.center;
        [
            (cx - u.0 - v.0, cy - u.1 - v.1),
            (cx + u.0 - v.0, cy + u.1 - v.1),
            (cx + u.0 + v.0, cy + u.1 + v.1),
            (cx - u.0 + v.0, cy - u.1 + v.1),
        ]
    }

    /// Rebuild a rectangle from four corners as produced by [`RotatedRect::corners`].
    pub fn from_corners(corners: &[Point; 4]) -> Self {
        let cx = corners.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let cy = corners.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let e0 = (corners[1].0 - corners[0].0, corners[1].1 - corners[0].1);
        let e1 = (corners[3].0 - corners[0].0, corners[3].1 - corners[0].1);
        let w = e0.0.hypot(e0.1);
        let h = e1.0.hypot(e1.1);
        let angle = if w > 0.0 {
            e0.1.atan2(e0.0)
        } else if h > 0.0 {
            e1.1.atan2(e1.0) - PI / 2.0
        } else {
            0.0
        };
        Self::new((cx, cy), (w, h), angle)
    }

    pub fn envelope(&self) -> Aabb {
        Aabb::envelope(&self.corners()).expect("four corners")
    }

    /// Whether `p` lies inside or within `tol` of the rectangle.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (p.0 - self.center.0, p.1 - self.center.1);
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= self.size.0 / 2.0 + tol && across.abs() <= self.size.1 / 2.0 + tol
    }

    /// Grow both sides by `amount` (total, not per side).
    pub fn inflated(&self, amount: f64) -> Self {
        Self {
            size: (self.size.0 + amount, self.size.1 + amount),
            ..*self
        }
    }

    /// Map through the axis scaling `(x, y) -> (x * sx, y * sy)`, keeping the
    /// result a rectangle (exact when `sx == sy`).
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        if sx == sy {
            return Self {
                center: (self.center.0 * sx, self.center.1 * sy),
                size: (self.size.0 * sx, self.size.1 * sx),
                angle: self.angle,
            };
        }
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let u = (c * sx, s * sy);
        let v = (-s * sx, c * sy);
        let w = self.size.0 * u.0.hypot(u.1);
        let h = self.size.1 * v.0.hypot(v.1);
        Self::new(
            (self.center.0 * sx, self.center.1 * sy),
            (w, h),
            u.1.atan2(u.0),
        )
    }
}

/// Counter-clockwise convex hull (monotone chain) without collinear vertices.
///
/// Duplicates collapse; collinear input yields its two extreme points and a
/// single distinct point yields itself.
pub fn convex_hull(points: &[Point]) -> Result<Vec<Point>> {
    ensure!(!points.is_empty(), InvalidInput, "convex hull of an empty point set");
    ensure!(
        points.iter().all(|p| p.0.is_finite() && p.1.is_finite()),
        InvalidInput,
        "non-finite point"
    );
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();
    if pts.len() < 3 {
        return Ok(pts);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    Ok(hull)
}

/// Minimum-area enclosing rectangle by rotating calipers over the hull edges.
pub fn min_bounding_rectangle(points: &[Point]) -> Result<RotatedRect> {
    let hull = convex_hull(points)?;
    match hull.len() {
        1 => return Ok(RotatedRect::new(hull[0], (0.0, 0.0), 0.0)),
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            return Ok(RotatedRect::new(
                ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0),
                (len, 0.0),
                (b.1 - a.1).atan2(b.0 - a.0),
            ));
        }
        _ => {}
    }

    let n = hull.len();
    let at = |i: usize| hull[i % n];
    let dot = |p: Point, d: Point| p.0 * d.0 + p.1 * d.1;

    // Caliper indices: farthest along the edge, farthest from it, and
    // farthest against it. Each only advances as the base edge rotates.
    let mut far_along = 1;
    let mut far_normal = 1;
    let mut far_back = 1;
    let mut best: Option<(f64, RotatedRect)> = None;

    for i in 0..n {
        let p0 = at(i);
        let p1 = at(i + 1);
        let len = (p1.0 - p0.0).hypot(p1.1 - p0.1);
        let u = ((p1.0 - p0.0) / len, (p1.1 - p0.1) / len);
        let v = (-u.1, u.0);
        let rel = |j: usize| {
            let q = at(j);
            (q.0 - p0.0, q.1 - p0.1)
        };

        if i == 0 {
            far_along = i + 1;
            far_normal = i + 1;
        }
        far_along = far_along.max(i + 1);
        while dot(rel(far_along + 1), u) > dot(rel(far_along), u) {
            far_along += 1;
        }
        far_normal = far_normal.max(far_along);
        while dot(rel(far_normal + 1), v) > dot(rel(far_normal), v) {
            far_normal += 1;
        }
        if i == 0 {
            far_back = far_normal;
        }
        far_back = far_back.max(far_normal);
        while dot(rel(far_back + 1), u) < dot(rel(far_back), u) {
            far_back += 1;
        }

        let max_u = dot(rel(far_along), u);
        let min_u = dot(rel(far_back), u).min(0.0);
        let max_v = dot(rel(far_normal), v);
        let width = max_u - min_u;
        let height = max_v;
        let area = width * height;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let mid_u = (max_u + min_u) / 2.0;
            let mid_v = max_v / 2.0;
            let center = (
                p0.0 + u.0 * mid_u + v.0 * mid_v,
                p0.1 + u.1 * mid_u + v.1 * mid_v,
            );
            best = Some((area, RotatedRect::new(center, (width, height), u.1.atan2(u.0))));
        }
    }
    Ok(best.expect("hull has at least three edges").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force minimum over `steps` rotation angles in [0, π/2).
    pub(crate) fn scan_min_area(points: &[Point], steps: usize) -> f64 {
        (0..steps)
            .map(|k| {
                let a = k as f64 * (PI / 2.0) / steps as f64;
                let (c, s) = (a.cos(), a.sin());
                let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
                for &(x, y) in points {
                    let u = x * c + y * s;
                    let v = -x * s + y * c;
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
                (u1 - u0) * (v1 - v0)
            })
            .fold(f64::MAX, f64::min)
    }

    #[test]
    fn hull_drops_interior_point() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    }

    #[test]
    fn hull_of_collinear_points() {
        let pts: Vec<Point> = (0..7).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert_eq!(convex_hull(&pts).unwrap(), vec![(0.0, 0.0), (6.0, 12.0)]);
    }

    #[test]
    fn hull_rejects_empty() {
        assert!(convex_hull(&[]).is_err());
        assert!(min_bounding_rectangle(&[]).is_err());
    }

    #[test]
    fn hull_contains_random_points() {
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let pts: Vec<Point> = (0..100).map(|_| (next() * 10.0, next() * 10.0)).collect();
        let hull = convex_hull(&pts).unwrap();
        for &p in &pts {
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                assert!(cross(a, b, p) >= -1e-12, "point {p:?} outside edge {a:?}-{b:?}");
            }
        }
        for i in 0..hull.len() {
            let n = hull.len();
            assert!(cross(hull[i], hull[(i + 1) % n], hull[(i + 2) % n]) > 0.0);
        }
    }

    #[test]
    fn mbr_of_unit_square() {
        let r = min_bounding_rectangle(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!((r.area() - 1.0).abs() < 1e-12);
        assert!(r.angle.abs() < 1e-12 || (r.angle - PI / 2.0).abs() < 1e-12);
        assert!((r.center.0 - 0.5).abs() < 1e-12 && (r.center.1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mbr_of_rotated_square_beats_axis_box() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let pts = [(0.0, -h), (h, 0.0), (0.0, h), (-h, 0.0)];
        let r = min_bounding_rectangle(&pts).unwrap();
        assert!((r.area() - 1.0).abs() < 1e-12);
        assert!((Aabb::envelope(&pts).unwrap().area() - 2.0).abs() < 1e-12);
        assert!((scan_min_area(&pts, 3600) - r.area()).abs() < 1e-3);
    }

    #[test]
    fn mbr_of_single_point_and_segment() {
        let r = min_bounding_rectangle(&[(3.0, 4.0)]).unwrap();
        assert_eq!(r.area(), 0.0);
        assert_eq!(r.center, (3.0, 4.0));
        let r = min_bounding_rectangle(&[(0.0, 0.0), (3.0, 4.0), (1.5, 2.0)]).unwrap();
        assert_eq!(r.area(), 0.0);
        assert!((r.size.0 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn corners_round_trip() {
        let r = RotatedRect::new((3.0, -2.0), (4.0, 1.5), 0.7);
        let back = RotatedRect::from_corners(&r.corners());
        assert!((back.center.0 - 3.0).abs() < 1e-9 && (back.center.1 + 2.0).abs() < 1e-9);
        assert!((back.size.0 - 4.0).abs() < 1e-9 && (back.size.1 - 1.5).abs() < 1e-9);
        assert!((back.angle - 0.7).abs() < 1e-9);
    }

    #[test]
    fn scaled_rect_keeps_center_and_area_ratio() {
        let r = RotatedRect::new((10.0, 5.0), (4.0, 2.0), 0.3);
        let s = r.scaled(2.0, 2.0);
        assert_eq!(s.center, (20.0, 10.0));
        assert!((s.area() - 4.0 * r.area()).abs() < 1e-9);
        let t = RotatedRect::new((1.0, 1.0), (4.0, 2.0), 0.0).scaled(2.0, 3.0);
        assert!((t.size.0 - 8.0).abs() < 1e-12 && (t.size.1 - 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mbr_is_optimal_and_contains(pts in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 3..13)) {
            let r = min_bounding_rectangle(&pts).unwrap();
            prop_assert!(r.area() <= scan_min_area(&pts, 3600) + 1e-6);
            for &p in &pts {
                prop_assert!(r.contains(p, 1e-6));
            }
        }
    }
}
