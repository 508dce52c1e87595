//! Polygon rasterization and contour filling.
//!
//! Pixel `(x, y)` covers `[x, x+1) × [y, y+1)`; a pixel belongs to a polygon
//! when its centre does under the even-odd rule.

use std::collections::VecDeque;

use super::geometry::Point;
use super::morphology::{close, Shape};
use super::BinaryMask;
use crate::error::Result;

/// Even-odd scanline fill sampled at pixel centres.
pub fn rasterize_polygon(polygon: &[Point], width: usize, height: usize) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    if polygon.len() < 3 {
        return mask;
    }
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..polygon.len() {
            let a = polygon[i];
            let b = polygon[(i + 1) % polygon.len()];
            if (a.1 <= yc) != (b.1 <= yc) {
                xs.push(a.0 + (yc - a.1) * (b.0 - a.0) / (b.1 - a.1));
            }
        }
        xs.sort_by(|p, q| p.partial_cmp(q).expect("finite polygon"));
        for span in xs.chunks_exact(2) {
            // centres x + 0.5 in [span0, span1)
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            let mut x = start;
            while x < end {
                mask.set(x as usize, y, true);
                x += 1.0;
            }
        }
    }
    mask
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point, polygon: &[Point]) -> bool {
    let mut inside = false;
    for i in 0..polygon.len() {
        let a = polygon[i];
        let b = polygon[(i + 1) % polygon.len()];
        if (a.1 <= p.1) != (b.1 <= p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let orient = |a: Point, b: Point, c: Point| {
        let v = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    };
    let on_segment = |a: Point, b: Point, c: Point| {
        c.0 >= a.0.min(b.0) && c.0 <= a.0.max(b.0) && c.1 >= a.1.min(b.1) && c.1 <= a.1.max(b.1)
    };
    let (o1, o2) = (orient(p1, p2, q1), orient(p1, p2, q2));
    let (o3, o4) = (orient(q1, q2, p1), orient(q1, q2, p2));
    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(p1, p2, q1))
        || (o2 == 0 && on_segment(p1, p2, q2))
        || (o3 == 0 && on_segment(q1, q2, p1))
        || (o4 == 0 && on_segment(q1, q2, p2))
}

/// Whether a closed polygon has no self-intersections (adjacent edges may
/// share their common vertex).
pub fn is_simple_polygon(polygon: &[Point]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (polygon[i], polygon[(i + 1) % n]);
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (b1, b2) = (polygon[j], polygon[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

/// Close small gaps in a contour, then set every pixel the frame border cannot
/// reach through unset pixels (4-connected flood fill).
///
/// An open contour that stays open after closing comes back as the closed
/// contour itself.
pub fn fill_closed_contour(contour: &BinaryMask, close_radius: usize) -> Result<BinaryMask> {
    let closed = close(contour, close_radius, Shape::Disk)?;
    let (w, h) = closed.dims();
    let mut reached = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !closed.bits()[i] && !reached[i] {
            reached[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut reached, &mut queue);
        seed(x, h - 1, &mut reached, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut reached, &mut queue);
        seed(w - 1, y, &mut reached, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !closed.bits()[j] && !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    let bits = reached
        .iter()
        .zip(contour.bits())
        .map(|(&r, &c)| !r || c)
        .collect();
    BinaryMask::from_bits(w, h, bits)
}
