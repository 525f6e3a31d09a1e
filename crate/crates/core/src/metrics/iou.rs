//! Intersection-over-union for axis-aligned and rotated rectangles.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl AxisBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min <= x_max && y_min <= y_max) {
            return Err(Error::invalid(format!(
                "axis-aligned box needs min <= max, got ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Rectangle of `width × height` centered at `(cx, cy)`, rotated
/// counter-clockwise by `angle` radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    pub angle: f64,
}

impl RotatedBox {
    pub fn new(cx: f64, cy: f64, width: f64, height: f64, angle: f64) -> Result<Self> {
        if !(width >= 0.0 && height >= 0.0) {
            return Err(Error::invalid(format!(
                "rotated box needs non-negative extents, got {width} x {height}"
            )));
        }
        Ok(Self { cx, cy, width, height, angle })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.angle.sin_cos();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(x, y)| Point {
            x: self.cx + x * c - y * s,
            y: self.cy + x * s + y * c,
        })
    }

    /// Membership test in the box's own frame.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.width / 2.0 && v.abs() <= self.height / 2.0
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        self.corners().iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y)),
        )
    }
}

impl From<AxisBox> for RotatedBox {
    fn from(b: AxisBox) -> Self {
        RotatedBox {
            cx: (b.x_min + b.x_max) / 2.0,
            cy: (b.y_min + b.y_max) / 2.0,
            width: b.x_max - b.x_min,
            height: b.y_max - b.y_min,
            angle: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BBox {
    Axis(AxisBox),
    Rotated(RotatedBox),
}

impl BBox {
    pub fn to_rotated(self) -> RotatedBox {
        match self {
            BBox::Axis(b) => b.into(),
            BBox::Rotated(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

pub fn iou_axis_aligned(a: &AxisBox, b: &AxisBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// IoU of two rotated rectangles via Sutherland–Hodgman clipping and the
/// shoelace formula. Zero-area boxes give 0.
pub fn iou_rotated(a: &RotatedBox, b: &RotatedBox) -> f64 {
    let (area_a, area_b) = (a.area(), b.area());
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = polygon_area(&clip_convex(&a.corners(), &b.corners())).min(area_a.min(area_b));
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Dispatches to the axis-aligned formula when both boxes are axis-aligned.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    match (a, b) {
        (BBox::Axis(a), BBox::Axis(b)) => iou_axis_aligned(a, b),
        _ => iou_rotated(&a.to_rotated(), &b.to_rotated()),
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    // Segment p→q against the infinite line through a→b.
    let (dp, dq) = (cross(a, b, p), cross(a, b, q));
    let t = dp / (dp - dq);
    Point {
        x: p.x + t * (q.x - p.x),
        y: p.y + t * (q.y - p.y),
    }
}

/// Clips `subject` against the convex counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
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

pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            p.x * q.y - q.x * p.y
        })
        .sum();
    twice.abs() / 2.0
}

const MC_CHUNKS: usize = 64;

/// Monte-Carlo IoU estimate: uniform points over the joint bounding
/// rectangle, membership by projection onto each box's own axes. Shares no
/// code with the clipping path and serves as its oracle.
pub fn iou_monte_carlo(a: &RotatedBox, b: &RotatedBox, samples: usize, seed: u64) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    let (x0, y0) = (ax0.min(bx0), ay0.min(by0));
    let (x1, y1) = (ax1.max(bx1), ay1.max(by1));
    let per_chunk = samples.div_ceil(MC_CHUNKS);

    let (inter, union) = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(seed, &format!("iou-mc-{chunk}"));
            let take = per_chunk.min(samples.saturating_sub(chunk * per_chunk));
            let (mut inter, mut union) = (0u64, 0u64);
            for _ in 0..take {
                let p = Point {
                    x: x0 + (x1 - x0) * r.random::<f64>(),
                    y: y0 + (y1 - y0) * r.random::<f64>(),
                };
                let (ia, ib) = (a.contains(p), b.contains(p));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
            (inter, union)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));

    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
