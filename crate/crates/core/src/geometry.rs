//! Oriented boxes, convex polygon clipping and IoU.
//!
//! Angles are in radians, normalized to `[-π/2, π/2)`. The width of an
//! [`OrientedBox`] is the extent along its own x-axis before rotation, so a box
//! and its counterpart with swapped sides rotated by `π/2` cover the same
//! footprint; [`OrientedBox::is_equivalent`] compares footprints.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use core::fmt;

use crate::math;

/// On-edge classification tolerance used by clipping and vertex merging.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryError {
    /// Non-positive or non-finite box parameters.
    InvalidBox,
    /// `xmin >= xmax` or `ymin >= ymax`, or non-finite bounds.
    InvalidAxisAlignedBox,
    NotConvex,
    /// Four corners enclosing zero area.
    DegenerateQuad,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidBox => f.write_str("box needs finite parameters with w > 0 and h > 0"),
            GeometryError::InvalidAxisAlignedBox => {
                f.write_str("axis-aligned box needs finite bounds with xmin < xmax and ymin < ymax")
            }
            GeometryError::NotConvex => f.write_str("polygon is not convex"),
            GeometryError::DegenerateQuad => f.write_str("quadrilateral has zero area"),
        }
    }
}

impl core::error::Error for GeometryError {}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

/// Maps any angle onto `[-π/2, π/2)` (rectangles are symmetric under `π`).
pub fn normalize_angle(angle: f64) -> f64 {
    let mut t = angle - PI * math::floor((angle + FRAC_PI_2) / PI);
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// A rotated rectangle: center, side lengths and rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "[f64; 5]", into = "[f64; 5]")
)]
pub struct OrientedBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    angle: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<Self, GeometryError> {
        let finite = [cx, cy, w, h, angle].iter().all(|v| v.is_finite());
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(GeometryError::InvalidBox);
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            angle: normalize_angle(angle),
        })
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Same footprint moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Corners in counter-clockwise order, starting at local `(-w/2, -h/2)`.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = math::sin_cos(self.angle);
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)].map(|(lx, ly)| {
            Point::new(self.cx + c * lx - s * ly, self.cy + s * lx + c * ly)
        })
    }

    /// Whether two boxes describe the same footprint within `tol`, treating
    /// `(w, h, θ)` and `(h, w, θ + π/2)` as the same rectangle.
    pub fn is_equivalent(&self, other: &OrientedBox, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        let angle_close = |d: f64| normalize_angle(d).abs() <= tol;
        if !close(self.cx, other.cx) || !close(self.cy, other.cy) {
            return false;
        }
        let direct = close(self.w, other.w)
            && close(self.h, other.h)
            && angle_close(self.angle - other.angle);
        let swapped = close(self.w, other.h)
            && close(self.h, other.w)
            && angle_close(self.angle - other.angle - FRAC_PI_2);
        direct || swapped
    }

    /// Point-in-box test in the box frame; boundary counts as inside.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = math::sin_cos(self.angle);
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= self.w / 2.0 && ly.abs() <= self.h / 2.0
    }
}

impl TryFrom<[f64; 5]> for OrientedBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 5]) -> Result<Self, Self::Error> {
        OrientedBox::new(v[0], v[1], v[2], v[3], v[4])
    }
}

impl From<OrientedBox> for [f64; 5] {
    fn from(b: OrientedBox) -> Self {
        [b.cx, b.cy, b.w, b.h, b.angle]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "[f64; 4]", into = "[f64; 4]")
)]
pub struct AxisAlignedBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

impl AxisAlignedBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, GeometryError> {
        let finite = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite());
        if !finite || xmin >= xmax || ymin >= ymax {
            return Err(GeometryError::InvalidAxisAlignedBox);
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn xmin(&self) -> f64 {
        self.xmin
    }

    pub fn ymin(&self) -> f64 {
        self.ymin
    }

    pub fn xmax(&self) -> f64 {
        self.xmax
    }

    pub fn ymax(&self) -> f64 {
        self.ymax
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }

    /// The same rectangle as an angle-0 oriented box.
    pub fn to_oriented(&self) -> OrientedBox {
        OrientedBox {
            cx: (self.xmin + self.xmax) / 2.0,
            cy: (self.ymin + self.ymax) / 2.0,
            w: self.xmax - self.xmin,
            h: self.ymax - self.ymin,
            angle: 0.0,
        }
    }
}

impl TryFrom<[f64; 4]> for AxisAlignedBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        AxisAlignedBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<AxisAlignedBox> for [f64; 4] {
    fn from(b: AxisAlignedBox) -> Self {
        [b.xmin, b.ymin, b.xmax, b.ymax]
    }
}

/// Counter-clockwise convex polygon with duplicate and collinear vertices
/// merged. Fewer than three surviving vertices yields the empty polygon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Builds a polygon from vertices in either winding, rejecting reflex
    /// corners. Degenerate input (collinear or repeated points) is accepted
    /// and collapses to the empty polygon.
    pub fn new(points: &[Point]) -> Result<Self, GeometryError> {
        let poly = Self::from_convex_unchecked(points.to_vec());
        let n = poly.vertices.len();
        for i in 0..n {
            let a = poly.vertices[i];
            let b = poly.vertices[(i + 1) % n];
            let c = poly.vertices[(i + 2) % n];
            if b.sub(a).cross(c.sub(b)) < -EPS {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(poly)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn from_convex_unchecked(mut pts: Vec<Point>) -> Self {
        merge_degenerate(&mut pts);
        if pts.len() < 3 {
            return Self::empty();
        }
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        Self { vertices: pts }
    }

    /// Closed-boundary point test.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            b.sub(a).cross(p.sub(a)) >= 0.0
        })
    }

    pub fn centroid(&self) -> Option<Point> {
        let area = signed_area(&self.vertices);
        if area <= 0.0 {
            return None;
        }
        let n = self.vertices.len();
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let k = a.cross(b);
            sx += (a.x + b.x) * k;
            sy += (a.y + b.y) * k;
        }
        Some(Point::new(sx / (6.0 * area), sy / (6.0 * area)))
    }
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum();
    twice / 2.0
}

/// Drops repeated vertices and vertices lying on the segment joining their
/// neighbours, until none remain.
fn merge_degenerate(pts: &mut Vec<Point>) {
    loop {
        let n = pts.len();
        if n < 3 {
            if n == 2 && pts[0].sub(pts[1]).dot(pts[0].sub(pts[1])) <= EPS * EPS {
                pts.pop();
            }
            return;
        }
        let mut removed = false;
        let mut i = 0;
        while i < pts.len() && pts.len() >= 3 {
            let n = pts.len();
            let prev = pts[(i + n - 1) % n];
            let cur = pts[i];
            let next = pts[(i + 1) % n];
            let d = cur.sub(prev);
            let duplicate = d.dot(d) <= EPS * EPS;
            let collinear = cur.sub(prev).cross(next.sub(cur)).abs() <= EPS;
            if duplicate || collinear {
                pts.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            return;
        }
    }
}

pub fn obb_to_polygon(b: &OrientedBox) -> ConvexPolygon {
    ConvexPolygon {
        vertices: b.corners().to_vec(),
    }
}

/// Shoelace area, never negative.
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    signed_area(&p.vertices).abs()
}

/// Sutherland–Hodgman clipping of `subject` by every edge of `clip`.
pub fn polygon_intersection(subject: &ConvexPolygon, clip: &ConvexPolygon) -> ConvexPolygon {
    if subject.is_empty() || clip.is_empty() {
        return ConvexPolygon::empty();
    }
    let mut output = subject.vertices.clone();
    let n = clip.vertices.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip.vertices[i];
        let edge = clip.vertices[(i + 1) % n].sub(a);
        let side = |p: Point| edge.cross(p.sub(a));
        let input = core::mem::take(&mut output);
        let mut prev = *input.last().expect("non-empty");
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            let cur_in = cur_side >= -EPS;
            let prev_in = prev_side >= -EPS;
            if cur_in != prev_in {
                let t = prev_side / (prev_side - cur_side);
                output.push(Point::new(
                    prev.x + t * (cur.x - prev.x),
                    prev.y + t * (cur.y - prev.y),
                ));
            }
            if cur_in {
                output.push(cur);
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    ConvexPolygon::from_convex_unchecked(output)
}

/// Exact IoU of two oriented boxes. Touching footprints give 0.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    // Bounding-circle rejection.
    let (dx, dy) = (a.cx - b.cx, a.cy - b.cy);
    let reach = (math::sqrt(a.w * a.w + a.h * a.h) + math::sqrt(b.w * b.w + b.h * b.h)) / 2.0;
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    let inter = polygon_area(&polygon_intersection(&obb_to_polygon(a), &obb_to_polygon(b)));
    iou_from_areas(inter, a.area(), b.area())
}

pub fn aabb_iou(a: &AxisAlignedBox, b: &AxisAlignedBox) -> f64 {
    let iw = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let ih = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    iou_from_areas(iw * ih, a.area(), b.area())
}

fn iou_from_areas(inter: f64, area_a: f64, area_b: f64) -> f64 {
    if inter <= 0.0 {
        return 0.0;
    }
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Smallest axis-aligned box containing the four corners.
pub fn obb_to_hbb(b: &OrientedBox) -> AxisAlignedBox {
    let c = b.corners();
    let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
    let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in c {
        xmin = xmin.min(p.x);
        ymin = ymin.min(p.y);
        xmax = xmax.max(p.x);
        ymax = ymax.max(p.y);
    }
    AxisAlignedBox {
        xmin,
        ymin,
        xmax,
        ymax,
    }
}

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: &mut dyn Iterator<Item = &Point> = if pass == 0 {
            &mut pts.iter()
        } else {
            &mut pts.iter().rev()
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if b.sub(a).cross(p.sub(a)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle of four corners (rotating calipers over
/// the hull). The result is reported with its angle in `[-π/4, π/4)`, which
/// picks one of the two equivalent side/angle labelings.
pub fn quad_to_obb(corners: &[Point; 4]) -> Result<OrientedBox, GeometryError> {
    if corners.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::DegenerateQuad);
    }
    let hull = convex_hull(corners);
    let scale = corners
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(1.0, f64::max);
    if hull.len() < 3 || signed_area(&hull) <= EPS * scale {
        return Err(GeometryError::DegenerateQuad);
    }
    let n = hull.len();
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..n {
        let e = hull[(i + 1) % n].sub(hull[i]);
        let len = math::sqrt(e.dot(e));
        if len == 0.0 {
            continue;
        }
        let u = Point::new(e.x / len, e.y / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let pu = p.dot(u);
            let pv = p.dot(v);
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        let area = w * h;
        if best.as_ref().is_some_and(|(a, _)| area >= *a - EPS * (*a).max(1.0)) {
            continue;
        }
        let cu = (umin + umax) / 2.0;
        let cv = (vmin + vmax) / 2.0;
        let candidate = OrientedBox {
            cx: cu * u.x + cv * v.x,
            cy: cu * u.y + cv * v.y,
            w,
            h,
            angle: math::atan2(u.y, u.x),
        };
        best = Some((area, candidate));
    }
    let (_, b) = best.ok_or(GeometryError::DegenerateQuad)?;
    Ok(canonical_quarter(b))
}

fn canonical_quarter(b: OrientedBox) -> OrientedBox {
    let theta = normalize_angle(b.angle);
    if theta >= FRAC_PI_4 {
        OrientedBox {
            w: b.h,
            h: b.w,
            angle: theta - FRAC_PI_2,
            ..b
        }
    } else if theta < -FRAC_PI_4 {
        OrientedBox {
            w: b.h,
            h: b.w,
            angle: theta + FRAC_PI_2,
            ..b
        }
    } else {
        OrientedBox { angle: theta, ..b }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obb(cx: f64, cy: f64, w: f64, h: f64, a: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, w, h, a).unwrap()
    }

    fn aabb(x0: f64, y0: f64, x1: f64, y1: f64) -> AxisAlignedBox {
        AxisAlignedBox::new(x0, y0, x1, y1).unwrap()
    }

    fn square(x0: f64, y0: f64, s: f64) -> ConvexPolygon {
        ConvexPolygon::new(&[
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ])
        .unwrap()
    }

    fn same_point_set(a: &[Point], b: &[Point], tol: f64) -> bool {
        a.len() == b.len()
            && a.iter().all(|p| {
                b.iter()
                    .any(|q| (p.x - q.x).abs() <= tol && (p.y - q.y).abs() <= tol)
            })
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert_eq!(OrientedBox::new(0.0, 0.0, 0.0, 1.0, 0.0), Err(GeometryError::InvalidBox));
        assert_eq!(OrientedBox::new(0.0, 0.0, 1.0, -1.0, 0.0), Err(GeometryError::InvalidBox));
        assert_eq!(OrientedBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0), Err(GeometryError::InvalidBox));
        assert!(AxisAlignedBox::new(1.0, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn angle_normalization_range() {
        for k in -20..20 {
            let a = k as f64 * 0.37;
            let t = normalize_angle(a);
            assert!((-FRAC_PI_2..FRAC_PI_2).contains(&t), "{a} -> {t}");
            let turns = (a - t) / PI;
            assert!((turns - libm::round(turns)).abs() < 1e-12);
        }
        assert_eq!(normalize_angle(FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(normalize_angle(-FRAC_PI_2), -FRAC_PI_2);
    }

    #[test]
    fn polygon_of_axis_aligned_box() {
        let p = obb_to_polygon(&obb(0.0, 0.0, 2.0, 2.0, 0.0));
        let expected = [
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
        ];
        assert_eq!(p.vertices(), &expected);
        assert!(signed_area(p.vertices()) > 0.0);
    }

    #[test]
    fn polygon_of_quarter_turned_square_is_same_vertex_set() {
        let p0 = obb_to_polygon(&obb(0.0, 0.0, 2.0, 2.0, 0.0));
        let p1 = obb_to_polygon(&obb(0.0, 0.0, 2.0, 2.0, FRAC_PI_2));
        assert!(same_point_set(p0.vertices(), p1.vertices(), 1e-12));
        assert!(signed_area(p1.vertices()) > 0.0);
    }

    #[test]
    fn polygon_of_rotated_rectangle_matches_trig() {
        let b = obb(1.0, 2.0, 4.0, 2.0, FRAC_PI_4);
        let p = obb_to_polygon(&b);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        // Local corners rotated by 45 degrees, evaluated by hand.
        let expected = [(-2.0, -1.0), (2.0, -1.0), (2.0, 1.0), (-2.0, 1.0)]
            .map(|(x, y): (f64, f64)| Point::new(1.0 + r * (x - y), 2.0 + r * (x + y)));
        for (got, want) in p.vertices().iter().zip(expected.iter()) {
            assert!((got.x - want.x).abs() < 1e-12 && (got.y - want.y).abs() < 1e-12);
        }
        let c = p.centroid().unwrap();
        assert!((c.x - 1.0).abs() < 1e-9 && (c.y - 2.0).abs() < 1e-9);
    }

    #[test]
    fn shoelace_areas() {
        assert_eq!(polygon_area(&square(0.0, 0.0, 1.0)), 1.0);
        let collinear = ConvexPolygon::new(&[
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
        ])
        .unwrap();
        assert!(collinear.is_empty());
        assert_eq!(polygon_area(&collinear), 0.0);
        let tri = ConvexPolygon::new(&[
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(polygon_area(&tri), 2.0);
    }

    #[test]
    fn clockwise_input_is_reoriented_and_reflex_rejected() {
        let cw = ConvexPolygon::new(&[
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(signed_area(cw.vertices()) > 0.0);
        let dart = ConvexPolygon::new(&[
            Point::new(0.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 2.0),
            Point::new(1.0, 1.0),
        ]);
        assert_eq!(dart, Err(GeometryError::NotConvex));
    }

    #[test]
    fn collinear_vertices_are_merged() {
        let p = ConvexPolygon::new(&[
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
    }

    #[test]
    fn intersection_cases() {
        let s = square(0.0, 0.0, 1.0);
        let same = polygon_intersection(&s, &s);
        assert!((polygon_area(&same) - 1.0).abs() < 1e-9);

        let far = square(5.0, 5.0, 1.0);
        assert!(polygon_intersection(&s, &far).is_empty());

        let shifted = square(0.5, 0.0, 1.0);
        assert!((polygon_area(&polygon_intersection(&s, &shifted)) - 0.5).abs() < 1e-12);

        let touching = square(1.0, 0.0, 1.0);
        assert!(polygon_intersection(&s, &touching).is_empty());
    }

    #[test]
    fn rotated_iou_examples() {
        let a = obb(0.0, 0.0, 2.0, 2.0, 0.0);
        assert!((rotated_iou(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(rotated_iou(&a, &obb(100.0, 0.0, 2.0, 2.0, 0.0)), 0.0);
        let b = obb(1.0, 1.0, 2.0, 2.0, 0.0);
        assert!((rotated_iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        // Octagon of area 8(√2 − 1) over union 8 − 8(√2 − 1).
        let r = obb(0.0, 0.0, 2.0, 2.0, FRAC_PI_4);
        let inter = 8.0 * (core::f64::consts::SQRT_2 - 1.0);
        let want = inter / (8.0 - inter);
        assert!((rotated_iou(&a, &r) - want).abs() < 1e-12);
        assert!((want - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn edge_touching_boxes_have_zero_iou() {
        let a = obb(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = obb(2.0, 0.0, 2.0, 2.0, 0.0);
        assert_eq!(rotated_iou(&a, &b), 0.0);
        let c = obb(2.0, 2.0, 2.0, 2.0, 0.0);
        assert_eq!(rotated_iou(&a, &c), 0.0);
    }

    #[test]
    fn aabb_iou_examples() {
        let a = aabb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(aabb_iou(&a, &a), 1.0);
        assert_eq!(aabb_iou(&a, &aabb(2.0, 0.0, 3.0, 2.0)), 0.0);
        assert!((aabb_iou(&a, &aabb(1.0, 0.0, 3.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hbb_envelopes() {
        let e = obb_to_hbb(&obb(0.0, 0.0, 2.0, 2.0, 0.0));
        assert_eq!(<[f64; 4]>::from(e), [-1.0, -1.0, 1.0, 1.0]);
        let e = obb_to_hbb(&obb(0.0, 0.0, 2.0, 2.0, FRAC_PI_2));
        for (g, w) in <[f64; 4]>::from(e).iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((g - w).abs() < 1e-12);
        }
        let e = obb_to_hbb(&obb(0.0, 0.0, 2.0, 0.0001, FRAC_PI_4));
        // Half-extent: (w/2 + h/2)·cos 45°.
        let half = (1.0 + 0.00005) * core::f64::consts::FRAC_1_SQRT_2;
        for (g, w) in <[f64; 4]>::from(e).iter().zip([-half, -half, half, half]) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((half - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    }

    #[test]
    fn quad_to_obb_unit_square() {
        let q = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let b = quad_to_obb(&q).unwrap();
        assert!(b.is_equivalent(&obb(0.5, 0.5, 1.0, 1.0, 0.0), 1e-12));
        assert_eq!(b.angle(), 0.0);
    }

    #[test]
    fn quad_to_obb_diamond() {
        let q = [
            Point::new(0.0, -1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
        ];
        let b = quad_to_obb(&q).unwrap();
        let s = core::f64::consts::SQRT_2;
        assert!((b.angle().abs() - FRAC_PI_4).abs() < 1e-12);
        assert!(b.is_equivalent(&obb(0.0, 0.0, s, s, FRAC_PI_4), 1e-12));
    }

    #[test]
    fn quad_to_obb_rejects_degenerate() {
        let line = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(3.0, 3.0),
        ];
        assert_eq!(quad_to_obb(&line), Err(GeometryError::DegenerateQuad));
        let point = [Point::new(1.0, 1.0); 4];
        assert_eq!(quad_to_obb(&point), Err(GeometryError::DegenerateQuad));
    }

    #[test]
    fn quad_to_obb_ignores_corner_order() {
        let b = obb(10.0, -3.0, 6.0, 2.0, 0.3);
        let mut c = b.corners();
        c.swap(0, 2);
        c.swap(1, 3);
        assert!(quad_to_obb(&c).unwrap().is_equivalent(&b, 1e-9));
        c.reverse();
        assert!(quad_to_obb(&c).unwrap().is_equivalent(&b, 1e-9));
    }

    #[test]
    fn equivalence_handles_side_swap() {
        let a = obb(0.0, 0.0, 4.0, 2.0, 0.1);
        let b = obb(0.0, 0.0, 2.0, 4.0, 0.1 + FRAC_PI_2);
        assert!(a.is_equivalent(&b, 1e-12));
        assert!(!a.is_equivalent(&obb(0.0, 0.0, 4.0, 2.0, 0.2), 1e-6));
    }

    #[test]
    fn contains_matches_polygon_contains() {
        let b = obb(3.0, 1.0, 4.0, 1.5, 0.7);
        let p = obb_to_polygon(&b);
        for i in 0..40 {
            for j in 0..40 {
                let q = Point::new(i as f64 * 0.2 - 1.0, j as f64 * 0.2 - 3.0);
                assert_eq!(b.contains(q), p.contains(q), "{q:?}");
            }
        }
    }
}
