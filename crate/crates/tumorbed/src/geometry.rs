//! Planar geometry for tumor bed extents.
//!
//! The bed is the convex hull of all detected cancer. Its clinical extent is
//! summarized by the longest diagonal `d1` between hull vertices, the longest
//! chord `d2` perpendicular to that diagonal, and `d_prim = sqrt(d1 * d2)`.
//!
//! `d2` is found by rotating the hull so the diagonal lies on the +x axis and
//! sweeping vertical chords through every vertex abscissa. The vertical extent
//! of a convex polygon as a function of x is concave and piecewise linear with
//! breakpoints exactly at vertex abscissae, so the vertex sweep attains the
//! global maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in level-0 pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: Point2) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn dist2(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Cross product of (b - a) and (c - a); positive when a->b->c turns left.
#[inline]
pub fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// A line segment with its cached Euclidean length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
    pub length: f64,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Segment {
            a,
            b,
            length: a.dist(b),
        }
    }
}

/// An ordered planar point ring, counter-clockwise, no repeated terminal
/// vertex. Hulls produced by [`convex_hull`] are strictly convex (collinear
/// boundary points removed). Rings with fewer than three vertices or with
/// (near-)zero area are degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Builds a polygon from a vertex ring, normalizing orientation to CCW.
    pub fn new(mut vertices: Vec<Point2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Polygon { vertices }
    }

    /// Builds from vertices already known to be in CCW order.
    pub(crate) fn from_ccw(vertices: Vec<Point2>) -> Self {
        Polygon { vertices }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Signed area (positive for CCW rings).
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Zero-area flag: fewer than three vertices, or area negligible
    /// relative to the squared bounding-box diagonal.
    pub fn is_degenerate(&self) -> bool {
        if self.vertices.len() < 3 {
            return true;
        }
        let (lo, hi) = self.bbox();
        let scale2 = lo.dist2(hi);
        self.area() <= scale2 * 1e-12
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bbox(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Even-odd point containment. Boundary behavior follows the half-open
    /// crossing rule, which is deterministic and consistent across cells.
    pub fn contains(&self, p: Point2) -> bool {
        let v = &self.vertices;
        let n = v.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            if (v[i].y > p.y) != (v[j].y > p.y) {
                let t = (p.y - v[j].y) / (v[i].y - v[j].y);
                let x_cross = v[j].x + t * (v[i].x - v[j].x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Clips this polygon to an axis-aligned rectangle (Sutherland-Hodgman).
    /// Intended for convex subjects; the result is the convex intersection.
    pub fn clip_to_rect(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        let mut ring: Vec<Point2> = self.vertices.clone();
        // Each closure returns signed distance into the kept half-plane.
        let planes: [Box<dyn Fn(Point2) -> f64>; 4] = [
            Box::new(move |p| p.x - x0),
            Box::new(move |p| x1 - p.x),
            Box::new(move |p| p.y - y0),
            Box::new(move |p| y1 - p.y),
        ];
        for plane in &planes {
            if ring.is_empty() {
                break;
            }
            let mut out = Vec::with_capacity(ring.len() + 2);
            for i in 0..ring.len() {
                let cur = ring[i];
                let prev = ring[(i + ring.len() - 1) % ring.len()];
                let dc = plane(cur);
                let dp = plane(prev);
                if dp >= 0.0 {
                    out.push(prev);
                }
                if (dp >= 0.0) != (dc >= 0.0) {
                    let t = dp / (dp - dc);
                    out.push(Point2::new(
                        prev.x + t * (cur.x - prev.x),
                        prev.y + t * (cur.y - prev.y),
                    ));
                }
            }
            ring = out;
        }
        Polygon::from_ccw(ring)
    }
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Convex hull by Andrew's monotone chain, O(n log n).
///
/// Returns the minimal convex polygon containing the input, CCW, starting at
/// the lexicographically smallest point, with collinear boundary points
/// removed. Degenerate inputs (one point, two points, all collinear) yield a
/// degenerate one- or two-vertex polygon.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n <= 2 {
        return Ok(Polygon::from_ccw(pts));
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(2 * n);
    // Lower chain.
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // Upper chain.
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() == 2 && hull[0].x == hull[1].x && hull[0].y == hull[1].y {
        hull.pop();
    }
    Ok(Polygon::from_ccw(hull))
}

/// Longest diagonal between hull vertices (rotating calipers, O(n)).
///
/// Ties are broken by the lexicographically smallest vertex-index pair, which
/// matches an all-pairs scan applying the same rule.
pub fn polygon_diameter(hull: &Polygon) -> Result<Segment> {
    let v = hull.vertices();
    let n = v.len();
    if n < 3 || hull.is_degenerate() {
        return Err(Error::DegenerateHull);
    }

    let mut best_d2 = f64::NEG_INFINITY;
    let mut best_pair = (usize::MAX, usize::MAX);
    let mut consider = |i: usize, j: usize| {
        let d2 = v[i].dist2(v[j]);
        let pair = if i < j { (i, j) } else { (j, i) };
        if d2 > best_d2 || (d2 == best_d2 && pair < best_pair) {
            best_d2 = d2;
            best_pair = pair;
        }
    };

    // Caliper walk over antipodal vertex pairs: j chases the vertex farthest
    // from edge (i, i+1); every diameter-achieving pair is visited.
    let mut i = 0;
    let mut j = 1;
    while i < j {
        loop {
            consider(i, j);
            let nj = (j + 1) % n;
            let ni = (i + 1) % n;
            let edge_i = Point2::new(v[ni].x - v[i].x, v[ni].y - v[i].y);
            let edge_j = Point2::new(v[nj].x - v[j].x, v[nj].y - v[j].y);
            if edge_j.x * edge_i.y - edge_j.y * edge_i.x >= 0.0 {
                break;
            }
            j = nj;
        }
        i += 1;
    }

    let (a, b) = best_pair;
    Ok(Segment::new(v[a], v[b]))
}

/// A hull rotated so its longest diagonal lies on the +x axis, spanning
/// x in [0, diag_len]. Keeps the transform so results can be mapped back.
#[derive(Debug, Clone)]
pub struct RotatedHull {
    pub polygon: Polygon,
    /// Rotation angle applied, `-atan2(y2 - y1, x2 - x1)` with the diagonal
    /// oriented so its second endpoint is the upper one.
    pub theta: f64,
    /// First endpoint of the oriented diagonal; maps to the origin.
    pub pivot: Point2,
    pub diag_len: f64,
}

impl RotatedHull {
    /// Maps a rotated-frame point back to original coordinates.
    pub fn to_original(&self, p: Point2) -> Point2 {
        let (sin, cos) = (-self.theta).sin_cos();
        Point2::new(
            self.pivot.x + p.x * cos - p.y * sin,
            self.pivot.y + p.x * sin + p.y * cos,
        )
    }
}

/// Rotates `hull` about the diagonal's first endpoint so the diagonal lies on
/// the +x axis. The diagonal is oriented with its second endpoint above the
/// first (ties broken toward +x), and the rotation angle is
/// `theta = -atan2(dy, dx)`.
pub fn rotate_about_diagonal(hull: &Polygon, diag: &Segment) -> RotatedHull {
    let (a, b) = orient_upward(diag.a, diag.b);
    let theta = -f64::atan2(b.y - a.y, b.x - a.x);
    let (sin, cos) = theta.sin_cos();
    let rotated: Vec<Point2> = hull
        .vertices()
        .iter()
        .map(|p| {
            let dx = p.x - a.x;
            let dy = p.y - a.y;
            Point2::new(dx * cos - dy * sin, dx * sin + dy * cos)
        })
        .collect();
    RotatedHull {
        polygon: Polygon::from_ccw(rotated),
        theta,
        pivot: a,
        diag_len: diag.length,
    }
}

/// Orders segment endpoints so the second lies above the first; for
/// horizontal segments, so the second lies to the right.
fn orient_upward(a: Point2, b: Point2) -> (Point2, Point2) {
    if b.y > a.y || (b.y == a.y && b.x >= a.x) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Longest chord perpendicular to the diagonal of a rotated hull.
///
/// Sweeps the vertical line through every vertex abscissa, intersecting it
/// with the hull boundary; the diagonal's own endpoints are excluded since
/// they yield zero-length chords. The winning chord is returned in original
/// (un-rotated) coordinates; ties go to the smallest vertex index.
pub fn longest_perpendicular_chord(rotated: &RotatedHull) -> Result<Segment> {
    let v = rotated.polygon.vertices();
    let n = v.len();
    if n < 3 {
        return Err(Error::DegenerateHull);
    }

    // The diagonal endpoints are the unique extreme abscissae of the rotated
    // hull (otherwise the diagonal would not be the diameter).
    let i_lo = (0..n)
        .min_by(|&a, &b| v[a].x.partial_cmp(&v[b].x).unwrap())
        .unwrap();
    let i_hi = (0..n)
        .max_by(|&a, &b| v[a].x.partial_cmp(&v[b].x).unwrap())
        .unwrap();

    let mut best: Option<(f64, Point2, Point2)> = None;
    for k in 0..n {
        if k == i_lo || k == i_hi {
            continue;
        }
        if let Some((y_lo, y_hi)) = vertical_extent(v, v[k].x) {
            let len = y_hi - y_lo;
            if best.as_ref().is_none_or(|(l, _, _)| len > *l) {
                best = Some((len, Point2::new(v[k].x, y_lo), Point2::new(v[k].x, y_hi)));
            }
        }
    }

    match best {
        Some((len, lo, hi)) if len > 0.0 => {
            Ok(Segment::new(rotated.to_original(lo), rotated.to_original(hi)))
        }
        _ => Err(Error::ExtentUndefined),
    }
}

/// Intersects the vertical line at `x` with a convex ring, returning the
/// (min, max) boundary ordinates, or None when the line misses the ring.
fn vertical_extent(ring: &[Point2], x: f64) -> Option<(f64, f64)> {
    let n = ring.len();
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        if (p.x - x) * (q.x - x) > 0.0 {
            continue;
        }
        if p.x == q.x {
            if p.x == x {
                y_lo = y_lo.min(p.y.min(q.y));
                y_hi = y_hi.max(p.y.max(q.y));
            }
            continue;
        }
        let t = (x - p.x) / (q.x - p.x);
        if !(0.0..=1.0).contains(&t) {
            continue;
        }
        let y = p.y + t * (q.y - p.y);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if y_lo <= y_hi {
        Some((y_lo, y_hi))
    } else {
        None
    }
}

/// Tumor bed extent: diagonal `d1`, perpendicular chord `d2`, and
/// `d_prim = sqrt(d1 * d2)`, in pixels and millimeters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TumorBedExtent {
    pub d1_px: f64,
    pub d2_px: f64,
    pub d1_mm: f64,
    pub d2_mm: f64,
    pub d_prim_mm: f64,
    pub d1_segment: Segment,
    pub d2_segment: Segment,
    /// Rotation angle (radians) that brought the diagonal onto the +x axis.
    pub theta: f64,
}

/// Computes the tumor bed extent of a point set.
///
/// Composes hull construction, diameter search, rotation, and the
/// perpendicular chord sweep. Pixel lengths convert to millimeters via
/// `mpp * 1e-3` (microns per pixel). Degenerate point sets (fewer than three
/// non-collinear points) are an error; callers treat that as no measurable
/// bed.
pub fn tumor_bed_extent(points: &[Point2], mpp: f64) -> Result<TumorBedExtent> {
    if !(mpp.is_finite() && mpp > 0.0) {
        return Err(Error::invalid(format!("mpp must be positive, got {mpp}")));
    }
    let hull = convex_hull(points)?;
    extent_of_hull(&hull, mpp)
}

/// Extent of an already-built hull; see [`tumor_bed_extent`].
pub fn extent_of_hull(hull: &Polygon, mpp: f64) -> Result<TumorBedExtent> {
    if hull.is_degenerate() {
        return Err(Error::ExtentUndefined);
    }
    let diag = polygon_diameter(hull).map_err(|_| Error::ExtentUndefined)?;
    let rotated = rotate_about_diagonal(hull, &diag);
    let chord = longest_perpendicular_chord(&rotated)?;

    let px_to_mm = mpp * 1e-3;
    let d1_px = diag.length;
    let d2_px = chord.length;
    debug_assert!(d2_px <= d1_px * (1.0 + 1e-9));
    let d1_mm = d1_px * px_to_mm;
    let d2_mm = d2_px * px_to_mm;
    Ok(TumorBedExtent {
        d1_px,
        d2_px,
        d1_mm,
        d2_mm,
        d_prim_mm: (d1_mm * d2_mm).sqrt(),
        d1_segment: diag,
        d2_segment: chord,
        theta: rotated.theta,
    })
}
