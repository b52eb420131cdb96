//! Test oracles, independent of the library's implementation paths.

#![allow(dead_code)]
// Indexed loops keep the reference implementations close to their textbook
// statements.
#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorbed::geometry::{convex_hull, Point2, Polygon};
use tumorbed::mining::FeatureMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points_in_disk(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<Point2> {
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let x = rng.random_range(-radius..radius);
        let y = rng.random_range(-radius..radius);
        if x * x + y * y <= radius * radius {
            pts.push(Point2::new(x, y));
        }
    }
    pts
}

/// Random strictly-convex test hull with at most `max_points` generators.
pub fn random_hull(rng: &mut ChaCha8Rng, max_points: usize) -> Polygon {
    loop {
        let n = rng.random_range(3..=max_points);
        let scale = rng.random_range(1.0..1000.0);
        let pts = random_points_in_disk(rng, n, scale);
        let hull = convex_hull(&pts).expect("non-empty input");
        if !hull.is_degenerate() {
            return hull;
        }
    }
}

fn cross(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn triangle_contains_inclusive(a: Point2, b: Point2, c: Point2, p: Point2) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

/// Brute-force extreme-point test: a point belongs to the hull boundary iff
/// it is not inside (or on) any triangle of other input points.
pub fn extreme_points(points: &[Point2]) -> Vec<Point2> {
    let n = points.len();
    let mut out = Vec::new();
    'outer: for (i, &p) in points.iter().enumerate() {
        for a in 0..n {
            if a == i {
                continue;
            }
            for b in (a + 1)..n {
                if b == i {
                    continue;
                }
                for c in (b + 1)..n {
                    if c == i {
                        continue;
                    }
                    if triangle_contains_inclusive(points[a], points[b], points[c], p) {
                        continue 'outer;
                    }
                }
            }
        }
        out.push(p);
    }
    out
}

/// All-pairs diameter with the same tie-break as the implementation:
/// maximum squared distance, ties to the lexicographically smallest
/// vertex-index pair.
pub fn all_pairs_diameter(hull: &Polygon) -> (f64, (usize, usize)) {
    let v = hull.vertices();
    let mut best_d2 = f64::NEG_INFINITY;
    let mut best = (usize::MAX, usize::MAX);
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            let d2 = v[i].dist2(v[j]);
            if d2 > best_d2 || (d2 == best_d2 && (i, j) < best) {
                best_d2 = d2;
                best = (i, j);
            }
        }
    }
    (best_d2.sqrt(), best)
}

/// Vertical chord length of a convex ring at abscissa `x`, by scanning every
/// edge (no chain bookkeeping shared with the implementation).
pub fn chord_at(ring: &[Point2], x: f64) -> f64 {
    let n = ring.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        if p.x == q.x {
            if p.x == x {
                lo = lo.min(p.y.min(q.y));
                hi = hi.max(p.y.max(q.y));
            }
            continue;
        }
        let t = (x - p.x) / (q.x - p.x);
        if (0.0..=1.0).contains(&t) {
            let y = p.y + t * (q.y - p.y);
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if lo <= hi {
        hi - lo
    } else {
        0.0
    }
}

/// Dense positional chord sweep along x in (0, length): the maximum chord
/// over `n_positions` uniform samples. With `refine`, the best sample is
/// polished by golden-section search, valid because the width of a convex
/// polygon along its diagonal is concave in x.
pub fn dense_chord_sweep(ring: &[Point2], length: f64, n_positions: usize, refine: bool) -> f64 {
    let mut best = 0.0f64;
    let mut best_x = 0.0f64;
    for i in 0..n_positions {
        let x = length * (i as f64 + 0.5) / n_positions as f64;
        let w = chord_at(ring, x);
        if w > best {
            best = w;
            best_x = x;
        }
    }
    if refine && best > 0.0 {
        let step = length / n_positions as f64;
        let mut a = (best_x - step).max(0.0);
        let mut b = (best_x + step).min(length);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let mut f1 = chord_at(ring, x1);
        let mut f2 = chord_at(ring, x2);
        for _ in 0..120 {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = chord_at(ring, x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = chord_at(ring, x1);
            }
        }
        best = best.max(f1).max(f2);
    }
    best
}

/// Full-batch Lloyd k-means reference. Asserts the WCSS is non-increasing on
/// every iteration. Returns the final centroids and WCSS.
pub fn lloyd_kmeans(
    features: &FeatureMatrix,
    init: &[f64],
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let d = features.d();
    let k = init.len() / d;
    let n = features.n();
    let mut centroids = init.to_vec();
    let mut prev_wcss = f64::INFINITY;
    let mut wcss = 0.0;
    for _ in 0..max_iters {
        let mut assign = vec![0usize; n];
        wcss = 0.0;
        for i in 0..n {
            let row = features.row(i);
            let mut best = (0usize, f64::INFINITY);
            for c in 0..k {
                let d2: f64 = row
                    .iter()
                    .zip(&centroids[c * d..(c + 1) * d])
                    .map(|(&x, &m)| (x as f64 - m) * (x as f64 - m))
                    .sum();
                if d2 < best.1 {
                    best = (c, d2);
                }
            }
            assign[i] = best.0;
            wcss += best.1;
        }
        assert!(
            wcss <= prev_wcss * (1.0 + 1e-12) + 1e-9,
            "Lloyd WCSS increased: {prev_wcss} -> {wcss}"
        );
        if (prev_wcss - wcss).abs() <= 1e-12 * wcss.max(1.0) {
            prev_wcss = wcss;
            break;
        }
        prev_wcss = wcss;

        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0u64; k];
        for i in 0..n {
            let c = assign[i];
            counts[c] += 1;
            for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(features.row(i)) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
    }
    (centroids, prev_wcss.min(wcss))
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gaussian blob features in d dimensions around the given centers.
pub fn gaussian_blobs(
    seed: u64,
    centers: &[Vec<f64>],
    per_blob: usize,
    sigma: f64,
) -> FeatureMatrix {
    let mut r = rng(seed);
    let d = centers[0].len();
    let mut values = Vec::with_capacity(centers.len() * per_blob * d);
    let mut ids = Vec::new();
    for (b, c) in centers.iter().enumerate() {
        for i in 0..per_blob {
            for j in 0..d {
                values.push((c[j] + sigma * normal(&mut r)) as f32);
            }
            ids.push(tumorbed::mining::PatchId {
                slide_id: format!("blob{b}"),
                x: i as u32,
                y: 0,
            });
        }
    }
    FeatureMatrix::new(centers.len() * per_blob, d, values, ids).unwrap()
}
