//! Planar polyline geometry: spatial segment index, hull, line fits.

use std::collections::HashMap;

pub type P2 = [f64; 2];

#[inline]
pub fn dist(a: P2, b: P2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn point_segment_distance(p: P2, a: P2, b: P2) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Uniform-grid hash of segments for nearest-distance queries.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    cell: f64,
    segments: Vec<(P2, P2)>,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(cell: f64) -> Self {
        Self {
            cell,
            segments: Vec::new(),
            buckets: HashMap::new(),
        }
    }

    pub fn from_polylines<'a>(lines: impl IntoIterator<Item = &'a [P2]>, cell: f64) -> Self {
        let mut idx = Self::new(cell);
        for l in lines {
            idx.insert_polyline(l);
        }
        idx
    }

    fn key(&self, p: P2) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    pub fn insert_polyline(&mut self, line: &[P2]) {
        if line.len() == 1 {
            self.insert(line[0], line[0]);
        }
        for w in line.windows(2) {
            self.insert(w[0], w[1]);
        }
    }

    pub fn insert(&mut self, a: P2, b: P2) {
        let id = self.segments.len() as u32;
        self.segments.push((a, b));
        let (ka, kb) = (self.key(a), self.key(b));
        for i in ka.0.min(kb.0)..=ka.0.max(kb.0) {
            for j in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                self.buckets.entry((i, j)).or_default().push(id);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment(&self, id: usize) -> (P2, P2) {
        self.segments[id]
    }

    /// Distance from `p` to the nearest segment, if one lies within `radius`.
    pub fn nearest_within(&self, p: P2, radius: f64) -> Option<f64> {
        self.nearest_segment_within(p, radius).map(|(_, d)| d)
    }

    pub fn nearest_segment_within(&self, p: P2, radius: f64) -> Option<(usize, f64)> {
        let r = (radius / self.cell).ceil() as i64;
        let k = self.key(p);
        let mut best: Option<(usize, f64)> = None;
        for i in k.0 - r..=k.0 + r {
            for j in k.1 - r..=k.1 + r {
                if let Some(ids) = self.buckets.get(&(i, j)) {
                    for &id in ids {
                        let (a, b) = self.segments[id as usize];
                        let d = point_segment_distance(p, a, b);
                        if d <= radius && best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((id as usize, d));
                        }
                    }
                }
            }
        }
        best
    }

    /// Segment ids whose bucket range touches the box around `p`.
    pub fn candidates(&self, p: P2, radius: f64) -> Vec<usize> {
        let r = (radius / self.cell).ceil() as i64;
        let k = self.key(p);
        let mut out = Vec::new();
        for i in k.0 - r..=k.0 + r {
            for j in k.1 - r..=k.1 + r {
                if let Some(ids) = self.buckets.get(&(i, j)) {
                    out.extend(ids.iter().map(|&x| x as usize));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Directed Hausdorff distance from polylines `a` to polylines `b`, sampling
/// `a` at its vertices and segment midpoints. Returns `cap` if some sample has
/// no segment of `b` within `cap`.
pub fn directed_hausdorff(a: &[Vec<P2>], b: &SegmentIndex, cap: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for line in a {
        let mut probe = |p: P2| {
            let d = b.nearest_within(p, cap).unwrap_or(cap);
            worst = worst.max(d);
        };
        for (i, &v) in line.iter().enumerate() {
            probe(v);
            if let Some(&w) = line.get(i + 1) {
                probe([(v[0] + w[0]) / 2.0, (v[1] + w[1]) / 2.0]);
            }
        }
    }
    worst
}

pub fn hausdorff(a: &[Vec<P2>], b: &[Vec<P2>], cap: f64) -> f64 {
    let ia = SegmentIndex::from_polylines(a.iter().map(|v| v.as_slice()), cap.max(1e-3));
    let ib = SegmentIndex::from_polylines(b.iter().map(|v| v.as_slice()), cap.max(1e-3));
    directed_hausdorff(a, &ib, cap).max(directed_hausdorff(b, &ia, cap))
}

/// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
pub fn convex_hull(points: &[P2]) -> Vec<P2> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: P2, a: P2, b: P2| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<P2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

pub fn diameter(points: &[P2]) -> f64 {
    let h = convex_hull(points);
    let mut d: f64 = 0.0;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            d = d.max(dist(h[i], h[j]));
        }
    }
    d
}

/// Shoelace area of a closed polygon (positive when counter-clockwise).
pub fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    s / 2.0
}

/// Winding number of a closed polygon about `p`.
pub fn winding_number(poly: &[P2], p: P2) -> i32 {
    let n = poly.len();
    let mut w = 0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let side = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && side > 0.0 {
                w += 1;
            }
        } else if b[1] <= p[1] && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Total-least-squares line: centroid and unit direction of largest spread.
pub fn tls_fit(points: &[P2]) -> (P2, P2) {
    let n = points.len().max(1) as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points {
        cx += p[0];
        cy += p[1];
    }
    cx /= n;
    cy /= n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    ([cx, cy], [theta.cos(), theta.sin()])
}

/// `(extent along d, full width across d)` of a point set.
pub fn strip_extent(points: &[P2], d: P2) -> (f64, f64) {
    let (mut amin, mut amax, mut pmin, mut pmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        let a = p[0] * d[0] + p[1] * d[1];
        let q = -p[0] * d[1] + p[1] * d[0];
        amin = amin.min(a);
        amax = amax.max(a);
        pmin = pmin.min(q);
        pmax = pmax.max(q);
    }
    if points.is_empty() {
        return (0.0, 0.0);
    }
    (amax - amin, pmax - pmin)
}

fn segments_cross(a: P2, b: P2, c: P2, d: P2) -> bool {
    let orient = |p: P2, q: P2, r: P2| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Proper crossing between two non-adjacent segments of a closed polyline.
pub fn self_intersects(poly: &[P2], closed: bool) -> bool {
    let n = poly.len();
    if n < 4 {
        return false;
    }
    let segs = if closed { n } else { n - 1 };
    let mut longest: f64 = 1e-9;
    for i in 0..segs {
        longest = longest.max(dist(poly[i], poly[(i + 1) % n]));
    }
    let mut idx = SegmentIndex::new(longest);
    for i in 0..segs {
        idx.insert(poly[i], poly[(i + 1) % n]);
    }
    for i in 0..segs {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in idx.candidates(a, longest) {
            if j <= i + 1 || (closed && i == 0 && j == segs - 1) {
                continue;
            }
            let (c, d) = idx.segment(j);
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}
