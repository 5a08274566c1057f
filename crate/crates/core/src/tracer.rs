//! Level lines `f(x, y) = c` of a restricted function.
//!
//! The tracer is a predictor–corrector continuation: the predictor steps
//! along the unit tangent, the corrector projects back onto the level set
//! along the gradient. Orientation `+1` follows `(f_y, −f_x)`, which is the
//! direction of `∇ε × B` in a right-handed frame; loops around maxima are
//! then traversed counter-clockwise.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dispersion::DispersionModel;
use crate::error::{Error, Result};
use crate::geometry::{self, dist, SegmentIndex, P2};
use crate::homology::{shift_from, PeriodicUnionFind};
use crate::lattice::{self, DirectionKind};
use crate::linalg::{self, integer_rank};
use crate::section::{PlaneSection, RestrictedFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub h_min: f64,
    pub h_max: f64,
    pub tol_level: f64,
    pub tol_close: f64,
    pub g_min: f64,
    /// Largest accepted tangent turn per step (radians).
    pub max_turn: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            h_min: 1e-4,
            h_max: 0.05,
            tol_level: 1e-9,
            tol_close: 3e-4,
            g_min: 1e-7,
            max_turn: 0.04,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_arc_length: f64,
    pub window_radius: f64,
}

impl Limits {
    pub fn new(max_arc_length: f64, window_radius: f64) -> Self {
        Self {
            max_arc_length,
            window_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    Closed,
    MaxLength,
    SaddleProximity,
    LeftWindow,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Closed => "CLOSED",
            Termination::MaxLength => "MAX_LENGTH",
            Termination::SaddleProximity => "SADDLE_PROXIMITY",
            Termination::LeftWindow => "LEFT_WINDOW",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub level: f64,
    pub vertices: Vec<P2>,
    /// Cumulative arc length at each vertex.
    pub arc: Vec<f64>,
    /// `[xmin, xmax, ymin, ymax]`
    pub bbox: [f64; 4],
    pub termination: Termination,
    pub closure_residual: f64,
    pub orientation: i8,
    pub saddle_events: Vec<P2>,
}

impl Trajectory {
    fn start(level: f64, z: P2, orientation: i8) -> Self {
        Self {
            level,
            vertices: vec![z],
            arc: vec![0.0],
            bbox: [z[0], z[0], z[1], z[1]],
            termination: Termination::MaxLength,
            closure_residual: f64::NAN,
            orientation,
            saddle_events: Vec::new(),
        }
    }

    fn push(&mut self, z: P2) {
        let last = *self.vertices.last().unwrap();
        let s = self.arc_length() + dist(last, z);
        self.vertices.push(z);
        self.arc.push(s);
        self.bbox[0] = self.bbox[0].min(z[0]);
        self.bbox[1] = self.bbox[1].max(z[0]);
        self.bbox[2] = self.bbox[2].min(z[1]);
        self.bbox[3] = self.bbox[3].max(z[1]);
    }

    pub fn arc_length(&self) -> f64 {
        self.arc.last().copied().unwrap_or(0.0)
    }

    pub fn is_closed(&self) -> bool {
        self.termination == Termination::Closed
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn first(&self) -> P2 {
        self.vertices[0]
    }

    pub fn last(&self) -> P2 {
        *self.vertices.last().unwrap()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        (self.bbox[1] - self.bbox[0]).hypot(self.bbox[3] - self.bbox[2])
    }

    /// Maximum distance between vertices, via the convex hull.
    pub fn diameter(&self) -> f64 {
        geometry::diameter(&self.vertices)
    }

    /// Largest distance of a vertex from the first one.
    pub fn max_excursion(&self) -> f64 {
        let z0 = self.first();
        self.vertices.iter().map(|&v| dist(v, z0)).fold(0.0, f64::max)
    }

    pub fn index(&self, cell: f64) -> SegmentIndex {
        SegmentIndex::from_polylines([self.vertices.as_slice()], cell)
    }

    /// Vertex chain traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut v = self.vertices.clone();
        v.reverse();
        let total = self.arc_length();
        let arc = self.arc.iter().rev().map(|s| total - s).collect();
        Self {
            vertices: v,
            arc,
            orientation: -self.orientation,
            ..self.clone()
        }
    }
}

#[inline]
fn tangent(g: [f64; 2], orientation: f64) -> Option<P2> {
    let n = g[0].hypot(g[1]);
    (n > 0.0).then(|| [orientation * g[1] / n, -orientation * g[0] / n])
}

/// Newton projection onto `f = c` along the gradient.
fn project(f: &RestrictedFunction, c: f64, z: P2, tol: f64, iters: usize, max_move: f64) -> Option<P2> {
    let mut p = z;
    for _ in 0..iters {
        let (v, g) = f.value_grad(p[0], p[1]);
        let r = v - c;
        if r.abs() <= tol {
            return Some(p);
        }
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 < 1e-300 {
            return None;
        }
        p = [p[0] - r * g[0] / g2, p[1] - r * g[1] / g2];
        if dist(p, z) > max_move {
            return None;
        }
    }
    let (v, _) = f.value_grad(p[0], p[1]);
    ((v - c).abs() <= tol).then_some(p)
}

/// Newton iteration on `∇f = 0`; returns the critical point and `det H`.
fn critical_point(f: &RestrictedFunction, z: P2, max_move: f64) -> Option<(P2, f64)> {
    let mut p = z;
    for _ in 0..40 {
        let (_, g, h) = f.value_grad_hess(p[0], p[1]);
        let det = h[0] * h[2] - h[1] * h[1];
        if g[0].hypot(g[1]) < 1e-13 {
            return Some((p, det));
        }
        if det.abs() < 1e-300 {
            return None;
        }
        let dx = (h[2] * g[0] - h[1] * g[1]) / det;
        let dy = (-h[1] * g[0] + h[0] * g[1]) / det;
        p = [p[0] - dx, p[1] - dy];
        if dist(p, z) > max_move {
            return None;
        }
        if dx.hypot(dy) < 1e-15 {
            let det = {
                let (_, _, h) = f.value_grad_hess(p[0], p[1]);
                h[0] * h[2] - h[1] * h[1]
            };
            return Some((p, det));
        }
    }
    let (_, g, h) = f.value_grad_hess(p[0], p[1]);
    (g[0].hypot(g[1]) < 1e-10).then_some((p, h[0] * h[2] - h[1] * h[1]))
}

/// Tracing engine bound to one restricted function.
#[derive(Debug, Clone)]
pub struct Tracer {
    pub f: RestrictedFunction,
    pub params: TraceParams,
}

impl Tracer {
    pub fn new(model: &DispersionModel, section: &PlaneSection, params: TraceParams) -> Self {
        Self {
            f: RestrictedFunction::new(model, section),
            params,
        }
    }

    pub fn project_seed(&self, c: f64, seed: P2) -> Result<P2> {
        project(&self.f, c, seed, self.params.tol_level, 20, 1.0).ok_or(Error::SeedProjectionFailed {
            x: seed[0],
            y: seed[1],
        })
    }

    /// A saddle on the level near `z`, if any.
    fn saddle_near(&self, c: f64, z: P2) -> Option<P2> {
        let (zs, det) = critical_point(&self.f, z, 20.0 * self.params.h_max)?;
        let v = self.f.value(zs[0], zs[1]);
        (det < 0.0 && (v - c).abs() <= 1e-6).then_some(zs)
    }

    pub fn trace(&self, c: f64, seed: P2, orientation: i8, limits: Limits) -> Result<Trajectory> {
        let p = &self.params;
        let o = f64::from(orientation.signum());
        let z0 = self.project_seed(c, seed)?;
        let mut traj = Trajectory::start(c, z0, orientation.signum());
        let (_, g0) = self.f.value_grad(z0[0], z0[1]);
        let t0 = match tangent(g0, o).filter(|_| g0[0].hypot(g0[1]) >= p.g_min) {
            Some(t) => t,
            None => {
                return match self.saddle_near(c, z0) {
                    Some(zs) => {
                        traj.saddle_events.push(zs);
                        traj.termination = Termination::SaddleProximity;
                        Ok(traj)
                    }
                    None => Err(Error::StagnantStep {
                        partial: Box::new(traj),
                    }),
                };
            }
        };
        let mut z = z0;
        let mut t = t0;
        let mut h = p.h_max * 0.5;
        let min_closing_arc = TAU * p.h_min;
        loop {
            let s = traj.arc_length();
            if s >= limits.max_arc_length {
                traj.termination = Termination::MaxLength;
                return Ok(traj);
            }
            if dist(z, seed) > limits.window_radius {
                traj.termination = Termination::LeftWindow;
                return Ok(traj);
            }
            // closure
            let d0 = dist(z, z0);
            let ahead = (z0[0] - z[0]) * t[0] + (z0[1] - z[1]) * t[1];
            let aligned = t[0] * t0[0] + t[1] * t0[1] > 0.5;
            if s >= min_closing_arc && traj.len() > 2 && aligned {
                if d0 <= p.tol_close && ahead >= -p.tol_close {
                    traj.termination = Termination::Closed;
                    traj.closure_residual = d0;
                    return Ok(traj);
                }
                if ahead > 0.0 && d0 <= h + p.tol_close && d0 <= p.h_max {
                    if let Some(zn) = project(&self.f, c, [z[0] + d0 * t[0], z[1] + d0 * t[1]], p.tol_level, 8, d0) {
                        let r = dist(zn, z0);
                        if r <= p.tol_close && dist(zn, z) >= p.h_min {
                            traj.push(zn);
                            traj.termination = Termination::Closed;
                            traj.closure_residual = r;
                            return Ok(traj);
                        }
                    }
                }
            }
            // predictor–corrector step with rejection
            let mut accepted = None;
            while h >= p.h_min {
                let zp = [z[0] + h * t[0], z[1] + h * t[1]];
                if let Some(zn) = project(&self.f, c, zp, p.tol_level, 8, h) {
                    let spacing = dist(zn, z);
                    let (_, gn) = self.f.value_grad(zn[0], zn[1]);
                    if let Some(tn) = tangent(gn, o) {
                        let cosang = (t[0] * tn[0] + t[1] * tn[1]).clamp(-1.0, 1.0);
                        let turn = cosang.acos();
                        let limit = if h <= 2.0 * p.h_min { 1.2 } else { p.max_turn };
                        if spacing >= p.h_min.max(0.5 * h) && spacing <= p.h_max && turn <= limit {
                            accepted = Some((zn, tn, gn, turn));
                            break;
                        }
                    }
                }
                h *= 0.5;
            }
            match accepted {
                Some((zn, tn, gn, turn)) => {
                    traj.push(zn);
                    z = zn;
                    t = tn;
                    if turn < 0.3 * p.max_turn {
                        h = (h * 1.5).min(p.h_max);
                    }
                    if gn[0].hypot(gn[1]) < p.g_min {
                        if let Some(zs) = self.saddle_near(c, z) {
                            traj.saddle_events.push(zs);
                            traj.termination = Termination::SaddleProximity;
                            return Ok(traj);
                        }
                    }
                }
                None => {
                    if let Some(zs) = self.saddle_near(c, z) {
                        traj.saddle_events.push(zs);
                        traj.termination = Termination::SaddleProximity;
                        return Ok(traj);
                    }
                    return Err(Error::StagnantStep {
                        partial: Box::new(traj),
                    });
                }
            }
        }
    }

    /// Sign changes of `f − c` on an `m × m` grid over `window`
    /// (`[xmin, xmax, ymin, ymax]`), projected onto the level and deduplicated.
    pub fn seeds(&self, c: f64, window: [f64; 4], m: usize) -> Vec<P2> {
        let m = m.max(2);
        let dx = (window[1] - window[0]) / (m - 1) as f64;
        let dy = (window[3] - window[2]) / (m - 1) as f64;
        let vals: Vec<f64> = (0..m * m)
            .map(|k| {
                let (i, j) = (k % m, k / m);
                self.f.value(window[0] + i as f64 * dx, window[2] + j as f64 * dy) - c
            })
            .collect();
        let dedup = self.params.h_max;
        let mut seen: HashMap<(i64, i64), Vec<P2>> = HashMap::new();
        let mut out = Vec::new();
        let mut consider = |a: P2, va: f64, b: P2, vb: f64, out: &mut Vec<P2>| {
            if (va >= 0.0) == (vb >= 0.0) {
                return;
            }
            let s = va / (va - vb);
            let guess = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let Some(z) = project(&self.f, c, guess, self.params.tol_level, 20, 1.0) else {
                return;
            };
            let key = ((z[0] / dedup).floor() as i64, (z[1] / dedup).floor() as i64);
            for di in -1..=1 {
                for dj in -1..=1 {
                    if let Some(v) = seen.get(&(key.0 + di, key.1 + dj)) {
                        if v.iter().any(|&w| dist(w, z) < dedup) {
                            return;
                        }
                    }
                }
            }
            seen.entry(key).or_default().push(z);
            out.push(z);
        };
        for j in 0..m {
            for i in 0..m {
                let a = [window[0] + i as f64 * dx, window[2] + j as f64 * dy];
                let va = vals[j * m + i];
                if i + 1 < m {
                    consider(a, va, [a[0] + dx, a[1]], vals[j * m + i + 1], &mut out);
                }
                if j + 1 < m {
                    consider(a, va, [a[0], a[1] + dy], vals[(j + 1) * m + i], &mut out);
                }
            }
        }
        out
    }
}

pub fn trace_level_line(
    model: &DispersionModel,
    section: &PlaneSection,
    c: f64,
    seed: P2,
    limits: Limits,
) -> Result<Trajectory> {
    Tracer::new(model, section, TraceParams::default()).trace(c, seed, 1, limits)
}

pub fn find_seeds(model: &DispersionModel, section: &PlaneSection, c: f64, window: [f64; 4], m: usize) -> Vec<P2> {
    Tracer::new(model, section, TraceParams::default()).seeds(c, window, m)
}

/// Isolines of `f = c` over `window` on a grid of cell size `h`, linear
/// interpolation on cell edges; saddle cells split by the centre value.
pub fn marching_squares(model: &DispersionModel, section: &PlaneSection, c: f64, window: [f64; 4], h: f64) -> Vec<Vec<P2>> {
    marching_squares_fn(&RestrictedFunction::new(model, section), c, window, h)
}

pub fn marching_squares_fn(f: &RestrictedFunction, c: f64, window: [f64; 4], h: f64) -> Vec<Vec<P2>> {
    let nx = (((window[1] - window[0]) / h).ceil() as usize).max(1);
    let ny = (((window[3] - window[2]) / h).ceil() as usize).max(1);
    let node = |i: usize, j: usize| [window[0] + i as f64 * h, window[2] + j as f64 * h];
    let vals: Vec<f64> = (0..(nx + 1) * (ny + 1))
        .map(|k| {
            let p = node(k % (nx + 1), k / (nx + 1));
            f.value(p[0], p[1]) - c
        })
        .collect();
    let v = |i: usize, j: usize| vals[j * (nx + 1) + i];
    // edge ids: horizontal (i,j)-(i+1,j) → 2·(j·(nx+1)+i); vertical (i,j)-(i,j+1) → +1
    let hid = |i: usize, j: usize| 2 * (j * (nx + 1) + i);
    let vid = |i: usize, j: usize| 2 * (j * (nx + 1) + i) + 1;
    let mut points: HashMap<usize, P2> = HashMap::new();
    let mut crossing = |id: usize, a: P2, va: f64, b: P2, vb: f64| {
        points.entry(id).or_insert_with(|| {
            let s = va / (va - vb);
            [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
        });
    };
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for j in 0..ny {
        for i in 0..nx {
            let c00 = v(i, j);
            let c10 = v(i + 1, j);
            let c11 = v(i + 1, j + 1);
            let c01 = v(i, j + 1);
            let bits = [c00 >= 0.0, c10 >= 0.0, c11 >= 0.0, c01 >= 0.0];
            // edges: bottom, right, top, left
            let edges = [hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)];
            let ends = [
                (node(i, j), c00, node(i + 1, j), c10),
                (node(i + 1, j), c10, node(i + 1, j + 1), c11),
                (node(i, j + 1), c01, node(i + 1, j + 1), c11),
                (node(i, j), c00, node(i, j + 1), c01),
            ];
            let crossed: Vec<usize> = (0..4)
                .filter(|&e| {
                    let (a, b) = match e {
                        0 => (0, 1),
                        1 => (1, 2),
                        2 => (3, 2),
                        _ => (0, 3),
                    };
                    bits[a] != bits[b]
                })
                .collect();
            for &e in &crossed {
                let (a, va, b, vb) = ends[e];
                crossing(edges[e], a, va, b, vb);
            }
            match crossed.len() {
                2 => link(edges[crossed[0]], edges[crossed[1]]),
                4 => {
                    let centre = (c00 + c10 + c11 + c01) / 4.0;
                    // corners differing from the centre are cut off
                    if (centre >= 0.0) == bits[0] {
                        // corners 1 and 3 isolated
                        link(edges[0], edges[1]);
                        link(edges[2], edges[3]);
                    } else {
                        // corners 0 and 2 isolated
                        link(edges[3], edges[0]);
                        link(edges[1], edges[2]);
                    }
                }
                _ => {}
            }
        }
    }
    // chain
    let mut used: HashMap<usize, bool> = HashMap::new();
    let mut keys: Vec<usize> = adj.keys().copied().collect();
    keys.sort_unstable();
    // open chains start at degree-1 nodes
    keys.sort_by_key(|k| (adj[k].len() != 1, *k));
    let mut lines = Vec::new();
    for &start in &keys {
        if used.get(&start).copied().unwrap_or(false) {
            continue;
        }
        let mut chain = vec![start];
        used.insert(start, true);
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = adj[&cur].iter().copied().find(|&n| n != prev && !used.get(&n).copied().unwrap_or(false));
            match next {
                Some(n) => {
                    used.insert(n, true);
                    chain.push(n);
                    prev = cur;
                    cur = n;
                }
                None => {
                    if chain.len() > 2 && adj[&cur].contains(&start) {
                        chain.push(start);
                    }
                    break;
                }
            }
        }
        lines.push(chain.iter().map(|id| points[id]).collect());
    }
    lines
}

/// Smallest irreducible reciprocal-lattice vector `w`, `‖w‖∞ ≤ q`, whose
/// in-plane translation maps the trajectory onto itself within `tol_close`.
pub fn detect_periodicity(trajectory: &Trajectory, section: &PlaneSection, q: i64, tol_close: f64) -> Result<Option<Vec<i64>>> {
    if trajectory.is_closed() {
        return Err(Error::Precondition("periodicity is undefined for a closed trajectory".into()));
    }
    let periods = section.in_plane_periods(q, 1e-9);
    if periods.is_empty() {
        return Ok(None);
    }
    let span = trajectory.max_excursion();
    let idx = trajectory.index(0.2);
    let n = trajectory.len();
    let mut candidates: Vec<(i64, f64, Vec<i64>, P2)> = periods
        .into_iter()
        .filter(|(_, t)| t[0].hypot(t[1]) * 2.0 <= span + tol_close)
        .map(|(w, t)| (linalg::inf_norm(&w), t[0].hypot(t[1]), w, t))
        .collect();
    candidates.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, _, w, t) in candidates {
        let mut ok = true;
        let mut tested = 0;
        for k in 0..32 {
            let v = trajectory.vertices[n / 4 + k * (n / 2) / 32];
            let plus = idx.nearest_within([v[0] + t[0], v[1] + t[1]], tol_close);
            let minus = idx.nearest_within([v[0] - t[0], v[1] - t[1]], tol_close);
            if plus.is_none() && minus.is_none() {
                ok = false;
                break;
            }
            tested += 1;
        }
        if ok && tested > 0 {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixArc {
    pub from: usize,
    /// Saddle class reached, or `None` when the arc left the budget.
    pub to: Option<usize>,
    /// Reciprocal-lattice translation between the lifts of the endpoints.
    pub translation: Vec<i64>,
    pub vertices: Vec<P2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixComplex {
    pub level: f64,
    pub saddles: Vec<P2>,
    pub arcs: Vec<SeparatrixArc>,
    pub bounded: bool,
    /// Integer classes of the cycles, in reciprocal-lattice coordinates.
    pub classes: Vec<Vec<i64>>,
    pub rank: usize,
}

/// Saddles, separatrices and cycle classes of the level `c` in a plane of
/// rational direction (`N = 3`).
pub fn build_separatrix_complex(
    model: &DispersionModel,
    section: &PlaneSection,
    c: f64,
    window: f64,
) -> Result<SeparatrixComplex> {
    let class = section.direction_class();
    if section.dim() != 3 || class.kind != DirectionKind::Rational {
        return Err(Error::NonRationalDirection);
    }
    let w = class.witness.clone().ok_or(Error::NonRationalDirection)?;
    let [n1, n2] = lattice::orthogonal_sublattice_basis(&w).ok_or(Error::NonRationalDirection)?;
    let lat = section.lattice();
    let t1 = section.project_vector(&lat.reciprocal_combination(&n1));
    let t2 = section.project_vector(&lat.reciprocal_combination(&n2));
    let det = t1[0] * t2[1] - t1[1] * t2[0];
    // fractional coordinates in the period basis
    let frac = |z: P2| -> [f64; 2] { [(z[0] * t2[1] - z[1] * t2[0]) / det, (t1[0] * z[1] - t1[1] * z[0]) / det] };
    let at = |a: f64, b: f64| -> P2 { [a * t1[0] + b * t2[0], a * t1[1] + b * t2[1]] };

    let params = TraceParams::default();
    let tracer = Tracer::new(model, section, params);
    let f = &tracer.f;

    // candidate critical points: local minima of |∇f|² on a periodic grid
    let g = 96usize;
    let gn: Vec<f64> = (0..g * g)
        .map(|k| {
            let z = at((k % g) as f64 / g as f64, (k / g) as f64 / g as f64);
            let (_, gr) = f.value_grad(z[0], z[1]);
            gr[0] * gr[0] + gr[1] * gr[1]
        })
        .collect();
    let cell = (t1[0].hypot(t1[1]).max(t2[0].hypot(t2[1]))) / g as f64;
    let mut saddles: Vec<P2> = Vec::new();
    let mut saddle_frac: Vec<[f64; 2]> = Vec::new();
    for j in 0..g {
        for i in 0..g {
            let v = gn[j * g + i];
            let mut is_min = true;
            'nb: for dj in [g - 1, 0, 1] {
                for di in [g - 1, 0, 1] {
                    if (di, dj) == (0, 0) {
                        continue;
                    }
                    let u = gn[((j + dj) % g) * g + (i + di) % g];
                    if u < v || (u == v && ((j + dj) % g, (i + di) % g) < (j, i)) {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if !is_min {
                continue;
            }
            let z = at(i as f64 / g as f64, j as f64 / g as f64);
            let Some((zc, hdet)) = critical_point(f, z, 4.0 * cell) else {
                continue;
            };
            let fv = f.value(zc[0], zc[1]);
            if (fv - c).abs() > 1e-8 {
                continue;
            }
            if hdet.abs() < 1e-10 {
                return Err(Error::MultipleSaddleUnresolved { x: zc[0], y: zc[1] });
            }
            if hdet > 0.0 {
                continue;
            }
            let fr = frac(zc);
            let fr = [fr[0] - fr[0].floor(), fr[1] - fr[1].floor()];
            let dup = saddle_frac.iter().any(|s| {
                let da = (s[0] - fr[0]).rem_euclid(1.0);
                let db = (s[1] - fr[1]).rem_euclid(1.0);
                da.min(1.0 - da) < 1e-7 && db.min(1.0 - db) < 1e-7
            });
            if !dup {
                saddles.push(at(fr[0], fr[1]));
                saddle_frac.push(fr);
            }
        }
    }

    let locate = |z: P2| -> Option<(usize, [i64; 2])> {
        let fr = frac(z);
        saddle_frac.iter().enumerate().find_map(|(k, s)| {
            let a = fr[0] - s[0];
            let b = fr[1] - s[1];
            let (ra, rb) = (a.round(), b.round());
            (dist(at(a - ra, b - rb), [0.0, 0.0]) < 1e-4).then_some((k, [ra as i64, rb as i64]))
        })
    };

    let period = t1[0].hypot(t1[1]) + t2[0].hypot(t2[1]);
    let limits = Limits::new(4.0 * period, window.max(2.0 * period));
    let mut uf = PeriodicUnionFind::new(saddles.len());
    let mut arcs = Vec::new();
    let mut bounded = true;
    for (k, &zs) in saddles.iter().enumerate() {
        let (_, _, hs) = f.value_grad_hess(zs[0], zs[1]);
        // eigenpairs of the symmetric Hessian
        let (a, b, d) = (hs[0], hs[1], hs[2]);
        let mean = (a + d) / 2.0;
        let rad = (((a - d) / 2.0).powi(2) + b * b).sqrt();
        let (l1, l2) = (mean + rad, mean - rad);
        let theta = 0.5 * (2.0 * b).atan2(a - d);
        let e1 = [theta.cos(), theta.sin()];
        let e2 = [-theta.sin(), theta.cos()];
        let (s1, s2) = (l2.abs().sqrt(), l1.sqrt());
        let n = s1.hypot(s2);
        let nulls = [
            [(s1 * e1[0] + s2 * e2[0]) / n, (s1 * e1[1] + s2 * e2[1]) / n],
            [(s1 * e1[0] - s2 * e2[0]) / n, (s1 * e1[1] - s2 * e2[1]) / n],
        ];
        for v in nulls {
            for sgn in [1.0, -1.0] {
                let dir = [sgn * v[0], sgn * v[1]];
                let delta = 1e-3;
                let start = [zs[0] + delta * dir[0], zs[1] + delta * dir[1]];
                let Some(z) = project(f, c, start, params.tol_level, 20, delta) else {
                    continue;
                };
                let (_, g0) = f.value_grad(z[0], z[1]);
                let orient = if g0[1] * dir[0] - g0[0] * dir[1] >= 0.0 { 1 } else { -1 };
                let traj = match tracer.trace(c, z, orient, limits) {
                    Ok(t) => t,
                    Err(Error::StagnantStep { partial }) => *partial,
                    Err(e) => return Err(e),
                };
                let end = match traj.termination {
                    Termination::SaddleProximity => traj.saddle_events.last().and_then(|&e| locate(e)),
                    _ => None,
                };
                match end {
                    Some((k2, off)) => {
                        let own = frac(zs);
                        let base = [own[0].floor() as i64, own[1].floor() as i64];
                        let rel = [off[0] - base[0], off[1] - base[1]];
                        let tr: Vec<i64> = (0..3).map(|i| rel[0] * n1[i] + rel[1] * n2[i]).collect();
                        uf.union(k, k2, shift_from(&tr));
                        arcs.push(SeparatrixArc {
                            from: k,
                            to: Some(k2),
                            translation: tr,
                            vertices: traj.vertices,
                        });
                    }
                    None => {
                        bounded = false;
                        arcs.push(SeparatrixArc {
                            from: k,
                            to: None,
                            translation: vec![0; 3],
                            vertices: traj.vertices,
                        });
                    }
                }
            }
        }
    }
    let mut classes: Vec<Vec<i64>> = Vec::new();
    for cyc in uf.cycles_by_component().into_values().flatten() {
        let mut v: Vec<i64> = cyc[..3].iter().map(|&x| i64::from(x)).collect();
        linalg::sign_normalize(&mut v);
        let v = linalg::primitive(&v);
        if !classes.contains(&v) {
            classes.push(v);
        }
    }
    classes.sort();
    if !classes.is_empty() {
        bounded = false;
    }
    let rank = integer_rank(&classes);
    Ok(SeparatrixComplex {
        level: c,
        saddles,
        arcs,
        bounded,
        classes,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sec(b: &[f64], p0: &[f64]) -> PlaneSection {
        PlaneSection::field(b, p0, &Lattice::cubic(3)).unwrap()
    }

    fn cos_sum() -> DispersionModel {
        DispersionModel::builtin("cos-sum").unwrap()
    }

    fn check_invariants(t: &Trajectory, f: &RestrictedFunction, p: &TraceParams) {
        for w in t.vertices.windows(2) {
            let s = dist(w[0], w[1]);
            assert!(s >= p.h_min * 0.999 && s <= p.h_max * 1.001, "spacing {s}");
        }
        for v in &t.vertices {
            assert!((f.value(v[0], v[1]) - t.level).abs() <= p.tol_level);
        }
    }

    #[test]
    fn small_loop_closes() {
        let m = cos_sum();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2 + 0.1]);
        let seeds = find_seeds(&m, &s, 0.0, [-PI, PI, -PI, PI], 32);
        assert!(!seeds.is_empty());
        let t = trace_level_line(&m, &s, 0.0, seeds[0], Limits::new(100.0, 50.0)).unwrap();
        assert_eq!(t.termination, Termination::Closed);
        assert!(t.closure_residual <= 3e-4);
        assert!(t.diameter() < TAU);
        check_invariants(&t, &RestrictedFunction::new(&m, &s), &TraceParams::default());
        // loop around the origin
        assert_eq!(geometry::winding_number(&t.vertices, [0.0, 0.0]).abs(), 1);
    }

    #[test]
    fn planes_give_straight_open_lines() {
        let m = DispersionModel::builtin("planes").unwrap();
        let b = [0.0, 1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let s = sec(&b, &[0.0; 3]);
        let seeds = find_seeds(&m, &s, 0.0, [-PI, PI, -PI, PI], 32);
        let t = trace_level_line(&m, &s, 0.0, seeds[0], Limits::new(200.0, 1e9)).unwrap();
        assert_eq!(t.termination, Termination::MaxLength);
        let (_, d) = geometry::tls_fit(&t.vertices);
        let (_, width) = geometry::strip_extent(&t.vertices, d);
        assert!(width <= 1e-9, "width {width}");
        check_invariants(&t, &RestrictedFunction::new(&m, &s), &TraceParams::default());
    }

    #[test]
    fn separatrix_level_stops_at_saddles() {
        let m = cos_sum();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2]);
        let t = trace_level_line(&m, &s, 0.0, [FRAC_PI_2, FRAC_PI_2 + 0.01], Limits::new(100.0, 50.0)).unwrap();
        assert_eq!(t.termination, Termination::SaddleProximity);
        let e = t.saddle_events[0];
        // saddle images of (0, π) and (π, 0)
        let near = |a: f64, b: f64| (e[0] - a).rem_euclid(TAU).min((a - e[0]).rem_euclid(TAU)) < 1e-6
            && (e[1] - b).rem_euclid(TAU).min((b - e[1]).rem_euclid(TAU)) < 1e-6;
        assert!(near(0.0, PI) || near(PI, 0.0), "{e:?}");
    }

    #[test]
    fn seed_projection_fails_at_extremum() {
        let m = cos_sum();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        assert!(matches!(
            trace_level_line(&m, &s, 1.0, [0.0, 0.0], Limits::new(10.0, 10.0)),
            Err(Error::SeedProjectionFailed { .. })
        ));
    }

    #[test]
    fn reversal_retraces_the_chain() {
        let m = cos_sum();
        let s = sec(&[0.3, 0.5, 1.0], &[0.2, 0.1, 0.4]);
        let tr = Tracer::new(&m, &s, TraceParams::default());
        let seeds = tr.seeds(0.3, [-PI, PI, -PI, PI], 32);
        let fwd = tr.trace(0.3, seeds[0], 1, Limits::new(30.0, 1e9)).unwrap();
        let bwd = tr.trace(0.3, fwd.last(), -1, Limits::new(fwd.arc_length() - 0.01, 1e9)).unwrap();
        let idx = fwd.index(0.2);
        for v in &bwd.vertices {
            assert!(idx.nearest_within(*v, 1e-3).unwrap() <= 3e-4);
        }
    }

    #[test]
    fn seed_examples() {
        let m = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let seeds = find_seeds(&m, &s, 0.0, [-PI, PI, -PI, PI], 32);
        assert!(!seeds.is_empty());
        for z in &seeds {
            assert!((z[0].abs() - FRAC_PI_2).abs() < 1e-9);
        }
        assert!(find_seeds(&cos_sum(), &s, 3.5, [-PI, PI, -PI, PI], 32).is_empty());
    }

    #[test]
    fn marching_squares_examples() {
        let planes = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let h = TAU / 128.0;
        let lines = marching_squares(&planes, &s, 0.0, [-PI, PI, -PI, PI], h);
        assert_eq!(lines.len(), 2);
        for l in &lines {
            for p in l {
                assert!((p[0].abs() - FRAC_PI_2).abs() < h);
            }
        }
        assert!(marching_squares(&cos_sum(), &s, 3.5, [-PI, PI, -PI, PI], h).is_empty());
        let s2 = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2 + 0.1]);
        let h = TAU / 512.0;
        let loops = marching_squares(&cos_sum(), &s2, 0.0, [-PI, PI, -PI, PI], h);
        assert_eq!(loops.len(), 1);
        let l = &loops[0];
        assert_eq!(l.first(), l.last());
        let seeds = find_seeds(&cos_sum(), &s2, 0.0, [-PI, PI, -PI, PI], 32);
        let t = trace_level_line(&cos_sum(), &s2, 0.0, seeds[0], Limits::new(100.0, 50.0)).unwrap();
        assert!(geometry::hausdorff(&[t.vertices.clone()], &loops, 1.0) <= 2.0 * h);
        assert!((t.diameter() - geometry::diameter(l)).abs() <= 2.0 * h);
    }

    #[test]
    fn periodicity_of_straight_lines() {
        let planes = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0; 3]);
        let t = trace_level_line(&planes, &s, 0.0, [FRAC_PI_2, 0.0], Limits::new(40.0, 1e9)).unwrap();
        assert_eq!(detect_periodicity(&t, &s, 5, 3e-4).unwrap(), Some(vec![0, 1, 0]));
        let m = cos_sum();
        let s2 = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2 + 0.1]);
        let seeds = find_seeds(&m, &s2, 0.0, [-PI, PI, -PI, PI], 32);
        let closed = trace_level_line(&m, &s2, 0.0, seeds[0], Limits::new(100.0, 50.0)).unwrap();
        assert!(matches!(detect_periodicity(&closed, &s2, 5, 3e-4), Err(Error::Precondition(_))));
    }

    #[test]
    fn separatrix_net_of_cos_sum() {
        let m = cos_sum();
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, FRAC_PI_2]);
        let cx = build_separatrix_complex(&m, &s, 0.0, 40.0).unwrap();
        assert_eq!(cx.saddles.len(), 2);
        assert!(!cx.bounded);
        assert_eq!(cx.rank, 2);
        assert!(cx.classes.iter().all(|v| v[2] == 0));
        let s = sec(&[0.0, 0.0, 1.0], &[0.0, 0.0, 0.3]);
        let cx = build_separatrix_complex(&m, &s, 0.5, 40.0).unwrap();
        assert!(cx.saddles.is_empty() && cx.bounded && cx.rank == 0);
        let planes = DispersionModel::builtin("planes").unwrap();
        let s = sec(&[1.0, 2.0, 2.0], &[0.0; 3]);
        assert!(build_separatrix_complex(&planes, &s, 0.0, 40.0).unwrap().saddles.is_empty());
        let g = sec(&[1.0, 2f64.sqrt(), 3f64.sqrt()], &[0.0; 3]);
        assert!(matches!(build_separatrix_complex(&m, &g, 0.0, 40.0), Err(Error::NonRationalDirection)));
    }
}
